"""Command-line entry point: ``twotimescale <subcommand> CONFIG [options]``.

Subcommands
-----------
theory    noise covariances, asymptotic covariances, drive matrix, rates
simulate  Monte-Carlo ensemble -> CSV
sweep     repeat `simulate` over a list of xi or beta values
classify  stability-class membership of a block system
rl        simulate a compiled GTD/GTD2/TDC problem -> CSV with theta*
validate  check the standing assumptions

CONFIG is a file path or the name of a bundled preset (``fig1a``,
``fig1b``, ``fig3``, ``polyak``, ``prop4_a`` ... ``prop4_e``, ``rl_tdc``).
Exit status: 0 success, 2 configuration error, 3 numerical failure.
Divergent runs are data, not errors.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import engine, rl, theory
from .chain import ChainError
from .classify import classify
from .config import ConfigError, ExperimentConfig, resolve_config
from .densemat import NumericalError, norm2
from .problem import validate

CSV_HEADER = ["k", "alpha_k", "beta_k", "norm_Eyy", "norm_Exy", "norm_Exx", "ratio_y", "ratio_x",
              "stderr_y", "diverged_paths", "theory_norm_sigma_y"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# -- experiment plumbing (also used by tests and demos) -------------------------

def model_problem(cfg: ExperimentConfig):
    """The TwoTimeScaleProblem a config describes (compiling RL configs)."""
    if cfg.kind in ("problem", "polyak"):
        return cfg.problem
    if cfg.kind == "mdp":
        r = cfg.rl
        return rl.compile(r.algorithm, r.mdp, r.policies, r.features)
    raise ConfigError(f"a [{cfg.kind}] configuration does not define a stochastic problem")


def effective_schedule(cfg: ExperimentConfig, problem=None) -> engine.StepSchedule:
    """Schedule with ``beta = auto`` resolved to ``beta_factor / min Re eig(Delta)``."""
    if not cfg.beta_auto:
        return cfg.schedule
    problem = problem or model_problem(cfg)
    lam = float(np.min(np.linalg.eigvals(problem.summary.Delta).real))
    if lam <= 0:
        raise NumericalError("beta = auto needs -Delta Hurwitz")
    return replace(cfg.schedule, beta=cfg.beta_factor / lam)


def theory_sigma(problem, beta: float):
    """Sigma triple, or None when the shifted slow matrix is not stable."""
    try:
        return theory.sigma_triple(problem, theory.gamma_via_poisson(problem), beta)
    except theory.HurwitzError:
        return None


def run_experiment(cfg: ExperimentConfig):
    """Run the ensemble a config describes; returns (stats, problem, schedule, sigma)."""
    problem = model_problem(cfg)
    sched = effective_schedule(cfg, problem)
    sim = cfg.simulation
    stats = engine.monte_carlo(problem, sched, mode=sim.mode, paths=sim.paths, horizon=sim.horizon,
                               checkpoints=sim.checkpoint_list(), seed=sim.seed,
                               init=sim.init_policy(), kappa=sim.kappa, workers=sim.workers)
    sigma = theory_sigma(problem, sched.beta) if sim.mode != "single" else None
    return stats, problem, sched, sigma


def _fmt(v, precision: int) -> str:
    return f"{float(v):.{precision}g}"


def write_csv(stream, stats: engine.EnsembleStats, sigma_norm: float, precision: int = 17,
              extra: dict | None = None) -> None:
    """One row per checkpoint; `extra` maps column -> per-row value or constant."""
    extra = extra or {}
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER + list(extra))
    nyy, nxy, nxx = stats.norm_Eyy, stats.norm_Exy, stats.norm_Exx
    for i, k in enumerate(stats.checkpoints):
        row = [str(int(k))] + [_fmt(v, precision) for v in (
            stats.alpha_k[i], stats.beta_k[i], nyy[i], nxy[i], nxx[i], stats.ratio_y[i],
            stats.ratio_x[i], stats.stderr_y[i])]
        row += [str(int(stats.diverged_paths[i])), _fmt(sigma_norm, precision)]
        for v in extra.values():
            row.append(_fmt(v[i] if np.ndim(v) else v, precision))
        w.writerow(row)


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline=""), True


def _emit(path, write) -> None:
    fh, close = _open_out(path)
    try:
        write(fh)
    finally:
        if close:
            fh.close()


# -- subcommands ---------------------------------------------------------------

def _array(a) -> str:
    return np.array2string(np.asarray(a), precision=10, suppress_small=True, max_line_width=120)


def cmd_theory(cfg: ExperimentConfig, args) -> int:
    """Print noise covariances, asymptotic covariances, drive matrix and rates."""
    problem = model_problem(cfg)
    sched = effective_schedule(cfg, problem)
    s = problem.summary
    out = [f"states: {problem.n}  dy: {problem.dy}  dx: {problem.dx}",
           f"mean A (stacked):\n{_array(s.A)}", f"Delta:\n{_array(s.Delta)}",
           f"y*: {_array(s.y_star)}", f"x*: {_array(s.x_star)}"]
    g = theory.gamma_via_poisson(problem)
    g2 = theory.gamma_via_autocovariance(problem)
    gap = max(np.max(np.abs(getattr(g, k) - getattr(g2, k))) for k in ("Gamma_x", "Gamma_xy", "Gamma_y"))
    out += [f"Gamma_x:\n{_array(g.Gamma_x)}", f"Gamma_xy:\n{_array(g.Gamma_xy)}", f"Gamma_y:\n{_array(g.Gamma_y)}",
            f"Poisson vs autocovariance max difference: {gap:.3e}"]
    report = validate(problem, sched)
    out += ["assumptions:"] + ["  " + ln for ln in report.lines()]
    try:
        sig = theory.sigma_triple(problem, g, sched.beta)
    except theory.HurwitzError as exc:
        out.append(f"Sigma: not defined ({exc})")
    else:
        out += [f"Sigma_x:\n{_array(sig.Sigma_x)}", f"Sigma_xy:\n{_array(sig.Sigma_xy)}",
                f"Sigma_y (beta={sched.beta:g}):\n{_array(sig.Sigma_y)}",
                f"norm Sigma_y: {norm2(sig.Sigma_y):.17g}", f"trace Sigma_y: {np.trace(sig.Sigma_y):.17g}",
                f"drive matrix:\n{_array(theory.drive_matrix(problem, g, sig))}"]
        if cfg.kind == "polyak":
            pol = theory.polyak_sigma(s.A22, g.Gamma_x)
            out += [f"closed form A^-1 Gamma A^-T:\n{_array(pol)}",
                    f"max difference to Sigma_y: {np.max(np.abs(pol - sig.Sigma_y)):.3e}"]
        try:
            rates = theory.rate_exponents(sched, s.Delta)
            out.append(f"rate exponents: y {rates.exp_y:.6g}  xy {rates.exp_xy:.6g}  x {rates.exp_x:.6g}"
                       f"  (varrho {rates.varrho:.6g})")
        except theory.HurwitzError:
            pass
    out.append(f"beta threshold 1/(2 min Re eig Delta): {theory.beta_threshold(s.Delta):.6g}")
    if cfg.kind == "mdp":
        r = cfg.rl
        out.append(f"theta* = A^-1 b: {_array(rl.theta_star(r.mdp, r.policies, r.features))}")
        out.append(rl.precheck(r.algorithm, r.mdp, r.policies, r.features, sched.beta).line())
    print("\n".join(out))
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    """Run the Monte-Carlo ensemble and write per-checkpoint CSV."""
    stats, problem, sched, sigma = run_experiment(cfg)
    norm = norm2(sigma.Sigma_y) if sigma is not None else float("nan")
    _emit(args.out or cfg.csv, lambda fh: write_csv(fh, stats, norm, cfg.precision))
    if stats.all_diverged:
        print("all paths diverged", file=sys.stderr)
    return EXIT_OK


def _values(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot read sweep values {text!r}") from None


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    """Repeat simulate over a comma list of xi or beta values."""
    if (args.xi is None) == (args.beta is None):
        raise ConfigError("sweep needs exactly one of --xi or --beta (comma-separated values)")
    param = "xi" if args.xi is not None else "beta"
    values = _values(args.xi if args.xi is not None else args.beta)
    outdir = args.out or f"sweep_{cfg.name or 'run'}_{param}"
    os.makedirs(outdir, exist_ok=True)
    summary = [["param", "value", "k", "ratio_y", "stderr_y", "diverged_paths", "theory_norm_sigma_y"]]
    for v in values:
        c = cfg.with_overrides(**{param: v})
        stats, _, _, sigma = run_experiment(c)
        norm = norm2(sigma.Sigma_y) if sigma is not None else float("nan")
        with open(os.path.join(outdir, f"{param}_{v:g}.csv"), "w", encoding="utf-8", newline="") as fh:
            write_csv(fh, stats, norm, cfg.precision)
        summary.append([param, _fmt(v, cfg.precision), str(int(stats.checkpoints[-1])),
                        _fmt(stats.ratio_y[-1], cfg.precision), _fmt(stats.stderr_y[-1], cfg.precision),
                        str(int(stats.diverged_paths[-1])), _fmt(norm, cfg.precision)])
    with open(os.path.join(outdir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(summary)
    print(f"wrote {len(values)} runs and summary.csv to {outdir}")
    return EXIT_OK


def cmd_classify(cfg: ExperimentConfig, args) -> int:
    """Report stability-class membership of a block system."""
    if cfg.kind == "system":
        system = cfg.system
    else:
        from .classify import BlockSystem
        s = model_problem(cfg).summary
        system = BlockSystem(s.A11, s.A12, s.A21, s.A22)
    c = classify(system, cfg.kappa_grid)
    print(c.membership_line())
    print(f"class: {c.label()}")
    if c.kappa is not None:
        print(f"witness kappa (largest margin): {c.kappa:.6g}  margin {c.margin:.6g}")
        print(f"smallest witness kappa on grid: {c.kappa_smallest:.6g}")
    for r in c.reasons:
        print(f"  - {r}")
    return EXIT_OK


def cmd_rl(cfg: ExperimentConfig, args) -> int:
    """Simulate a compiled GTD/GTD2/TDC problem; CSV includes theta*."""
    if cfg.kind != "mdp":
        raise ConfigError("rl needs an [mdp] configuration")
    r = cfg.rl
    stats, problem, sched, sigma = run_experiment(cfg)
    pre = rl.precheck(r.algorithm, r.mdp, r.policies, r.features, sched.beta)
    print(pre.line(), file=sys.stderr)
    theta = rl.theta_star(r.mdp, r.policies, r.features)
    norm = norm2(sigma.Sigma_y) if sigma is not None else float("nan")
    tr = float(np.trace(sigma.Sigma_y)) if sigma is not None else float("nan")
    extra = {f"theta_star_{i}": t for i, t in enumerate(theta)}
    extra["trace_sigma_theta"] = tr
    extra["trace_ratio_theta"] = np.trace(stats.E_yy, axis1=1, axis2=2) / stats.beta_k
    _emit(args.out or cfg.csv, lambda fh: write_csv(fh, stats, norm, cfg.precision, extra))
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, args) -> int:
    """Check the standing assumptions (advisory)."""
    problem = model_problem(cfg)
    sched = effective_schedule(cfg, problem)
    report = validate(problem, sched)
    print("\n".join(report.lines()))
    print("all conditions hold" if report.ok else "some conditions fail (advisory)")
    return EXIT_OK


COMMANDS = {"theory": cmd_theory, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "classify": cmd_classify, "rl": cmd_rl, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twotimescale",
                                description="Linear two-time-scale stochastic approximation with Markov noise.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else None)
        sp.add_argument("config", help="config file or bundled preset name")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (results do not depend on it)")
        sp.add_argument("--seed", type=int, default=None, help="override simulation.seed")
        sp.add_argument("--out", default=None, help="output CSV (directory for sweep)")
        sp.add_argument("--paths", type=int, default=None, help="override simulation.paths")
        sp.add_argument("--horizon", type=int, default=None, help="override simulation.horizon")
        if name == "sweep":
            sp.add_argument("--xi", default=None, help="comma-separated xi values")
            sp.add_argument("--beta", default=None, help="comma-separated beta values")
        else:
            sp.add_argument("--xi", type=float, default=None, help="override schedule.xi")
            sp.add_argument("--beta", type=float, default=None, help="override schedule.beta")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        over = dict(seed=args.seed, workers=args.workers, paths=args.paths, horizon=args.horizon)
        if args.command != "sweep":
            over.update(xi=args.xi, beta=args.beta)
        try:
            cfg = cfg.with_overrides(**over)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ChainError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
