"""Experiment configuration: a flat, sectioned key/value text format.

Example::

    [chain]
    P = 5/8 3/8; 3/4 1/4

    [problem]
    A11[0] = -0.5
    A11[1] = -2
    ...

    [schedule]
    alpha = 1
    beta = 1
    xi = 0.75

    [simulation]
    paths = 2000
    horizon = 100000
    seed = 1

Matrices are written row by row: rows separated by ``;``, entries by
whitespace or commas; entries may be fractions such as ``5/8``.  Per-state
tables use one key per chain state, ``NAME[o]``.  Exactly one of the
``[problem]``, ``[mdp]`` or ``[system]`` sections describes the model.
Unknown sections and keys are rejected.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .chain import ChainError, ChainSpec
from .classify import BlockSystem, default_kappa_grid
from .engine import InitPolicy, StepSchedule, log_checkpoints, polyak_problem
from .problem import TwoTimeScaleProblem
from .rl import ALGORITHMS, FeatureMap, MDPSpec, PolicyPair, random_instance


class ConfigError(ValueError):
    """Bad configuration; the message names the offending key."""


_KEYS = {
    "meta": {"name", "description"},
    "chain": {"P"},
    "schedule": {"alpha", "beta", "xi", "K0", "beta_factor"},
    "simulation": {"mode", "kappa", "paths", "horizon", "seed", "init", "init_low", "init_high",
                   "y0", "x0", "chain_start", "checkpoints", "per_decade", "workers"},
    "output": {"csv", "precision"},
    "system": {"A11", "A12", "A21", "A22", "kappa_grid"},
    "mdp": {"algorithm", "gamma", "r", "pi_b", "pi", "Phi", "random_seed", "nS", "nA", "d",
            "feature_scale"},
}
_PROBLEM_TABLES = ("A11", "A12", "A21", "A22", "b1", "b2")
_POLYAK_TABLES = ("A", "b")
_INDEXED = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\[(\d+)\]$")


# -- value parsing -------------------------------------------------------------

def _number(tok: str, key: str) -> float:
    try:
        return float(Fraction(tok)) if "/" in tok else float(tok)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{key}: cannot read {tok!r} as a number") from None


def parse_matrix(text: str, key: str = "value") -> np.ndarray:
    """``"1 2; 3 4"`` -> 2x2 array; a single row gives a 1-D array."""
    rows = [r.strip() for r in text.strip().split(";")]
    if not rows or any(r == "" for r in rows):
        raise ConfigError(f"{key}: empty matrix row")
    vals = [[_number(t, key) for t in re.split(r"[\s,]+", r) if t] for r in rows]
    width = {len(r) for r in vals}
    if len(width) != 1:
        raise ConfigError(f"{key}: rows have different lengths {sorted(width)}")
    a = np.array(vals, dtype=float)
    return a[0] if len(vals) == 1 else a


def format_matrix(a) -> str:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.ndim == 1:
        return " ".join(repr(float(v)) for v in a)
    return "; ".join(" ".join(repr(float(v)) for v in row) for row in a)


def _int(text: str, key: str, low: int | None = None) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if low is not None and v < low:
        raise ConfigError(f"{key}: must be >= {low}, got {v}")
    return v


def _float(text: str, key: str) -> float:
    v = _number(text.strip(), key)
    if not np.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    return v


# -- config object -------------------------------------------------------------

@dataclass
class Simulation:
    mode: str = "two-timescale"
    kappa: float = 1.0
    paths: int = 100
    horizon: int = 10_000
    seed: int = 0
    init: str = "uniform"
    init_low: float = -5.0
    init_high: float = 5.0
    y0: tuple | None = None
    x0: tuple | None = None
    chain_start: str | int = "mu"
    checkpoints: tuple | None = None   # explicit list; None = log-spaced
    per_decade: int = 20
    workers: int = 1

    def init_policy(self) -> InitPolicy:
        return InitPolicy(self.init, self.init_low, self.init_high, self.y0, self.x0, self.chain_start)

    def checkpoint_list(self) -> np.ndarray:
        if self.checkpoints is not None:
            return np.asarray(self.checkpoints, dtype=np.int64)
        return log_checkpoints(self.horizon, self.per_decade)


@dataclass
class RLSetup:
    algorithm: str
    mdp: MDPSpec
    policies: PolicyPair
    features: FeatureMap
    random_seed: int | None = None
    shape: tuple | None = None          # (nS, nA, d) for a random instance
    feature_scale: float = 1.0


@dataclass
class ExperimentConfig:
    kind: str                                  # "problem", "polyak", "mdp" or "system"
    name: str = ""
    description: str = ""
    chain: ChainSpec | None = None
    tables: dict = field(default_factory=dict)  # per-state tables as given
    problem: TwoTimeScaleProblem | None = None
    rl: RLSetup | None = None
    system: BlockSystem | None = None
    kappa_grid: np.ndarray | None = None
    schedule: StepSchedule = field(default_factory=StepSchedule)
    beta_auto: bool = False                    # beta chosen as beta_factor / min eig(Delta)
    beta_factor: float = 2.0
    simulation: Simulation = field(default_factory=Simulation)
    csv: str | None = None
    precision: int = 17

    def with_overrides(self, xi=None, beta=None, seed=None, workers=None, paths=None,
                       horizon=None, mode=None) -> "ExperimentConfig":
        sched = self.schedule
        if xi is not None:
            sched = replace(sched, xi=float(xi))
        if beta is not None:
            sched = replace(sched, beta=float(beta))
        sim = self.simulation
        if mode is not None and mode not in ("two-timescale", "single", "polyak"):
            raise ConfigError(f"simulation.mode: unknown mode {mode!r}")
        kw = {k: v for k, v in dict(seed=seed, workers=workers, paths=paths, horizon=horizon,
                                    mode=mode).items() if v is not None}
        if kw:
            sim = replace(sim, **kw)
            if horizon is not None and sim.checkpoints is not None:
                sim = replace(sim, checkpoints=tuple(c for c in sim.checkpoints if c <= horizon))
        return replace(self, schedule=sched, simulation=sim,
                       beta_auto=self.beta_auto and beta is None)


# -- parsing -------------------------------------------------------------------

def _reader() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   comment_prefixes=("#",), empty_lines_in_values=False)
    cp.optionxform = str
    return cp


def _indexed(sec, section: str, names, n: int) -> dict:
    out = {}
    seen = set()
    for key in sec:
        m = _INDEXED.match(key)
        if not m or m.group(1) not in names:
            raise ConfigError(f"{section}.{key}: unknown key (expected {', '.join(f'{k}[o]' for k in names)})")
        name, o = m.group(1), int(m.group(2))
        if o >= n:
            raise ConfigError(f"{section}.{key}: state index {o} out of range for a {n}-state chain")
        out.setdefault(name, {})[o] = parse_matrix(sec[key], f"{section}.{key}")
        seen.add(name)
    for name in names:
        got = out.get(name, {})
        missing = [o for o in range(n) if o not in got]
        if missing:
            raise ConfigError(f"{section}.{name}[{missing[0]}]: missing (need one entry per chain state)")
    return {name: [out[name][o] for o in range(n)] for name in names}


def _stack(mats, key: str, vector: bool) -> np.ndarray:
    shapes = {np.shape(m) for m in mats}
    if len(shapes) != 1:
        raise ConfigError(f"{key}: per-state entries have different shapes {sorted(shapes)}")
    a = np.array(mats, dtype=float)
    if vector:
        return a.reshape(len(mats), -1)
    if a.ndim == 2:  # 1 x d rows or scalars
        a = a[:, None, :] if a.shape[1] > 1 else a[:, :, None]
    return a


def _check_keys(cp):
    model = [s for s in ("problem", "mdp", "system") if cp.has_section(s)]
    for s in cp.sections():
        if s not in _KEYS and s != "problem":
            raise ConfigError(f"[{s}]: unknown section")
        if s in _KEYS and s != "mdp":
            for k in cp[s]:
                if k not in _KEYS[s]:
                    raise ConfigError(f"{s}.{k}: unknown key")
    if not model:
        raise ConfigError("missing model section: need one of [problem], [mdp] or [system]")
    if len(model) > 1:
        raise ConfigError(f"sections {model} are mutually exclusive")
    kind = model[0]
    if len(cp[kind]) == 0:
        raise ConfigError(f"[{kind}]: section is empty")
    return kind


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration text.

    Raises
    ------
    ConfigError
        Syntax errors (with line numbers from the INI reader) and semantic
        errors naming ``section.key``.
    """
    cp = _reader()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    kind = _check_keys(cp)
    cfg = ExperimentConfig(kind=kind)
    if cp.has_section("meta"):
        cfg.name = cp["meta"].get("name", "")
        cfg.description = cp["meta"].get("description", "")

    if kind in ("problem",):
        if not cp.has_section("chain") or "P" not in cp["chain"]:
            raise ConfigError("chain.P: missing (the [problem] section needs a [chain] section)")
        P = parse_matrix(cp["chain"]["P"], "chain.P")
        try:
            cfg.chain = ChainSpec(np.atleast_2d(P))
        except ChainError as exc:
            raise ConfigError(f"chain.P: {exc}") from None
        n = cfg.chain.n
        sec = cp["problem"]
        names = _POLYAK_TABLES if any(_INDEXED.match(k) and _INDEXED.match(k).group(1) in _POLYAK_TABLES
                                      for k in sec) else _PROBLEM_TABLES
        raw = _indexed(sec, "problem", names, n)
        tables = {k: _stack(v, f"problem.{k}", k.startswith("b")) for k, v in raw.items()}
        cfg.tables = tables
        try:
            if names == _POLYAK_TABLES:
                cfg.kind = "polyak"
                cfg.problem = polyak_problem(cfg.chain, tables["A"], tables["b"])
            else:
                cfg.problem = TwoTimeScaleProblem(cfg.chain, **tables)
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from None
    elif kind == "system":
        sec = cp["system"]
        try:
            mats = {k: np.atleast_2d(parse_matrix(sec[k], f"system.{k}")) for k in ("A11", "A12", "A21", "A22")}
        except KeyError as exc:
            raise ConfigError(f"system.{exc.args[0]}: missing") from None
        try:
            cfg.system = BlockSystem(**mats)
        except ValueError as exc:
            raise ConfigError(f"system: {exc}") from None
        if "kappa_grid" in sec:
            g = np.atleast_1d(parse_matrix(sec["kappa_grid"], "system.kappa_grid"))
            if np.any(g <= 0):
                raise ConfigError("system.kappa_grid: entries must be positive")
            cfg.kappa_grid = g
    else:
        cfg.rl = _parse_mdp(cp["mdp"])

    _parse_schedule(cp, cfg)
    _parse_simulation(cp, cfg)
    if cp.has_section("output"):
        o = cp["output"]
        cfg.csv = o.get("csv")
        if "precision" in o:
            cfg.precision = _int(o["precision"], "output.precision", 1)
    return cfg


def _parse_mdp(sec) -> RLSetup:
    alg = sec.get("algorithm", "TDC").upper()
    if alg not in ALGORITHMS:
        raise ConfigError(f"mdp.algorithm: must be one of {ALGORITHMS}, got {alg!r}")
    gamma = _float(sec.get("gamma", "0.9"), "mdp.gamma")
    for k in sec:
        m = _INDEXED.match(k)
        if (m and m.group(1) != "P") or (not m and k not in _KEYS["mdp"]):
            raise ConfigError(f"mdp.{k}: unknown key")
    try:
        if "random_seed" in sec:
            extra = {"r", "pi_b", "pi", "Phi"} & set(sec)
            if extra or any(_INDEXED.match(k) for k in sec):
                extra = extra or {"P[s]"}
                raise ConfigError(f"mdp.{sorted(extra)[0]}: not allowed together with mdp.random_seed")
            shape = tuple(_int(sec.get(k, dflt), f"mdp.{k}", 1) for k, dflt in (("nS", "3"), ("nA", "2"), ("d", "2")))
            seed = _int(sec["random_seed"], "mdp.random_seed", 0)
            scale = _float(sec.get("feature_scale", "1"), "mdp.feature_scale")
            mdp, pol, feat = random_instance(*shape, seed=seed, gamma=gamma)
            if scale != 1.0:
                feat = FeatureMap(feat.Phi * scale)
            return RLSetup(alg, mdp, pol, feat, seed, shape, scale)
        Pkeys = sorted((k for k in sec if _INDEXED.match(k) and _INDEXED.match(k).group(1) == "P"),
                       key=lambda k: int(_INDEXED.match(k).group(2)))
        if not Pkeys:
            raise ConfigError("mdp.P[s]: missing (one nA x nS matrix per state, or mdp.random_seed)")
        P = np.array([np.atleast_2d(parse_matrix(sec[k], f"mdp.{k}")) for k in Pkeys])
        need = {}
        for k in ("r", "pi_b", "pi", "Phi"):
            if k not in sec:
                raise ConfigError(f"mdp.{k}: missing")
            need[k] = np.atleast_2d(parse_matrix(sec[k], f"mdp.{k}"))
        nS = P.shape[0]
        for k in ("r", "pi_b", "pi", "Phi"):
            if need[k].shape[0] != nS and need[k].shape[1] == nS and need[k].shape[0] == 1:
                need[k] = need[k].T
        mdp = MDPSpec(P, need["r"], gamma)
        pol = PolicyPair(need["pi_b"], need["pi"])
        feat = FeatureMap(need["Phi"])
    except ConfigError:
        raise
    except (ValueError, ChainError) as exc:
        raise ConfigError(f"mdp: {exc}") from None
    return RLSetup(alg, mdp, pol, feat)


def _parse_schedule(cp, cfg: ExperimentConfig) -> None:
    s = cp["schedule"] if cp.has_section("schedule") else {}
    kw = {}
    for k in ("alpha", "xi", "K0"):
        if k in s:
            kw[k] = _float(s[k], f"schedule.{k}")
    if "beta" in s:
        if s["beta"].strip().lower() == "auto":
            if cfg.kind != "mdp":
                raise ConfigError("schedule.beta: 'auto' is only available for [mdp] configurations")
            cfg.beta_auto = True
        else:
            kw["beta"] = _float(s["beta"], "schedule.beta")
    if "beta_factor" in s:
        cfg.beta_factor = _float(s["beta_factor"], "schedule.beta_factor")
        if cfg.beta_factor <= 0.5:
            raise ConfigError("schedule.beta_factor: must exceed 1/2 for the Hurwitz shift condition")
    try:
        cfg.schedule = StepSchedule(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split()[0] if msg.split() and msg.split()[0] in ("alpha", "beta", "xi", "K0") else ""
        raise ConfigError(f"schedule.{key}: {msg}" if key else f"schedule: {msg}") from None


def _parse_simulation(cp, cfg: ExperimentConfig) -> None:
    s = cp["simulation"] if cp.has_section("simulation") else {}
    sim = Simulation()
    if cfg.kind == "polyak":
        sim.mode = "polyak"
    if "mode" in s:
        sim.mode = s["mode"].strip()
        if sim.mode not in ("two-timescale", "single", "polyak"):
            raise ConfigError(f"simulation.mode: must be two-timescale, single or polyak, got {sim.mode!r}")
    if "kappa" in s:
        sim.kappa = _float(s["kappa"], "simulation.kappa")
        if sim.kappa <= 0:
            raise ConfigError("simulation.kappa: must be positive")
    for k, low in (("paths", 1), ("horizon", 0), ("seed", 0), ("per_decade", 1), ("workers", 1)):
        if k in s:
            setattr(sim, k, _int(s[k], f"simulation.{k}", low))
    if "init" in s:
        sim.init = s["init"].strip()
    for k in ("init_low", "init_high"):
        if k in s:
            setattr(sim, k, _float(s[k], f"simulation.{k}"))
    for k in ("y0", "x0"):
        if k in s:
            setattr(sim, k, tuple(np.atleast_1d(parse_matrix(s[k], f"simulation.{k}")).tolist()))
    if "chain_start" in s:
        v = s["chain_start"].strip()
        sim.chain_start = v if v == "mu" else _int(v, "simulation.chain_start", 0)
    if "checkpoints" in s and s["checkpoints"].strip() != "log":
        cps = np.atleast_1d(parse_matrix(s["checkpoints"], "simulation.checkpoints"))
        if np.any(cps != np.round(cps)) or np.any(np.diff(cps) <= 0) or cps[0] < 0 or cps[-1] > sim.horizon:
            raise ConfigError("simulation.checkpoints: must be increasing integers in [0, horizon]")
        sim.checkpoints = tuple(int(c) for c in cps)
    try:
        sim.init_policy()
    except ValueError as exc:
        raise ConfigError(f"simulation.init: {exc}") from None
    cfg.simulation = sim


# -- serialisation -------------------------------------------------------------

def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``dump_config(parse_config(dump_config(c)))`` is a fixed point."""
    out = []
    if cfg.name or cfg.description:
        out.append("[meta]")
        if cfg.name:
            out.append(f"name = {cfg.name}")
        if cfg.description:
            out.append(f"description = {cfg.description}")
        out.append("")
    if cfg.kind in ("problem", "polyak"):
        out += ["[chain]", f"P = {format_matrix(cfg.chain.P)}", "", "[problem]"]
        for name, table in cfg.tables.items():
            for o, m in enumerate(table):
                out.append(f"{name}[{o}] = {format_matrix(m)}")
        out.append("")
    elif cfg.kind == "system":
        out.append("[system]")
        for k in ("A11", "A12", "A21", "A22"):
            out.append(f"{k} = {format_matrix(getattr(cfg.system, k))}")
        if cfg.kappa_grid is not None:
            out.append(f"kappa_grid = {format_matrix(cfg.kappa_grid)}")
        out.append("")
    else:
        r = cfg.rl
        out += ["[mdp]", f"algorithm = {r.algorithm}", f"gamma = {r.mdp.gamma!r}"]
        if r.random_seed is not None:
            out += [f"random_seed = {r.random_seed}", f"nS = {r.shape[0]}", f"nA = {r.shape[1]}",
                    f"d = {r.shape[2]}", f"feature_scale = {r.feature_scale!r}"]
        else:
            for s in range(r.mdp.nS):
                out.append(f"P[{s}] = {format_matrix(r.mdp.P[s])}")
            out += [f"r = {format_matrix(np.atleast_2d(r.mdp.r))}",
                    f"pi_b = {format_matrix(np.atleast_2d(r.policies.pi_b))}",
                    f"pi = {format_matrix(np.atleast_2d(r.policies.pi))}",
                    f"Phi = {format_matrix(np.atleast_2d(r.features.Phi))}"]
        out.append("")
    sc = cfg.schedule
    out += ["[schedule]", f"alpha = {sc.alpha!r}",
            f"beta = {'auto' if cfg.beta_auto else repr(sc.beta)}",
            f"beta_factor = {cfg.beta_factor!r}", f"xi = {sc.xi!r}", f"K0 = {sc.K0!r}", ""]
    sm = cfg.simulation
    out += ["[simulation]", f"mode = {sm.mode}", f"kappa = {sm.kappa!r}", f"paths = {sm.paths}",
            f"horizon = {sm.horizon}", f"seed = {sm.seed}", f"init = {sm.init}",
            f"init_low = {sm.init_low!r}", f"init_high = {sm.init_high!r}"]
    if sm.y0 is not None:
        out.append(f"y0 = {format_matrix(sm.y0)}")
    if sm.x0 is not None:
        out.append(f"x0 = {format_matrix(sm.x0)}")
    out.append(f"chain_start = {sm.chain_start}")
    out.append("checkpoints = " + ("log" if sm.checkpoints is None else " ".join(str(c) for c in sm.checkpoints)))
    out += [f"per_decade = {sm.per_decade}", f"workers = {sm.workers}", ""]
    out.append("[output]")
    if cfg.csv:
        out.append(f"csv = {cfg.csv}")
    out.append(f"precision = {cfg.precision}")
    return "\n".join(out) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_path(name: str):
    """Path of a bundled preset (``"fig1a"`` or ``"fig1a.cfg"``)."""
    from importlib.resources import files

    fname = name if name.endswith(".cfg") else name + ".cfg"
    p = files("twotimescale") / "presets" / fname
    if not p.is_file():
        raise FileNotFoundError(f"{name}: no bundled preset of that name")
    return p


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_path(name).read_text(encoding="utf-8"))


def resolve_config(ref: str) -> ExperimentConfig:
    """Load `ref` as a file path, falling back to a bundled preset name."""
    import os

    if os.path.exists(ref):
        return load_config(ref)
    try:
        p = preset_path(os.path.basename(ref))
    except FileNotFoundError:
        raise ConfigError(f"{ref}: no such file or bundled preset") from None
    return parse_config(p.read_text(encoding="utf-8"))


__all__ = ["ConfigError", "ExperimentConfig", "Simulation", "RLSetup", "parse_config", "dump_config",
           "load_config", "load_preset", "preset_path", "resolve_config", "parse_matrix",
           "format_matrix", "default_kappa_grid"]
