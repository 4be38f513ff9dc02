"""Stability classes of 2x2 block systems.

For each block system A = [[a11, a12], [a21, a22]] the classifier reports

* B: some step ratio kappa makes the single-time-scale iteration stable,
* C: -A is Hurwitz,
* D: -A22 and -Delta are Hurwitz (two-time-scale stable),

and a kappa witness for B.  The five systems below realise every region
of the diagram; a random census follows.

Run:  python demos/stability_classes.py
"""
from collections import Counter

import numpy as np

from twotimescale.classify import BlockSystem, classify

for blocks in [(-4, -2, -1, -3), (2, -4, 3, -5), (3, 4, -1, -1), (-5, 3, -4, 2), (4, 2, 1, 3)]:
    c = classify(BlockSystem(*blocks))
    print(f"{str(blocks):18s} {c.label():14s} {c.membership_line()}")

rng = np.random.default_rng(0)
census = Counter(classify(BlockSystem(*rng.uniform(-5, 5, 4))).label() for _ in range(2000))
print("\nrandom scalar blocks, uniform on [-5, 5]:")
for label, count in census.most_common():
    print(f"  {label:14s} {count / 20:5.1f}%")
