#!/usr/bin/env python3
"""
Compares node sets for a fixed Gaussian kernel rule under the unit
Gaussian measure: iid target draws, a scrambling-free Halton sequence
pushed through the inverse Gaussian CDF, and greedy sequential selection
from a candidate grid.  Reports each rule's worst-case error and shows
how the greedy picks spread with the lengthscale.
"""
import numpy as np

from kquad import (GaussianKernel, GaussianMeasure, gaussian_inverse_cdf,
                   halton_points, kq_fit, sbq_greedy_select)

N_NODES = 12
kernel = GaussianKernel([1.0])
measure = GaussianMeasure([0.0], [1.0])

iid = measure.sample(np.random.default_rng(0), N_NODES)
halton = gaussian_inverse_cdf(halton_points(N_NODES, 1))
grid = np.linspace(-4.0, 4.0, 401)[:, None]
seed_index = int(np.argmin(np.abs(grid[:, 0])))
greedy_idx = sbq_greedy_select(kernel, measure, grid, N_NODES, seed_index)
greedy = grid[greedy_idx]

print(f"worst-case error of a {N_NODES}-node rule, lengthscale 1")
for name, nodes in (("iid", iid), ("halton", halton), ("greedy", greedy)):
    rule = kq_fit(kernel, measure, nodes)
    print(f"  {name:7s}: {rule.worst_case_error:.3e}")

print()
print("greedy nodes in selection order, by lengthscale")
for ell in (0.1, 1.0):
    idx = sbq_greedy_select(GaussianKernel([ell]), measure, grid, 8,
                            seed_index)
    picks = ", ".join(f"{x:+.2f}" for x in grid[idx, 0])
    print(f"  lengthscale {ell:4.1f}: {picks}")
