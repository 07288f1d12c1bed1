"""
Singular value decay
====================

Stack the five training runs, center them and look at how slowly the
singular values fall off: translating structures need many linear modes.
"""

import numpy as np

from _data import kdv_catalog
from polymanifold import center, compute_pod, rank_for_tolerance, truncation_error

catalog = kdv_catalog()
Sc, c = center(catalog.training_matrix())
basis = compute_pod(Sc)
s = basis.singular_values

print("index  sigma/sigma_1")
for i in (0, 1, 4, 9, 19, 39, 59, 79, 99):
    print(f"{i + 1:5d}  {s[i] / s[0]:.3e}")

total = np.sum(s**2)
for r in (2, 6, 14, 82):
    print(f"r={r:3d}: relative projection error {np.sqrt(truncation_error(basis, r) / total):.2e}")

# The size needed for a relative projection error below 1e-5
print("modes for tol 1e-5:", rank_for_tolerance(basis, 1e-5))
