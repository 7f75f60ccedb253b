"""Uniform-in-eps energy bounds, and what a blow-up looks like.

Run: python demos/05_moment_bounds.py
"""

import numpy as np

from slowfast.coefficients import CoefficientPair
from slowfast.experiments import ExperimentSpec, run_moment_diagnostics

spec = ExperimentSpec(kind="moment-diag", family="bounded", replicas=100)
rep = run_moment_diagnostics(spec)
print("   epsilon   sup E|||X|||_1^2   sup E||Y||^2")
for eps, slow, fast, *_ in rep.rows():
    print(f"{eps:10.6f} {slow:16.4f} {fast:14.4f}")
print(f"max/min ratio {rep.ratio:.3f}, flagged: {rep.flagged}")

# exponential slow drift from a large initial condition: replicas overflow and are aborted
stub = CoefficientPair(f=lambda u, y: np.exp(u), g=lambda u, y: -y, name="exp-stub")
bad = run_moment_diagnostics(spec.replace(eps_grid=(2**-4,), replicas=20, u0=[3.0] + [0.0] * 15), stub)
print(f"\nexp stub: aborted {bad.aborts[0]} of 20 replicas, blow-up detected: {bad.blow_up}")
