"""Sine basis, Sobolev norms and the free wave group.

Run: python demos/01_spectral_basics.py
"""

import numpy as np

from slowfast import PhaseState, SpectralBasis, apply_wave_group, energy_norm, to_physical, to_spectral

basis = SpectralBasis(16)
print("first eigenvalues / pi^2:", np.round(basis.eigenvalues[:4] / np.pi**2, 12))

# A field is stored by its sine coefficients; the grid view is a type-I DST away.
u = basis.field(1.0 / basis.modes**2)
values = to_physical(u)
back = to_spectral(values, basis)
print(f"round-trip error on the grid: {np.max(np.abs(back.coeffs - u.coeffs)):.1e}")

# The free wave group rotates each mode and conserves the energy norm.
X = PhaseState(u, basis.mode(2, 0.5))
for t in (0.0, 0.1, 0.37, 2.0):
    Xt = apply_wave_group(X, t)
    print(f"t = {t:4.2f}   |||X_t|||_1 = {energy_norm(Xt, 1.0):.15f}")

drift = energy_norm(apply_wave_group(apply_wave_group(X, 0.3), 0.4) - apply_wave_group(X, 0.7), 1.0)
print(f"group composition defect: {drift:.1e}")
