"""Watch the counterterm diverge logarithmically and fit the rate.

For the d=2 relativistic model at zero momentum the subtraction that
keeps the renormalized Hamiltonian finite has the closed form
(pi/2) ln(1 + cutoff^2): it grows without bound, while its cutoff
derivative approaches the constant pi.  This script compares adaptive
quadrature against the closed form, fits the divergence rate two ways,
and shows the two published subtraction choices differing by a finite,
momentum-dependent integral.
"""

import math

import numpy as np

import ibcfock as ib

params = ib.gross_model(coupling=1.0, mu=1.0, m_boson=1.0)
p0 = np.zeros(2)

print("counterterm vs closed form (pi/2) ln(1+cutoff^2):")
lams = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
values = []
for lam in lams:
    val = ib.counterterm(p0, lam, 1, params).value
    exact = 0.5 * math.pi * math.log1p(lam * lam)
    values.append(val)
    print("  cutoff %5.1f: %14.10f   (rel err vs closed form %.2e)"
          % (lam, val, abs(val - exact) / exact))

fit = ib.divergence_fit(lams[-4:], values[-4:])
print("\nfitted d(value)/d(ln cutoff)      = %.6f  (pi = %.6f)"
      % (fit.slope_log, math.pi))
print("fitted d(value)/d(ln(1+cutoff^2)) = %.6f  (pi/2 = %.6f, residual %.1e)"
      % (fit.slope_log1p, math.pi / 2.0, fit.residual_log1p))

# the two published subtractions differ by the finite dispersion-shift
# integral J(p); the difference converges as the cutoff grows
print("\nvariant difference E1 - E2 at p=(0.5, -0.25):")
p = np.array([0.5, -0.25])
for lam in (2.0, 8.0, 32.0, 128.0):
    e1 = ib.counterterm(p, lam, 1, params).value
    e2 = ib.counterterm(p, lam, 2, params).value
    j = ib.integral_J(p, lam, params).value
    print("  cutoff %6.1f: E1-E2 = %.8f, J = %.8f (diff %.1e)"
          % (lam, e1 - e2, j, abs((e1 - e2) - j)))

# the lattice twin agrees with the continuum integral as the grid refines
print("\nlattice counterterm vs continuum (cutoff 1, p=0):")
exact = ib.counterterm(p0, 1.0, 1, params).value
for nax in (17, 33, 65, 129):
    gr = ib.build_grid(2, 2.0, nax)
    idx = np.array([ib.point_index(gr, p0)])
    val = ib.counterterm_grid(idx, gr, 1.0, 1, params)[0]
    print("  h=%.4f: %.8f  (err %.2e)" % (gr.spacing, val, abs(val - exact)))
