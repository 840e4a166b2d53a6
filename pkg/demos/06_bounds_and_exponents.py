"""Exercise the analytic inequality checkers and the exponent machine.

Everything that the operator estimates rest on is checkable by
sampling or quadrature: pointwise dispersion floors, the relativistic
kinematic bound with its explicit constant, the decay of the exterior
growth integral in the cutoff, the compensated scaling bound, and the
piecewise construction of auxiliary exponents used in the iterated
domain argument.
"""

import math

import numpy as np

import ibcfock as ib

# pointwise floors and the ultraviolet degree
params = ib.eckmann_model(delta=0.0, coupling=1.0, mu=1.0, m_boson=1.0)
rep_a = ib.check_condition_a(params, n_samples=20000, seed=7)
rep_c = ib.check_condition_c(params)
print("dispersion floors: worst violation %.2e, symmetry defect %.2e"
      % (rep_a.max_bound_violation, rep_a.max_symmetry_violation))
print("ultraviolet degree %.3g inside [0, %.3g): %s"
      % (rep_c.uv_degree, rep_c.bound, rep_c.holds))

# the d=3 relativistic kinematic bound with its analytic constant
print("\nkinematic bound, constant (mu^-2 + mu^-4)^(1/4):")
for mu in (0.5, 1.0, 2.0):
    rep = ib.eckmann_kinematic_bound(mu, n_samples=50000, seed=0)
    print("  mu %.1f: max sampled ratio %.6f vs c(mu) = %.6f -> %s"
          % (mu, rep.max_ratio, rep.c_analytic,
             "holds" if rep.holds else "VIOLATED"))

# exterior growth integral: decays in the cutoff, bounded in momentum
print("\nexterior growth integral (decay in cutoff, p = (1, 0, 0)):")
p = np.array([1.0, 0.0, 0.0])
for lam in (1.0, 2.0, 4.0, 8.0):
    print("  cutoff %4.1f: %.6f"
          % (lam, ib.condition_b_lhs(p, lam, params).value))

# compensated scaling bound: the d=1 closed-form model makes the fitted
# constant exactly sqrt(2) (pi/2 - atan sqrt(2))
line = ib.custom_model(d=1, alpha=0.25, beta=2.0, gamma=2.0,
                       coupling=1.0, mu=1.0, m_boson=1.0)
flat = ib.ScalingExponents(nu_exp=0.0, sigma_exp=0.0, r=1.0)
pts = [dict(p=0.0, omega_shift=lam ** 2, lambda_uv=lam,
            exps=flat, params=line) for lam in (2.0, 4.0, 8.0)]
fit = ib.scaling_bound_fit(pts, delta=0.3)
exact = math.sqrt(2.0) * (math.pi / 2.0 - math.atan(math.sqrt(2.0)))
print("\nscaling-bound fit: C = %.8f (closed form %.8f), monotone: %s"
      % (fit.fitted_c, exact, fit.monotone_in_lambda))

# auxiliary exponent family: three piecewise cases over the admissible
# (beta, gamma, D) region
print("\nauxiliary exponent family across the admissible region:")
for gamma, ratio, frac in ((1.5, 0.5, 0.2), (2.1, 0.85, 0.6),
                           (0.9, 0.95, 0.2)):
    beta = ratio * gamma
    bound = gamma * beta ** 2 / (beta ** 2 + 2 * gamma ** 2)
    alpha = (3.0 - frac * bound - gamma) / 2.0
    pm = ib.custom_model(d=3, alpha=alpha, beta=beta, gamma=gamma,
                         coupling=1.0, mu=1.0, m_boson=1.0)
    fam = ib.appendix_parameter_family(pm, epsilon=1e-3)
    print("  beta %.3f gamma %.2f D %.3f -> case %d: s=%.4f sigma=%.4f "
          "delta=(%.4f, %.4f)"
          % (beta, gamma, frac * bound, fam.case_id, fam.s, fam.sigma,
             fam.delta1, fam.delta2))
