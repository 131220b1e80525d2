"""Conditional risk identities for the teacher / pure-distilled pair.

Given the teacher risk ``R``, PD risk ``R_pd`` and residual cross term ``C``
at one lambda, the self-distilled risk along the affine path is the quadratic

    R_sd(xi) = R - 2 xi (R - C) + xi^2 D,      D = R + R_pd - 2C,

so the optimal mixing weight and risk have closed forms. These hold for any
squared prediction risk, which is why the components can come from a
population model or from a held-out sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import DataError, ParameterError

DEG_EPS = 1e-12


@dataclass(frozen=True)
class RiskComponents:
    r_teacher: float
    r_pd: float
    c_cross: float
    d_gap: float

    def __post_init__(self):
        d = float(self.d_gap)
        if d < 0.0:
            # roundoff only; D is a mean of squares or a Sigma-norm
            d = 0.0
        object.__setattr__(self, "d_gap", d)


@dataclass(frozen=True)
class MixResult:
    xi_star: float
    r_sd_star: float
    degenerate: bool


def components_from_predictions(y0, f_teacher, f_pd) -> RiskComponents:
    """Sample-average components with ``D`` taken directly as mean squared gap."""
    y0 = np.asarray(y0, dtype=np.float64)
    if y0.size == 0:
        raise DataError("test set is empty")
    e = y0 - f_teacher
    e_pd = y0 - f_pd
    gap = f_teacher - f_pd
    return RiskComponents(
        float(np.mean(e * e)),
        float(np.mean(e_pd * e_pd)),
        float(np.mean(e * e_pd)),
        float(np.mean(gap * gap)),
    )


def risk_components_empirical(teacher, pd, test) -> RiskComponents:
    """Components on a held-out sample (the empirical test measure)."""
    if test.n == 0:
        raise DataError("test set is empty")
    return components_from_predictions(test.y, teacher.predict(test.X), pd.predict(test.X))


def sigma_inner(a, b, sigma_pop):
    return float(a @ (sigma_pop @ b))


def risk_components_oracle(teacher, pd, sigma_pop, beta_pop, noise_var) -> RiskComponents:
    """Exact conditional risks under ``y = x'beta + eps``, ``Cov(x) = Sigma``.

    ``R = ||b - beta||^2_Sigma + sigma^2`` and ``C = <b - beta, b_pd - beta>_Sigma + sigma^2``.
    Only families with a primal coefficient are supported.
    """
    sigma_pop = np.asarray(sigma_pop, dtype=np.float64)
    if noise_var < 0:
        raise ParameterError("noise variance must be nonnegative")
    if np.linalg.eigvalsh(0.5 * (sigma_pop + sigma_pop.T)).min() < -1e-10 * max(1.0, np.abs(sigma_pop).max()):
        raise ParameterError("population covariance is not PSD")
    return oracle_from_coefs(teacher.coef, pd.coef, sigma_pop, beta_pop, noise_var)


def oracle_from_coefs(b, b_pd, sigma_pop, beta_pop, noise_var) -> RiskComponents:
    d = b - beta_pop
    d_pd = b_pd - beta_pop
    g = b - b_pd
    return RiskComponents(
        sigma_inner(d, d, sigma_pop) + noise_var,
        sigma_inner(d_pd, d_pd, sigma_pop) + noise_var,
        sigma_inner(d, d_pd, sigma_pop) + noise_var,
        sigma_inner(g, g, sigma_pop),
    )


def degeneracy_threshold(rc: RiskComponents):
    return DEG_EPS * max(rc.r_teacher, rc.r_pd, 1.0)


def optimal_mix(rc: RiskComponents) -> MixResult:
    """Minimizer of the SD risk quadratic; ``xi* = 0`` when the path is flat."""
    if rc.d_gap <= degeneracy_threshold(rc):
        return MixResult(0.0, rc.r_teacher, True)
    num = rc.r_teacher - rc.c_cross
    return MixResult(num / rc.d_gap, rc.r_teacher - num * num / rc.d_gap, False)


def sd_risk_at(rc: RiskComponents, xi):
    xi = np.asarray(xi, dtype=np.float64)
    out = rc.r_teacher - 2.0 * xi * (rc.r_teacher - rc.c_cross) + xi * xi * rc.d_gap
    return float(out) if out.ndim == 0 else out


def risk_slope(rc: RiskComponents, lam):
    """Derivative of the teacher risk along the ridge path, ``-2 (R - C) / lam``."""
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    return -2.0 * (rc.r_teacher - rc.c_cross) / lam


def improvement_margin(rc: RiskComponents, lam):
    """``lam^2 R'^2 / (4 D)``: the gap ``R - R_sd*`` written through the slope."""
    slope = risk_slope(rc, lam)
    if rc.d_gap <= degeneracy_threshold(rc):
        return 0.0
    return lam * lam * slope * slope / (4.0 * rc.d_gap)


@dataclass(frozen=True)
class CurvatureResult:
    lambda_star: float
    passes: bool
    r_second: float
    d_gap: float
    interior: bool


def curvature_test(
    lambdas: Sequence[float],
    components: Sequence[RiskComponents],
    components_fn: Optional[Callable[[float], RiskComponents]] = None,
    rel_step: float = 1e-3,
    rel_tol: float = 1e-4,
) -> CurvatureResult:
    """Check ``D(lam*) < lam*^2 R''(lam*) / 2`` at the ridge-optimal lambda.

    ``lam*`` is the grid argmin of ``R``. With ``components_fn`` it is refined
    by golden-section search in log-lambda and ``R''`` comes from a central
    difference at relative step ``rel_step``; without it, the three grid points
    around the minimum are fit by a quadratic in lambda.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if lambdas.ndim != 1 or lambdas.size != len(components):
        raise ParameterError("lambdas and components must align")
    if np.any(np.diff(lambdas) <= 0):
        raise ParameterError("lambda grid must be strictly increasing")
    risks = np.array([rc.r_teacher for rc in components])
    i = int(np.argmin(risks))
    interior = 0 < i < lambdas.size - 1
    if not interior:
        rc = components[i]
        return CurvatureResult(float(lambdas[i]), False, float("nan"), rc.d_gap, False)

    if components_fn is None:
        x = lambdas[i - 1:i + 2]
        a = np.polyfit(x, risks[i - 1:i + 2], 2)[0]
        r2 = 2.0 * a
        lam_star = float(lambdas[i])
        d = components[i].d_gap
    else:
        def risk_log(t):
            return components_fn(float(np.exp(t))).r_teacher

        t = np.log(lambdas[i - 1:i + 2])
        res = optimize.minimize_scalar(
            risk_log, bracket=(t[0], t[1], t[2]), method="golden", tol=rel_tol
        )
        lam_star = float(np.exp(res.x))
        h = rel_step * lam_star
        r_lo = components_fn(lam_star - h).r_teacher
        r_hi = components_fn(lam_star + h).r_teacher
        mid = components_fn(lam_star)
        r2 = (r_hi - 2.0 * mid.r_teacher + r_lo) / (h * h)
        d = mid.d_gap
    passes = bool(d < 0.5 * lam_star * lam_star * r2)
    return CurvatureResult(lam_star, passes, float(r2), float(d), True)
