"""Deterministic equivalents for ridge self-distillation under proportional asymptotics.

A population is summarized by the eigenvalues of its feature covariance, the
signal's coordinates in that eigenbasis, the noise variance and the aspect
ratio ``gamma = p / n``. For each lambda the effective regularization
``kappa`` solves

    kappa = lam + gamma * kappa * mean(s / (s + kappa)),

and the limiting teacher, PD and cross risks are polynomial in the trace
functionals ``t_k`` and alignment functionals ``q_k`` evaluated at ``kappa``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, NumericError, ParameterError


@dataclass(frozen=True)
class SpectralModel:
    """Population description: covariance eigenvalues, signal projections, noise, aspect."""

    sigma_eigs: np.ndarray
    beta_proj: np.ndarray
    noise_var: float
    aspect: float

    def __post_init__(self):
        s = np.ascontiguousarray(self.sigma_eigs, dtype=np.float64)
        b = np.ascontiguousarray(self.beta_proj, dtype=np.float64)
        if s.ndim != 1 or b.shape != s.shape:
            raise ParameterError("sigma_eigs and beta_proj must be vectors of equal length")
        if s.size == 0 or s.min() <= 0:
            raise ParameterError("covariance eigenvalues must be positive")
        if self.noise_var < 0:
            raise ParameterError("noise variance must be nonnegative")
        if not self.aspect > 0:
            raise ParameterError("aspect ratio must be positive")
        object.__setattr__(self, "sigma_eigs", s)
        object.__setattr__(self, "beta_proj", b)

    @classmethod
    def from_covariance(cls, sigma, beta, noise_var, aspect):
        s, V = np.linalg.eigh(0.5 * (np.asarray(sigma) + np.asarray(sigma).T))
        return cls(s[::-1], (V.T @ np.asarray(beta, dtype=np.float64))[::-1], noise_var, aspect)

    @classmethod
    def isotropic(cls, p, r2, noise_var, aspect):
        """Identity covariance with the deterministic surrogate ``beta = (r / sqrt p) 1``."""
        return cls(np.ones(p), np.full(p, np.sqrt(r2 / p)), noise_var, aspect)

    @property
    def p(self):
        return self.sigma_eigs.size

    @property
    def r2(self):
        return float(self.beta_proj @ self.beta_proj)

    @property
    def snr(self):
        return self.r2 / self.noise_var if self.noise_var > 0 else float("inf")


@dataclass(frozen=True)
class AsymptoticState:
    lam: float
    kappa: float
    b: float
    E: float
    t2: float
    t3: float
    t4: float
    q2: float
    q3: float
    q4: float
    u2: float
    u3: float
    u4: float
    a2: float
    a3: float
    a4: float
    d1: float
    d2: float


@dataclass(frozen=True)
class TheoreticalRisks:
    r_teacher: float
    c_cross: float
    r_pd: float
    d_gap: float
    xi_star: float
    r_sd_star: float
    degenerate: bool


def _grid(lambdas):
    lam = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        raise ParameterError("lambda values must be positive and finite")
    return lam


def solve_kappa_grid(model: SpectralModel, lambdas, tol=1e-12, maxiter=200):
    lam = _grid(lambdas)
    kappas, iters = kernels.kappa_grid(model.sigma_eigs, float(model.aspect), lam, tol, maxiter)
    bad = np.flatnonzero(np.asarray(iters) < 0)
    if bad.size:
        j = bad[0]
        raise NumericError(
            f"kappa fixed point did not converge in {maxiter} iterations at "
            f"lambda={lam[j]:.6g} (gamma={model.aspect}, last kappa={kappas[j]:.6g})"
        )
    return np.asarray(kappas)


def solve_kappa(model: SpectralModel, lam, tol=1e-12, maxiter=200):
    return float(solve_kappa_grid(model, [lam], tol, maxiter)[0])


def _states(model, lam, kappa):
    F = kernels.functionals_grid(model.sigma_eigs, model.beta_proj ** 2, float(model.aspect), kappa)
    t2, t3, t4, q2, q3, q4, d1, d2 = (np.asarray(F)[:, i] for i in range(8))
    if np.any(t2 >= 1.0):
        raise NumericError("t2 >= 1: fixed point is not valid")
    b = 1.0 / (1.0 - t2)
    E = kappa - b * lam + b * b * kappa * lam * t3
    u2 = t2 * b
    u3 = t3 * b ** 3
    u4 = t4 * b ** 4 + 2.0 * t3 ** 2 * b ** 5
    kl2 = kappa ** 2 * lam ** 2
    a2 = b * E ** 2 + b ** 4 * kl2 * t4 + b ** 5 * kl2 * t3 ** 2
    a3 = 2.0 * b ** 2 * kappa * lam * E
    a4 = b ** 3 * kl2
    return dict(lam=lam, kappa=kappa, b=b, E=E, t2=t2, t3=t3, t4=t4, q2=q2, q3=q3, q4=q4,
                u2=u2, u3=u3, u4=u4, a2=a2, a3=a3, a4=a4, d1=d1, d2=d2)


def functionals(model: SpectralModel, kappa, lam) -> AsymptoticState:
    st = _states(model, np.array([float(lam)]), np.array([float(kappa)]))
    return AsymptoticState(**{k: float(v[0]) for k, v in st.items()})


def _risks(st, noise_var):
    """Teacher, cross and PD limits, plus ``R - C`` and ``D`` in cancellation-free form.

    ``R``, ``C`` and ``R_pd`` are evaluated term by term as stated. ``R - C``
    and ``D = R + R_pd - 2C`` are algebraically regrouped as

        (R - C) / lam  = -kappa b^2 d1 + sigma^2 b^3 t3
        D / lam^2      = b^3 d2 + kappa^2 q2 (b^4 t4 + b^5 t3^2) + sigma^2 u4

    which keeps full relative precision when teacher and PD nearly coincide
    (both lambda -> 0 and lambda -> infinity).
    """
    k, b, E, lam = st["kappa"], st["b"], st["E"], st["lam"]
    q2, q3, q4 = st["q2"], st["q3"], st["q4"]
    u2, u3, u4 = st["u2"], st["u3"], st["u4"]
    s2 = noise_var
    bias = k ** 2 * b * q2
    cross = k * b * E * q2 + k ** 2 * b ** 2 * lam * q3
    R = bias + s2 * u2 + s2
    C = 2.0 * bias - cross + s2 * (u2 - lam * u3) + s2
    Rpd = (4.0 * bias - 2.0 * (2.0 * cross)
           + (st["a2"] * q2 + st["a3"] * q3 + st["a4"] * q4)
           + s2 * (u2 - 2.0 * lam * u3 + lam ** 2 * u4) + s2)
    r_minus_c = lam * (-k * b ** 2 * st["d1"] + s2 * b ** 3 * st["t3"])
    D = lam ** 2 * (b ** 3 * st["d2"] + k ** 2 * q2 * (b ** 4 * st["t4"] + b ** 5 * st["t3"] ** 2)
                    + s2 * u4)
    return R, C, Rpd, r_minus_c, D


def _mix(R, r_minus_c, D):
    deg = ~(D > 0.0)
    Dsafe = np.where(deg, 1.0, D)
    xi = np.where(deg, 0.0, r_minus_c / Dsafe)
    rsd = np.where(deg, R, R - r_minus_c ** 2 / Dsafe)
    return xi, rsd, deg


def theoretical_risks(state: AsymptoticState, model: SpectralModel) -> TheoreticalRisks:
    st = {k: np.array([getattr(state, k)]) for k in AsymptoticState.__dataclass_fields__}
    R, C, Rpd, rmc, D = _risks(st, model.noise_var)
    xi, rsd, deg = _mix(R, rmc, D)
    return TheoreticalRisks(float(R[0]), float(C[0]), float(Rpd[0]), float(D[0]),
                            float(xi[0]), float(rsd[0]), bool(deg[0]))


@dataclass(frozen=True)
class TheoryCurve:
    """Vectorized theoretical curves over a lambda grid."""

    lambdas: np.ndarray
    kappa: np.ndarray
    r_teacher: np.ndarray
    c_cross: np.ndarray
    r_pd: np.ndarray
    d_gap: np.ndarray
    xi_star: np.ndarray
    r_sd_star: np.ndarray
    degenerate: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def theory_curve(model: SpectralModel, lambdas) -> TheoryCurve:
    lam = _grid(lambdas)
    kappa = solve_kappa_grid(model, lam)
    st = _states(model, lam, kappa)
    R, C, Rpd, rmc, D = _risks(st, model.noise_var)
    xi, rsd, deg = _mix(R, rmc, D)
    return TheoryCurve(lam, kappa, R, C, Rpd, D, xi, rsd, deg)


def isotropic_closed_forms(gamma, lam):
    """Explicit ``(kappa, v, b)`` for identity covariance; ``v = 1/kappa``, ``b = kappa'``."""
    if not (gamma > 0 and lam > 0):
        raise ParameterError("gamma and lambda must be positive")
    a = lam + gamma - 1.0
    root = np.sqrt(a * a + 4.0 * lam)
    # the two algebraically equal forms differ in cancellation; pick the stable one
    if a >= 0:
        kappa = 0.5 * (a + root)
        v = 1.0 / kappa
    else:
        v = (root - a) / (2.0 * lam)
        kappa = 1.0 / v
    b = 0.5 * (1.0 + (a + 2.0) / root)
    return float(kappa), float(v), float(b)


def _s_star(snr, gamma):
    return (snr * (gamma - 1.0) - gamma
            + np.sqrt(4.0 * snr * gamma ** 2 + (snr * (gamma - 1.0) - gamma) ** 2)) / (2.0 * gamma)


def extreme_gap_zero(snr, gamma):
    """Relative gap of optimal SD to optimal ridge as lambda -> 0 (identity covariance)."""
    if not (snr > 0 and gamma > 0):
        raise ParameterError("SNR and gamma must be positive")
    if gamma == 1.0:
        raise DomainError("the lambda -> 0 limit is cased on gamma < 1 and gamma > 1")
    ss = _s_star(snr, gamma)
    if gamma < 1.0:
        num = snr * (1.0 - gamma) ** 2 + gamma
        den = snr * (1.0 - gamma) ** 3 + gamma * (1.0 - gamma ** 2)
    else:
        num = (snr ** 2 * (gamma - 1.0) ** 4 + snr * gamma * (2.0 * gamma + 1.0) * (gamma - 1.0) ** 2
               + gamma ** 4)
        den = snr * gamma * (gamma - 1.0) ** 3 + gamma ** 2 * (gamma ** 2 - 1.0)
    return num / (den * (ss + 1.0)) - 1.0


def extreme_gap_inf(snr, gamma):
    """Relative gap of optimal SD to optimal ridge as lambda -> infinity."""
    if not (snr > 0 and gamma > 0):
        raise ParameterError("SNR and gamma must be positive")
    ss = _s_star(snr, gamma)
    num = snr ** 2 * gamma + snr * (2.0 * gamma + 1.0) + gamma
    return num / ((snr * (gamma + 1.0) + gamma) * (ss + 1.0)) - 1.0


def extreme_limits(snr, gamma):
    """``(gap_zero, gap_inf, S*)``; ``S* + 1`` is the optimal ridge risk over the noise variance."""
    return extreme_gap_zero(snr, gamma), extreme_gap_inf(snr, gamma), float(_s_star(snr, gamma))


def ridge_optimal_risk_isotropic(snr, gamma, noise_var):
    """Limiting risk of optimally tuned ridge for identity covariance and isotropic signal."""
    if not (snr >= 0 and gamma > 0 and noise_var > 0):
        raise ParameterError("invalid arguments")
    r2 = snr * noise_var
    s2 = noise_var
    return s2 + (-gamma * s2 + r2 * (gamma - 1.0)
                 + np.sqrt(4.0 * gamma ** 2 * r2 * s2 + (gamma * s2 - r2 * (gamma - 1.0)) ** 2)) / (2.0 * gamma)


def mp_negative_moments(gamma):
    """``E[X^-1], E[X^-2], E[X^-3]`` for the Marchenko-Pastur law with ratio ``gamma < 1``."""
    if not 0.0 < gamma < 1.0:
        raise DomainError("negative moments are finite only for 0 < gamma < 1")
    g = 1.0 - gamma
    return 1.0 / g, 1.0 / g ** 3, (1.0 + gamma) / g ** 5


@dataclass(frozen=True)
class FreshLimits:
    s: float
    s2: float
    c_fr: float
    r_pd_fr: float
    r_sd_fr_star: float
    xi_fr_star: float
    r_teacher: float
    r_sd_same_star: float


def freshx_isotropic_limits(snr, gamma, noise_var, lam) -> FreshLimits:
    """Fresh-design affine SD limits for identity covariance, with ``p/m = p/n = gamma``."""
    if not (snr >= 0 and gamma > 0 and noise_var > 0 and lam > 0):
        raise ParameterError("invalid arguments")
    r2 = snr * noise_var
    kappa, v, b = isotropic_closed_forms(gamma, lam)
    s = (1.0 - lam * v) / gamma
    s2 = (1.0 - 2.0 * lam * v + lam ** 2 * b * v ** 2) / gamma
    model = SpectralModel.isotropic(1, r2, noise_var, gamma)
    same = theory_curve(model, [lam])
    R = float(same.r_teacher[0])
    c_fr = noise_var + s * (R - noise_var) + r2 * (1.0 - s) ** 2
    r_pd_fr = noise_var + s2 * (R - noise_var) + r2 * (1.0 - 2.0 * s ** 2 + (2.0 * s - 1.0) * s2)
    rmc = np.array([R - c_fr])
    xi, rsd, _ = _mix(np.array([R]), rmc, np.array([R + r_pd_fr - 2.0 * c_fr]))
    return FreshLimits(float(s), float(s2), float(c_fr), float(r_pd_fr), float(rsd[0]),
                       float(xi[0]), R, float(same.r_sd_star[0]))


def log_grid(lo, hi, points=None, per_decade=60):
    """Log-spaced grid; by default 60 points per decade."""
    if not (0 < lo < hi):
        raise ParameterError("grid needs 0 < lo < hi")
    if points is None:
        points = int(np.ceil(per_decade * np.log10(hi / lo))) + 1
    return np.geomspace(lo, hi, int(points))
