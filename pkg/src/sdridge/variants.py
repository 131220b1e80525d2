"""Extensions of one-round self-distillation.

* multi-round SD, either recursive (each round mixes the previous round's
  labels with its own fitted values) or anchored (always mixing against the
  original labels);
* students refit on a fresh unlabeled design, both the mixed-loss student and
  the affine mix of the teacher with a fresh PD refit;
* optimal SD for general linear smoothers (generalized and kernel ridge),
  guarded by a finite-difference check of the tangent identity
  ``(f - f_pd) + lam * d f / d lam = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import ConvexityError, DataError, ParameterError, TangentIdentityError
from .ridge import Dataset, OrdinaryRidge, RidgeFit, RidgeSolver, SmootherFamily, _check_lambda
from .structural import (
    RiskComponents,
    components_from_predictions,
    optimal_mix,
    oracle_from_coefs,
    risk_components_empirical,
)
from .tuning import estimates_from_residuals

CONVEXITY_TOL = 1e-10
TANGENT_TOL = 1e-6


# ---------------------------------------------------------------------------
# risk sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleRisk:
    """Exact risks under a known population ``(Sigma, beta, sigma^2)``."""

    sigma: np.ndarray
    beta: np.ndarray
    noise_var: float

    def components(self, coef, coef_pd):
        return oracle_from_coefs(coef, coef_pd, self.sigma, self.beta, self.noise_var)

    def risk(self, coef):
        d = coef - self.beta
        return float(d @ (self.sigma @ d)) + self.noise_var


@dataclass(frozen=True)
class TestSetRisk:
    """Risks as averages over a held-out sample."""

    test: Dataset

    def components(self, coef, coef_pd):
        return components_from_predictions(self.test.y, self.test.X @ coef, self.test.X @ coef_pd)

    def risk(self, coef):
        e = self.test.y - self.test.X @ coef
        return float(np.mean(e * e))


GCV = "gcv"


def _as_source(risk_source):
    if isinstance(risk_source, (OracleRisk, TestSetRisk)):
        return risk_source
    if isinstance(risk_source, Dataset):
        return TestSetRisk(risk_source)
    if risk_source == GCV:
        return GCV
    raise ParameterError("risk_source must be OracleRisk, TestSetRisk/Dataset or 'gcv'")


# ---------------------------------------------------------------------------
# multi-round
# ---------------------------------------------------------------------------


@dataclass
class RoundState:
    """Predictor after ``round_index`` rounds; round 0 is the plain teacher.

    ``xi_history[j]`` is the weight chosen to go from round ``j`` to ``j+1``
    and ``risk_history[j]`` the risk of the round-``j`` predictor.
    """

    round_index: int
    labels: np.ndarray
    teacher_fit: RidgeFit
    xi_history: list = field(default_factory=list)
    risk_history: list = field(default_factory=list)
    degenerate_history: list = field(default_factory=list)
    components_history: list = field(default_factory=list)

    @property
    def risk(self):
        return self.risk_history[-1]


def _gcv_components(solver, lam, y0, base_labels, base_mult, pd_mult, df_base, df_pd):
    """GCV plug-in for a pair of smoothers ``S y0`` whose spectral multipliers are known."""
    n = solver.n
    fit = solver.left_vectors @ (base_mult * solver.rotate_labels(y0))
    fit_pd = solver.left_vectors @ (pd_mult * solver.rotate_labels(y0))
    if df_base / n >= 1.0 - 1e-10 or df_pd / n >= 1.0 - 1e-10:
        raise ParameterError(f"GCV correction diverges at lambda={lam:.6g}")
    r = (y0 - fit) / (1.0 - df_base / n)
    r_pd = (y0 - fit_pd) / (1.0 - df_pd / n)
    est = estimates_from_residuals(lam, r, r_pd, df_base, df_pd)
    return RiskComponents(est.r_hat, est.r_pd_hat, est.c_hat, est.d_hat)


def multiround(data: Dataset, lam, rounds, mode="recursive", risk_source=GCV, solver=None):
    """Run ``rounds`` rounds of optimally mixed self-distillation.

    Each round forms a (base, PD) pair -- base is the previous round's
    predictor (``recursive``) or the original teacher (``anchored``), PD is
    ridge refit on the previous round's fitted values -- and moves to the
    risk-optimal point of their affine path. With ``risk_source='gcv'`` the
    labels are tracked as ``L y`` for a spectral operator ``L`` so that the
    degrees of freedom of each smoother are exact.

    Returns ``rounds + 1`` states (round 0 is the teacher).
    """
    lam = _check_lambda(lam)
    if int(rounds) < 1:
        raise ParameterError("rounds must be at least 1")
    if mode not in ("recursive", "anchored"):
        raise ParameterError("mode must be 'recursive' or 'anchored'")
    source = _as_source(risk_source)
    if solver is None:
        solver = RidgeSolver(data)
    family = OrdinaryRidge(solver)
    y0 = data.y
    h = solver.shrinkage(lam)

    def fitted(labels):
        return solver.fitted(lam, labels)

    def coef(labels):
        return solver.coef(lam, labels)

    # spectral multipliers of the label operator (on range(U)); the complement
    # is irrelevant for fitted values, which only see range(U).
    ell = np.ones_like(h)

    labels = y0
    xi_hist, risk_hist, deg_hist, comp_hist = [], [], [], []
    if source == GCV:
        df0 = float(np.sum(h))
        rc0 = _gcv_components(solver, lam, y0, y0, h, h, df0, df0)
        risk_hist.append(rc0.r_teacher)
    else:
        risk_hist.append(source.risk(coef(labels)))
    states = [RoundState(0, labels, RidgeFit(lam, coef(labels), family), [], list(risk_hist), [], [])]

    for _ in range(int(rounds)):
        base_labels = labels if mode == "recursive" else y0
        base_ell = ell if mode == "recursive" else np.ones_like(h)
        pd_labels = fitted(labels)
        if source == GCV:
            rc = _gcv_components(
                solver, lam, y0, base_labels, h * base_ell, h * h * ell,
                float(np.sum(h * base_ell)), float(np.sum(h * h * ell)),
            )
        else:
            rc = source.components(coef(base_labels), coef(pd_labels))
        mix = optimal_mix(rc)
        xi = mix.xi_star
        labels = (1.0 - xi) * base_labels + xi * pd_labels
        ell = (1.0 - xi) * base_ell + xi * h * ell
        b = coef(labels)
        if source == GCV:
            df = float(np.sum(h * ell))
            new_risk = _gcv_components(solver, lam, y0, labels, h * ell, h * ell, df, df).r_teacher
        else:
            new_risk = source.risk(b)
        xi_hist.append(xi)
        deg_hist.append(mix.degenerate)
        comp_hist.append(rc)
        risk_hist.append(new_risk)
        states.append(
            RoundState(len(states), labels, RidgeFit(lam, b, family), list(xi_hist),
                       list(risk_hist), list(deg_hist), list(comp_hist))
        )
    return states


# ---------------------------------------------------------------------------
# fresh unlabeled design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreshStudent:
    mode: str
    xi: float
    beta: np.ndarray
    convex: bool


class FreshXProblem:
    """Teacher on ``train`` plus everything needed to refit on ``fresh_X``.

    The mixed-loss Hessian is ``A(xi) = B + xi M`` with ``B = Sigma_hat + lam I``
    and ``M = Sigma_tilde - Sigma_hat``; diagonalizing ``B^-1/2 M B^-1/2 = W mu W'``
    once makes every ``xi`` a diagonal solve.
    """

    def __init__(self, train: Dataset, fresh_X, lam, solver=None):
        self.lam = _check_lambda(lam)
        fresh_X = np.asarray(fresh_X, dtype=np.float64)
        if fresh_X.ndim != 2 or fresh_X.shape[1] != train.p:
            raise DataError(f"fresh design must have {train.p} columns")
        if fresh_X.shape[0] == 0:
            raise DataError("fresh design is empty")
        self.train = train
        self.fresh_X = fresh_X
        n, p = train.n, train.p
        m = fresh_X.shape[0]
        solver = solver if solver is not None else RidgeSolver(train)
        self.teacher = solver.coef(self.lam, train.y)
        self.sigma_hat = train.X.T @ train.X / n
        self.sigma_tilde = fresh_X.T @ fresh_X / m
        self.v_hat = train.X.T @ train.y / n
        self.pseudo_moment = self.sigma_tilde @ self.teacher
        self.fresh_pd = linalg.solve(
            self.sigma_tilde + self.lam * np.eye(p), self.pseudo_moment, assume_a="pos"
        )
        B = self.sigma_hat + self.lam * np.eye(p)
        b_eig, b_vec = linalg.eigh(B)
        self._b_min = float(b_eig[0])
        b_isqrt = (b_vec / np.sqrt(b_eig)) @ b_vec.T
        mu, W = linalg.eigh(b_isqrt @ (self.sigma_tilde - self.sigma_hat) @ b_isqrt)
        self._mu = mu
        self._T = b_isqrt @ W  # A(xi)^-1 = T diag(1/(1+xi mu)) T'

    def hessian(self, xi):
        return (1.0 - xi) * self.sigma_hat + xi * self.sigma_tilde + self.lam * np.eye(self.train.p)

    def convex_fast(self, xi):
        """Sufficient condition ``lambda_min(B) min(1 + xi mu) > tol`` for ``A(xi) > tol``."""
        return bool(self._b_min * np.min(1.0 + xi * self._mu) > CONVEXITY_TOL)

    def mixed_loss(self, xi, check="exact"):
        if check == "exact":
            convex = bool(linalg.eigvalsh(self.hessian(xi))[0] > CONVEXITY_TOL)
        else:
            convex = self.convex_fast(xi)
        if not convex:
            raise ConvexityError(
                f"mixed-loss objective is not strictly convex at xi={xi:.6g} (lambda={self.lam:.6g})"
            )
        rhs = (1.0 - xi) * self.v_hat + xi * self.pseudo_moment
        beta = self._T @ ((self._T.T @ rhs) / (1.0 + xi * self._mu))
        return FreshStudent("mixed_loss", float(xi), beta, True)

    def affine(self, xi):
        beta = (1.0 - xi) * self.teacher + xi * self.fresh_pd
        return FreshStudent("affine", float(xi), beta, True)

    def student(self, xi, mode="affine"):
        if mode == "affine":
            return self.affine(xi)
        if mode == "mixed_loss":
            return self.mixed_loss(xi)
        raise ParameterError("mode must be 'affine' or 'mixed_loss'")


def freshx_fit(train: Dataset, fresh_X, lam, xi, mode="affine", solver=None) -> FreshStudent:
    """Student refit on a fresh unlabeled design with teacher pseudo-labels."""
    return FreshXProblem(train, fresh_X, lam, solver).student(float(xi), mode)


@dataclass(frozen=True)
class FreshScan:
    xis: np.ndarray
    risks: np.ndarray  # NaN where the objective is not strictly convex
    convex: np.ndarray
    best_xi: float
    best_risk: float
    local_minima: list


def fresh_mixed_scan(problem: FreshXProblem, xis, risk_fn: Callable[[np.ndarray], float]) -> FreshScan:
    """Grid search of the mixed-loss student, skipping non-convex ``xi``.

    Returns the global grid minimum and every interior local minimum among
    consecutive convex grid points.
    """
    xis = np.asarray(xis, dtype=np.float64)
    risks = np.full(xis.shape, np.nan)
    convex = np.zeros(xis.shape, dtype=bool)
    for i, xi in enumerate(xis):
        if problem.convex_fast(xi):
            convex[i] = True
            risks[i] = risk_fn(problem.mixed_loss(xi, check="fast").beta)
    if not convex.any():
        raise ConvexityError("no grid value of xi gives a strictly convex objective")
    best = int(np.nanargmin(risks))
    minima = []
    for i in range(xis.size):
        if not convex[i]:
            continue
        left = risks[i - 1] if i > 0 and convex[i - 1] else np.inf
        right = risks[i + 1] if i + 1 < xis.size and convex[i + 1] else np.inf
        if risks[i] <= left and risks[i] <= right:
            minima.append((float(xis[i]), float(risks[i])))
    return FreshScan(xis, risks, convex, float(xis[best]), float(risks[best]), minima)


def fresh_affine_components(problem: FreshXProblem, source) -> RiskComponents:
    """Components of the (teacher, fresh PD) pair; feed to ``optimal_mix``."""
    return _as_source(source).components(problem.teacher, problem.fresh_pd)


# ---------------------------------------------------------------------------
# general linear smoothers
# ---------------------------------------------------------------------------


def tangent_residual(family: SmootherFamily, labels, lam, rel_step=1e-4):
    """Relative residual of ``(c - c_pd) + lam dc/dlam`` with a central difference.

    Measured on coefficients, which determine predictions linearly.
    """
    lam = _check_lambda(lam)
    h = rel_step * lam
    c = family.coef(lam, labels)
    c_pd = family.coef(lam, labels, power=2)
    fd = (family.coef(lam + h, labels) - family.coef(lam - h, labels)) / (2.0 * h)
    gap = c - c_pd
    scale = np.linalg.norm(gap)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(gap + lam * fd) / scale)


@dataclass(frozen=True)
class SmootherSD:
    xi_star: float
    r_sd_star: float
    r_teacher: float
    components: RiskComponents
    degenerate: bool


def smoother_sd(family: SmootherFamily, data: Dataset, lam, test: Dataset, probe_tol=TANGENT_TOL) -> SmootherSD:
    """Optimal SD for a linear smoother, with risks measured on ``test``."""
    lam = _check_lambda(lam)
    if family.n != data.n:
        raise DataError("family and data disagree on n")
    resid = tangent_residual(family, data.y, lam)
    if not resid <= probe_tol:
        raise TangentIdentityError(
            f"{family.kind} smoother fails the tangent identity at lambda={lam:.6g} "
            f"(relative residual {resid:.3e} > {probe_tol:.0e})"
        )
    teacher = family.fit(lam, data.y)
    pd = RidgeFit(lam, family.coef(lam, data.y, power=2), family)
    rc = risk_components_empirical(teacher, pd, test)
    mix = optimal_mix(rc)
    return SmootherSD(mix.xi_star, mix.r_sd_star, rc.r_teacher, rc, mix.degenerate)
