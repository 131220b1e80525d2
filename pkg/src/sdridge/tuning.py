"""One-shot GCV tuning of the self-distillation mixing weight.

Teacher and PD residuals are inflated by ``1 / (1 - df/n)`` with ``df = tr H``
and ``df_pd = tr H^2``; their squared norms and inner product estimate the
risk components, which are plugged into the closed-form optimum. No refit
over candidate mixing weights and no hold-out set is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorrectionBlowupError, ParameterError
from .ridge import Dataset, RidgeSolver, _check_lambda

DF_GUARD = 1e-10
DEG_EPS = 1e-12


@dataclass(frozen=True)
class GcvEstimates:
    lam: float
    r_hat: float
    r_pd_hat: float
    c_hat: float
    d_hat: float
    xi_hat: float
    r_sd_hat: float
    df: float
    df_pd: float
    degenerate: bool


def _corrections(solver, lam):
    df, df_pd = solver.hat_traces(lam)
    n = solver.n
    if df / n >= 1.0 - DF_GUARD or df_pd / n >= 1.0 - DF_GUARD:
        raise CorrectionBlowupError(
            f"GCV correction diverges at lambda={lam:.6g}: df/n={df / n:.12f}, "
            f"df_pd/n={df_pd / n:.12f} (n={n}, p={solver.p}); use a larger lambda"
        )
    return df, df_pd


def gcv_residuals(data: Dataset, solver: RidgeSolver, lam, labels=None):
    """GCV-corrected teacher and PD residual vectors."""
    lam = _check_lambda(lam)
    df, df_pd = _corrections(solver, lam)
    y = data.y if labels is None else np.asarray(labels, dtype=np.float64)
    n = solver.n
    r = (y - solver.fitted(lam, y)) / (1.0 - df / n)
    r_pd = (y - solver.fitted(lam, y, power=2)) / (1.0 - df_pd / n)
    return r, r_pd


def estimates_from_residuals(lam, r, r_pd, df, df_pd, stabilizer=0.0) -> GcvEstimates:
    n = r.shape[0]
    R = float(r @ r) / n
    Rpd = float(r_pd @ r_pd) / n
    C = float(r @ r_pd) / n
    gap = r - r_pd
    D = float(gap @ gap) / n
    if D <= DEG_EPS * max(R, 1.0):
        return GcvEstimates(lam, R, Rpd, C, D, 0.0, R, df, df_pd, True)
    denom = D + stabilizer
    return GcvEstimates(lam, R, Rpd, C, D, (R - C) / denom, R - (R - C) ** 2 / denom, df, df_pd, False)


def _finish(lam, R, r_minus_c, D, df, df_pd, stabilizer):
    C = R - r_minus_c
    Rpd = D + 2.0 * C - R
    if D <= DEG_EPS * max(R, 1.0):
        return GcvEstimates(lam, R, Rpd, C, D, 0.0, R, df, df_pd, True)
    denom = D + stabilizer
    return GcvEstimates(lam, R, Rpd, C, D, r_minus_c / denom, R - r_minus_c ** 2 / denom, df, df_pd, False)


def tangent_estimates(solver: RidgeSolver, lam, stabilizer=0.0) -> GcvEstimates:
    """One-shot estimates from derivatives of the ridge GCV cross risk.

    With ``A = 1/(1 - df/n)``, ``g = lam/(s + lam)``, ``w = U'y`` and
    ``F(lam, mu) = ||y_perp||^2 + sum g_lam g_mu w^2``:

        R_hat       = A^2 F / n
        (R - C)_hat = -lam (A A' F + A^2 F_lam) / n
        D_hat       = lam^2 (A'^2 ||y_perp||^2 + sum (A' g + A g')^2 w^2) / n
    """
    lam = _check_lambda(lam)
    df, df_pd = _corrections(solver, lam)
    n = solver.n
    s = solver.eigenvalues
    w2 = solver.rotated_y ** 2
    perp = max(float(solver.y @ solver.y) - float(w2.sum()), 0.0)
    g = lam / (s + lam)
    dg = s / (s + lam) ** 2
    A = 1.0 / (1.0 - df / n)
    dA = -A * A * float(np.sum(dg)) / n
    F = perp + float(np.sum(g * g * w2))
    F_lam = float(np.sum(g * dg * w2))
    R = A * A * F / n
    r_minus_c = -lam * (A * dA * F + A * A * F_lam) / n
    D = lam * lam * (dA * dA * perp + float(np.sum((dA * g + A * dg) ** 2 * w2))) / n
    return _finish(lam, R, r_minus_c, D, df, df_pd, stabilizer)


def one_shot(data: Dataset, lam, solver=None, stabilizer=0.0, method="gcv") -> GcvEstimates:
    """Closed-form estimates of the optimal mixing weight and SD risk at ``lam``.

    ``stabilizer`` adds a ridge to the estimated ``D`` in the denominators;
    the default 0 uses the plain plug-in. ``method`` selects the
    trace-corrected residual estimator (``"gcv"``) or the tangent form.
    """
    lam = _check_lambda(lam)
    if solver is None:
        solver = RidgeSolver(data)
    if method == "tangent":
        return tangent_estimates(solver, lam, stabilizer)
    if method != "gcv":
        raise ParameterError("method must be 'gcv' or 'tangent'")
    df, df_pd = _corrections(solver, lam)
    r, r_pd = gcv_residuals(data, solver, lam)
    return estimates_from_residuals(lam, r, r_pd, df, df_pd, stabilizer)


def tune_grid(data: Dataset, lambdas, solver=None, stabilizer=0.0, skip_blowup=True, method="gcv"):
    """One-shot estimates over a lambda grid sharing one factorization.

    Grid points where the GCV correction diverges are skipped (or raise when
    ``skip_blowup`` is false).
    """
    if solver is None:
        solver = RidgeSolver(data)
    out = []
    for lam in lambdas:
        try:
            out.append(one_shot(data, lam, solver, stabilizer, method))
        except CorrectionBlowupError:
            if not skip_blowup:
                raise
    return out
