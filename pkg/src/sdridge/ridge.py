"""Ridge teacher, pure-distilled refit and the affine self-distillation path.

Three linear-smoother families share one interface:

* ordinary ridge, ``beta = (X'X/n + lam I)^-1 X'y/n``, solved through a single
  eigendecomposition (:class:`RidgeSolver`);
* generalized (Tikhonov) ridge with penalty ``n lam beta' Omega beta``;
* kernel ridge, ``f(x) = k_x' (K + n lam I)^-1 y``.

Every family maps labels to predictions linearly, so the pure-distilled (PD)
refit is the smoother applied twice and the self-distilled predictor is an
affine combination of teacher and PD.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import linalg

from . import kernels
from .errors import DataError, ParameterError

EIG_CLAMP = 1e-12


def _check_lambda(lam):
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0.0:
        raise ParameterError(f"lambda must be positive and finite, got {lam!r}")
    return lam


@dataclass(frozen=True)
class Dataset:
    """Design matrix ``X`` (n x p) and response ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1:
            raise DataError("X must be 2-D and y 1-D")
        if X.shape[0] != y.shape[0]:
            raise DataError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one row and one column")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


class RidgeSolver:
    """Spectral factorization of ``Sigma_hat = X'X/n`` reused across a lambda grid.

    Only the ``r = rank`` directions with nonzero eigenvalue are kept (at most
    ``min(n, p)``); ``eigenvectors`` is ``p x r`` and ``left_vectors`` holds the
    matching unit-norm directions ``U = X V / sqrt(n s)`` in sample space. When
    ``p > n`` the n x n Gram matrix is decomposed instead.
    """

    def __init__(self, data: Dataset):
        X, y = data.X, data.y
        n, p = X.shape
        if p <= n:
            s, V = linalg.eigh(X.T @ X / n)
            s, V = s[::-1], V[:, ::-1]
            keep = s > EIG_CLAMP * max(s[0], 0.0)
            s, V = s[keep], V[:, keep]
            U = X @ V / np.sqrt(n * s)
        else:
            s, U = linalg.eigh(X @ X.T / n)
            s, U = s[::-1], U[:, ::-1]
            keep = s > EIG_CLAMP * max(s[0], 0.0)
            s, U = s[keep], U[:, keep]
            V = X.T @ U / np.sqrt(n * s)
        self.n, self.p = n, p
        self.eigenvalues = np.ascontiguousarray(s)
        self.eigenvectors = V
        self.left_vectors = U
        self.y = y
        self.rotated_y = U.T @ y
        # V'(X'y/n) = sqrt(s/n) U'y
        self.rotated_crossmoment = np.sqrt(s / n) * self.rotated_y

    @property
    def rank(self):
        return self.eigenvalues.shape[0]

    def rotate_labels(self, labels=None):
        """Coordinates ``U' labels`` of a label vector (default: training y)."""
        if labels is None:
            return self.rotated_y
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape[0] != self.n:
            raise DataError(f"labels have length {labels.shape[0]}, expected {self.n}")
        return self.left_vectors.T @ labels

    def shrinkage(self, lam):
        lam = _check_lambda(lam)
        return self.eigenvalues / (self.eigenvalues + lam)

    def coef(self, lam, labels=None, power=1):
        """Ridge coefficient on ``labels`` after ``power`` passes of the smoother.

        ``power=1`` is the teacher, ``power=2`` the PD refit ``(I - lam Q) beta``.
        """
        lam = _check_lambda(lam)
        s = self.eigenvalues
        c = np.sqrt(s / self.n) * self.rotate_labels(labels)
        h = s / (s + lam)
        return self.eigenvectors @ (c / (s + lam) * h ** (power - 1))

    def coef_derivative(self, lam, labels=None):
        """``d beta / d lam = -Q beta``."""
        lam = _check_lambda(lam)
        s = self.eigenvalues
        c = np.sqrt(s / self.n) * self.rotate_labels(labels)
        return -(self.eigenvectors @ (c / (s + lam) ** 2))

    def fitted(self, lam, labels=None, power=1):
        """Training fitted values ``H^power labels`` with ``H = X Q X'/n``."""
        h = self.shrinkage(lam)
        return self.left_vectors @ (h ** power * self.rotate_labels(labels))

    def hat_traces(self, lam):
        df, df_pd = kernels.shrinkage_traces(self.eigenvalues, np.array([_check_lambda(lam)]))
        return float(df[0]), float(df_pd[0])

    def hat_traces_grid(self, lambdas):
        lambdas = np.asarray(lambdas, dtype=np.float64)
        if np.any(lambdas <= 0):
            raise ParameterError("all lambdas must be positive")
        return kernels.shrinkage_traces(self.eigenvalues, lambdas)


class SmootherFamily:
    """Linear smoother ``f_lam(x) = s_lam(x)' y`` built on fixed training inputs.

    Subclasses implement coefficient solves in whatever parametrization is
    natural (primal ``p``-vector or dual ``n``-vector); ``predict`` maps them
    to predictions at new inputs.
    """

    kind = "abstract"

    def __init__(self, X):
        self.X = np.asarray(X, dtype=np.float64)
        self.n = self.X.shape[0]

    def coef(self, lam, labels, power=1):
        raise NotImplementedError

    def coef_derivative(self, lam, labels):
        raise NotImplementedError

    def predict_coef(self, coef, Xq):
        raise NotImplementedError

    def hat_traces(self, lam):
        raise NotImplementedError

    def smoother_weights(self, lam, Xq):
        """Rows ``s_lam(x)'`` for each query row of ``Xq`` (m x n)."""
        return self.predict_coef(self.coef(lam, np.eye(self.n)), Xq)

    def hat_matrix(self, lam):
        return self.smoother_weights(lam, self.X)

    def fit(self, lam, labels):
        lam = _check_lambda(lam)
        return RidgeFit(lam, self.coef(lam, labels), self)


class OrdinaryRidge(SmootherFamily):
    kind = "ordinary"

    def __init__(self, data_or_solver):
        if isinstance(data_or_solver, RidgeSolver):
            solver = data_or_solver
            X = solver.left_vectors * np.sqrt(solver.n * solver.eigenvalues) @ solver.eigenvectors.T
        else:
            solver = RidgeSolver(data_or_solver)
            X = data_or_solver.X
        super().__init__(X)
        self.solver = solver

    def coef(self, lam, labels, power=1):
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim == 2:
            return np.column_stack([self.solver.coef(lam, col, power) for col in labels.T])
        return self.solver.coef(lam, labels, power)

    def coef_derivative(self, lam, labels):
        return self.solver.coef_derivative(lam, labels)

    def predict_coef(self, coef, Xq):
        return np.asarray(Xq, dtype=np.float64) @ coef

    def hat_traces(self, lam):
        return self.solver.hat_traces(lam)


class GeneralizedRidge(SmootherFamily):
    """Generalized ridge ``beta = (X'X + n lam Omega)^-1 X'y`` for symmetric ``Omega > 0``.

    ``Omega`` need not commute with ``X'X``, so each lambda gets its own
    Cholesky factorization.
    """

    kind = "generalized"

    def __init__(self, X, omega):
        super().__init__(X)
        omega = np.asarray(omega, dtype=np.float64)
        p = self.X.shape[1]
        if omega.shape != (p, p):
            raise ParameterError(f"Omega must be {p}x{p}, got {omega.shape}")
        if not np.allclose(omega, omega.T, rtol=1e-12, atol=1e-12 * np.abs(omega).max()):
            raise ParameterError("Omega must be symmetric")
        try:
            linalg.cholesky(omega)
        except linalg.LinAlgError as exc:
            raise ParameterError("Omega must be positive definite") from exc
        self.omega = 0.5 * (omega + omega.T)
        self.gram = self.X.T @ self.X
        self._cache = {}

    def _factor(self, lam):
        if lam not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[lam] = linalg.cho_factor(self.gram + self.n * lam * self.omega)
        return self._cache[lam]

    def coef(self, lam, labels, power=1):
        cf = self._factor(lam)
        beta = linalg.cho_solve(cf, self.X.T @ np.asarray(labels, dtype=np.float64))
        for _ in range(power - 1):
            beta = linalg.cho_solve(cf, self.gram @ beta)
        return beta

    def coef_derivative(self, lam, labels):
        cf = self._factor(lam)
        beta = linalg.cho_solve(cf, self.X.T @ np.asarray(labels, dtype=np.float64))
        return -self.n * linalg.cho_solve(cf, self.omega @ beta)

    def predict_coef(self, coef, Xq):
        return np.asarray(Xq, dtype=np.float64) @ coef

    def hat_traces(self, lam):
        M = linalg.cho_solve(self._factor(_check_lambda(lam)), self.gram)
        return float(np.trace(M)), float(np.sum(M * M.T))


def gaussian_kernel(A, B, bandwidth):
    """``exp(-||a - b||^2 / (2 h^2))``."""
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * bandwidth ** 2))


def median_bandwidth(X):
    """Median pairwise Euclidean distance between distinct rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    sq = (X * X).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    iu = np.triu_indices(X.shape[0], k=1)
    return float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))


class KernelRidge(SmootherFamily):
    """Kernel ridge with a Gaussian kernel; coefficients live in the dual (n-vector).

    The kernel matrix is eigendecomposed once; negative roundoff eigenvalues
    are clamped to zero.
    """

    kind = "kernel"
    MAX_N = 10_000

    def __init__(self, X, bandwidth="median"):
        super().__init__(X)
        if self.n > self.MAX_N:
            raise ParameterError(f"kernel ridge is capped at n={self.MAX_N}")
        if bandwidth == "median":
            bandwidth = median_bandwidth(self.X)
        bandwidth = float(bandwidth)
        if not bandwidth > 0:
            raise ParameterError("kernel bandwidth must be positive")
        self.bandwidth = bandwidth
        K = gaussian_kernel(self.X, self.X, bandwidth)
        e, W = linalg.eigh(0.5 * (K + K.T))
        self.kernel_eigs = np.maximum(e, 0.0)
        self.kernel_vecs = W

    def coef(self, lam, labels, power=1):
        e = self.kernel_eigs
        nl = self.n * lam
        z = self.kernel_vecs.T @ np.asarray(labels, dtype=np.float64)
        w = (e / (e + nl)) ** (power - 1) / (e + nl)
        if z.ndim == 2:
            w = w[:, None]
        return self.kernel_vecs @ (w * z)

    def coef_derivative(self, lam, labels):
        e = self.kernel_eigs
        nl = self.n * lam
        z = self.kernel_vecs.T @ np.asarray(labels, dtype=np.float64)
        return -self.n * (self.kernel_vecs @ (z / (e + nl) ** 2))

    def predict_coef(self, coef, Xq):
        return gaussian_kernel(np.asarray(Xq, dtype=np.float64), self.X, self.bandwidth) @ coef

    def hat_traces(self, lam):
        e = self.kernel_eigs
        h = e / (e + self.n * _check_lambda(lam))
        return float(h.sum()), float((h * h).sum())


@dataclass(frozen=True)
class RidgeFit:
    """Fitted smoother at a given lambda.

    ``coef`` is the primal coefficient for ordinary and generalized ridge and
    the dual coefficient for kernel ridge.
    """

    lam: float
    coef: np.ndarray
    family: Any = field(repr=False, compare=False)

    def __post_init__(self):
        _check_lambda(self.lam)

    @property
    def beta(self):
        return self.coef

    @property
    def kind(self):
        return self.family.kind

    def predict(self, Xq):
        return self.family.predict_coef(self.coef, Xq)


def _family_for(data, solver=None, family=None):
    if family is not None:
        return family
    return OrdinaryRidge(solver if solver is not None else RidgeSolver(data))


def fit_ridge(data: Dataset, lam, solver=None, family=None) -> RidgeFit:
    """Teacher fit on ``data.y``. Pass ``solver`` to reuse a factorization across a grid."""
    lam = _check_lambda(lam)
    fam = _family_for(data, solver, family)
    return RidgeFit(lam, fam.coef(lam, data.y), fam)


def pd_refit(fit: RidgeFit, data: Dataset) -> RidgeFit:
    """Pure-distilled refit: the same smoother trained on the teacher's fitted values."""
    if data.n != fit.family.n:
        raise DataError(f"fit was trained on n={fit.family.n} rows, data has {data.n}")
    return RidgeFit(fit.lam, fit.family.coef(fit.lam, data.y, power=2), fit.family)


def sd_predict(teacher: RidgeFit, pd: RidgeFit, xi, x0):
    """``(1 - xi) f_teacher(x0) + xi f_pd(x0)``."""
    if teacher.lam != pd.lam:
        raise ParameterError("teacher and PD fits must share lambda")
    x0 = np.asarray(x0, dtype=np.float64)
    single = x0.ndim == 1
    X0 = x0[None, :] if single else x0
    out = (1.0 - xi) * teacher.predict(X0) + xi * pd.predict(X0)
    return float(out[0]) if single else out


def mixed_label_fit(data: Dataset, lam, xi, solver=None, family=None) -> RidgeFit:
    """Ridge trained on the mixed labels ``(1 - xi) y + xi y_hat``."""
    lam = _check_lambda(lam)
    fam = _family_for(data, solver, family)
    teacher = fam.coef(lam, data.y)
    y_hat = fam.predict_coef(teacher, fam.X)
    labels = (1.0 - xi) * data.y + xi * y_hat
    return RidgeFit(lam, fam.coef(lam, labels), fam)


def lambda_derivative(fit: RidgeFit, data: Dataset):
    """Closed-form ``d coef / d lambda`` for the fit's family."""
    if not isinstance(fit.family, (OrdinaryRidge, GeneralizedRidge, KernelRidge)):
        raise ParameterError(f"no derivative rule for family {fit.kind!r}")
    return fit.family.coef_derivative(fit.lam, data.y)


def hat_traces(solver, lam):
    """``(tr H, tr H^2)`` for a :class:`RidgeSolver` or any smoother family."""
    return solver.hat_traces(lam)
