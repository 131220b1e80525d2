"""Synthetic data and Monte-Carlo comparison of empirical, estimated and theoretical risks.

Each replication draws ``X = Z Sigma^{1/2}``, a signal and Gaussian noise from
its own Philox stream spawned off one seed, so results do not depend on the
number of workers or the order in which replications finish.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .asymptotics import SpectralModel, TheoryCurve, theory_curve
from .errors import ParameterError
from .ridge import Dataset, RidgeSolver
from .structural import DEG_EPS
from .tuning import DF_GUARD

COV_KINDS = ("isotropic", "ar1", "spiked")
SIGNAL_KINDS = ("isotropic", "top_aligned", "bottom_aligned")
EMPIRICAL_METRICS = ("r_teacher", "r_pd", "c_cross", "d_gap", "xi_star", "r_sd_star")
ESTIMATED_METRICS = ("r_hat", "r_pd_hat", "c_hat", "d_hat", "xi_hat", "r_sd_hat",
                     "d_hat_tan", "xi_hat_tan", "r_sd_hat_tan")
THEORY_METRICS = ("r_teacher", "r_pd", "c_cross", "d_gap", "xi_star", "r_sd_star")


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str = "isotropic"
    p: int = 100
    rho: float = 0.25
    strength: float = 5.0
    spike_seed: int = 0

    def __post_init__(self):
        if self.kind not in COV_KINDS:
            raise ParameterError(f"covariance kind must be one of {COV_KINDS}")
        if self.p < 1:
            raise ParameterError("p must be positive")
        if self.kind == "ar1" and not abs(self.rho) < 1:
            raise ParameterError("AR1 requires |rho| < 1")
        if self.kind == "spiked" and self.strength < 0:
            raise ParameterError("spike strength must be nonnegative")


@dataclass(frozen=True)
class SignalSpec:
    kind: str = "isotropic"
    r2: float = 1.0
    ratio_pct: float = 10.0
    factor: float = 0.9

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ParameterError(f"signal kind must be one of {SIGNAL_KINDS}")
        if not self.r2 > 0:
            raise ParameterError("signal energy must be positive")
        if not 0 < self.ratio_pct <= 100:
            raise ParameterError("alignment ratio must lie in (0, 100]")
        if not 0 <= self.factor <= 1:
            raise ParameterError("alignment factor must lie in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    cov: CovarianceSpec
    sig: SignalSpec
    noise_var: float = 1.0
    lambda_grid: tuple = (0.01, 0.1, 1.0, 10.0, 100.0)
    reps: int = 30
    seed: int = 0
    entry_dist: str = "gaussian"

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        object.__setattr__(self, "lambda_grid", grid)
        if self.reps < 1:
            raise ParameterError("reps must be at least 1")
        if any(b <= a for a, b in zip(grid, grid[1:])) or not grid or grid[0] <= 0:
            raise ParameterError("lambda grid must be positive and strictly increasing")
        if self.cov.p != self.p:
            raise ParameterError("covariance spec dimension does not match p")
        if self.entry_dist not in ("gaussian", "rademacher"):
            raise ParameterError("entry_dist must be gaussian or rademacher")
        if self.noise_var < 0:
            raise ParameterError("noise variance must be nonnegative")


def make_rng(seed, *key):
    """Philox generator keyed by ``seed`` and an optional spawn path."""
    ss = np.random.SeedSequence(seed)
    for k in key:
        ss = ss.spawn(k + 1)[k]
    return np.random.Generator(np.random.Philox(ss))


def covariance_matrix(spec: CovarianceSpec, rng=None):
    p = spec.p
    if spec.kind == "isotropic":
        return np.eye(p)
    if spec.kind == "ar1":
        idx = np.arange(p)
        return spec.rho ** np.abs(idx[:, None] - idx[None, :])
    if rng is None:
        rng = make_rng(spec.spike_seed)
    v = rng.standard_normal(p)
    v /= np.linalg.norm(v)
    return np.eye(p) + spec.strength * np.outer(v, v)


def gen_covariance(spec: CovarianceSpec, rng=None):
    """Eigenvalues (descending) and eigenvectors of the population covariance."""
    if spec.kind == "isotropic":
        return np.ones(spec.p), np.eye(spec.p)
    s, V = np.linalg.eigh(covariance_matrix(spec, rng))
    return s[::-1].copy(), V[:, ::-1].copy()


def signal_variances(spec: SignalSpec, p):
    """Variance of the signal along each eigendirection (descending eigenvalue order)."""
    if spec.kind == "isotropic":
        return np.full(p, spec.r2 / p)
    k = int(round(spec.ratio_pct / 100.0 * p))
    if k < 1:
        raise ParameterError(f"alignment ratio {spec.ratio_pct}% of p={p} rounds to zero directions")
    w = np.empty(p)
    w[:k] = spec.factor / k
    if k < p:
        w[k:] = (1.0 - spec.factor) / (p - k)
    if spec.kind == "bottom_aligned":
        w = w[::-1]
    total = w.sum()
    if total <= 0:
        raise ParameterError("signal allocation is identically zero")
    return spec.r2 * w / total


def gen_signal(spec: SignalSpec, cov_eigvecs, rng):
    p = cov_eigvecs.shape[0]
    return cov_eigvecs @ (np.sqrt(signal_variances(spec, p)) * rng.standard_normal(p))


def draw_design(n, p, sqrt_sigma, rng, entry_dist="gaussian"):
    if entry_dist == "gaussian":
        Z = rng.standard_normal((n, p))
    else:
        Z = rng.choice(np.array([-1.0, 1.0]), size=(n, p))
    return Z if sqrt_sigma is None else Z @ sqrt_sigma


@dataclass
class SimResult:
    config: SimConfig
    lambdas: np.ndarray
    empirical: dict
    estimated: dict
    theory: TheoryCurve
    errors: list = field(default_factory=list)

    def mean(self, metric, source="empirical"):
        return np.nanmean(getattr(self, source)[metric], axis=1)

    def std(self, metric, source="empirical"):
        """Across-replication standard deviation (ddof=1; 0 for a single rep)."""
        a = getattr(self, source)[metric]
        if a.shape[1] < 2:
            return np.zeros(a.shape[0])
        return np.nanstd(a, axis=1, ddof=1)

    def sem(self, metric, source="empirical"):
        """Standard error of the replication mean."""
        a = getattr(self, source)[metric]
        return self.std(metric, source) / np.sqrt(np.sum(np.isfinite(a), axis=1).clip(min=1))

    def long_rows(self):
        """``(rep, lambda, metric, value)`` rows; estimated metrics keep their ``_hat`` names."""
        for source in ("empirical", "estimated"):
            table = getattr(self, source)
            for metric, arr in table.items():
                for j, lam in enumerate(self.lambdas):
                    for rep in range(arr.shape[1]):
                        yield rep, float(lam), metric, float(arr[j, rep])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rep", "lambda", "metric", "value"])
            for rep, lam, metric, value in self.long_rows():
                w.writerow([rep, repr(lam), metric, repr(value)])

    def summary(self):
        out = {
            "config": _config_dict(self.config),
            "lambda": [float(v) for v in self.lambdas],
            "empirical": {},
            "estimated": {},
            "theory": {m: [float(v) for v in getattr(self.theory, m)] for m in THEORY_METRICS},
            "errors": [{"rep": r, "lambda": l, "message": m} for r, l, m in self.errors],
        }
        for source in ("empirical", "estimated"):
            for metric in getattr(self, source):
                out[source][metric] = {
                    "mean": _floats(self.mean(metric, source)),
                    "std": _floats(self.std(metric, source)),
                    "sem": _floats(self.sem(metric, source)),
                }
        return out

    def write_json(self, path):
        from .io import sanitize

        with open(path, "w") as fh:
            json.dump(sanitize(self.summary()), fh, indent=2)


def _floats(a):
    return [float(v) for v in a]


def _config_dict(cfg: SimConfig):
    d = asdict(cfg)
    d["lambda_grid"] = list(cfg.lambda_grid)
    return d


def spectral_model(config: SimConfig, eigvals) -> SpectralModel:
    """Population model whose alignment functionals match the signal's expected ones."""
    var = signal_variances(config.sig, config.p)
    return SpectralModel(eigvals, np.sqrt(var), config.noise_var, config.p / config.n)


def oracle_grid(solver: RidgeSolver, lambdas, beta, sqrt_sigma, noise_var):
    """Oracle components for every lambda at once, plus the coefficient paths."""
    s = solver.eigenvalues
    c = solver.rotated_crossmoment
    lam = np.asarray(lambdas)[None, :]
    coef = solver.eigenvectors @ (c[:, None] / (s[:, None] + lam))
    coef_pd = solver.eigenvectors @ (c[:, None] * s[:, None] / (s[:, None] + lam) ** 2)
    mult = (lambda A: A) if sqrt_sigma is None else (lambda A: sqrt_sigma @ A)
    e = mult(coef - beta[:, None])
    e_pd = mult(coef_pd - beta[:, None])
    g = mult(coef - coef_pd)
    R = (e * e).sum(0) + noise_var
    Rpd = (e_pd * e_pd).sum(0) + noise_var
    C = (e * e_pd).sum(0) + noise_var
    D = (g * g).sum(0)
    return R, Rpd, C, D, coef, coef_pd


def closed_form(R, C, D, Rpd=None):
    """Vectorized optimal mix with the structural degeneracy rule."""
    Rpd = R if Rpd is None else Rpd
    thr = DEG_EPS * np.maximum(np.maximum(R, Rpd), 1.0)
    deg = D <= thr
    Ds = np.where(deg, 1.0, D)
    xi = np.where(deg, 0.0, (R - C) / Ds)
    rsd = np.where(deg, R, R - (R - C) ** 2 / Ds)
    return xi, rsd


def gcv_grid(solver: RidgeSolver, lambdas):
    """One-shot estimates for every lambda; NaN where the correction diverges."""
    n = solver.n
    s = solver.eigenvalues
    z = solver.rotated_y
    lam = np.asarray(lambdas)[None, :]
    h = s[:, None] / (s[:, None] + lam)
    df, df_pd = h.sum(0), (h * h).sum(0)
    y = solver.y[:, None]
    fit = solver.left_vectors @ (h * z[:, None])
    fit_pd = solver.left_vectors @ (h * h * z[:, None])
    ok = (df / n < 1.0 - DF_GUARD) & (df_pd / n < 1.0 - DF_GUARD)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (y - fit) / (1.0 - df / n)
        r_pd = (y - fit_pd) / (1.0 - df_pd / n)
    R = (r * r).sum(0) / n
    Rpd = (r_pd * r_pd).sum(0) / n
    C = (r * r_pd).sum(0) / n
    D = ((r - r_pd) ** 2).sum(0) / n
    deg = D <= DEG_EPS * np.maximum(R, 1.0)
    Ds = np.where(deg, 1.0, D)
    xi = np.where(deg, 0.0, (R - C) / Ds)
    rsd = np.where(deg, R, R - (R - C) ** 2 / Ds)
    out = {"r_hat": R, "r_pd_hat": Rpd, "c_hat": C, "d_hat": D, "xi_hat": xi, "r_sd_hat": rsd}
    out.update(_tangent_grid(solver, lambdas, df))
    for k in out:
        out[k] = np.where(ok, out[k], np.nan)
    return out, ok


def _tangent_grid(solver: RidgeSolver, lambdas, df):
    """Vectorized :func:`sdridge.tuning.tangent_estimates`."""
    n = solver.n
    s = solver.eigenvalues[:, None]
    lam = np.asarray(lambdas)[None, :]
    w2 = (solver.rotated_y ** 2)[:, None]
    perp = max(float(solver.y @ solver.y) - float(w2.sum()), 0.0)
    g = lam / (s + lam)
    dg = s / (s + lam) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        A = 1.0 / (1.0 - df / n)
    dA = -A * A * dg.sum(0) / n
    F = perp + (g * g * w2).sum(0)
    F_lam = (g * dg * w2).sum(0)
    R = A * A * F / n
    rmc = -lam[0] * (A * dA * F + A * A * F_lam) / n
    D = lam[0] ** 2 * (dA * dA * perp + ((dA * g + A * dg) ** 2 * w2).sum(0)) / n
    deg = D <= DEG_EPS * np.maximum(R, 1.0)
    Ds = np.where(deg, 1.0, D)
    return {
        "d_hat_tan": D,
        "xi_hat_tan": np.where(deg, 0.0, rmc / Ds),
        "r_sd_hat_tan": np.where(deg, R, R - rmc ** 2 / Ds),
    }


def _one_rep(config: SimConfig, rep, eigvecs, sqrt_sigma):
    rng = make_rng(config.seed, 1, rep)
    lambdas = np.asarray(config.lambda_grid)
    X = draw_design(config.n, config.p, sqrt_sigma, rng, config.entry_dist)
    beta = gen_signal(config.sig, eigvecs, rng)
    y = X @ beta + np.sqrt(config.noise_var) * rng.standard_normal(config.n)
    solver = RidgeSolver(Dataset(X, y))
    R, Rpd, C, D, _, _ = oracle_grid(solver, lambdas, beta, sqrt_sigma, config.noise_var)
    xi, rsd = closed_form(R, C, D, Rpd)
    emp = {"r_teacher": R, "r_pd": Rpd, "c_cross": C, "d_gap": D, "xi_star": xi, "r_sd_star": rsd}
    est, ok = gcv_grid(solver, lambdas)
    errors = [(rep, float(lam), "GCV correction diverges (df/n >= 1 - 1e-10)")
              for lam, good in zip(lambdas, ok) if not good]
    return emp, est, errors


def thread_cap():
    """Worker cap from ``SDRIDGE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SDRIDGE_THREADS", "1")))
    except ValueError:
        return 1


def run_simulation(config: SimConfig, workers=None) -> SimResult:
    workers = thread_cap() if workers is None else max(1, min(int(workers), thread_cap()))
    eigvals, eigvecs = gen_covariance(config.cov, make_rng(config.seed, 0))
    if config.cov.kind == "isotropic":
        sqrt_sigma = None
    else:
        sqrt_sigma = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    lambdas = np.asarray(config.lambda_grid)
    L, reps = lambdas.size, config.reps

    def job(rep):
        return _one_rep(config, rep, eigvecs, sqrt_sigma)

    if workers > 1 and reps > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(reps)))
    else:
        results = [job(rep) for rep in range(reps)]

    empirical = {m: np.empty((L, reps)) for m in EMPIRICAL_METRICS}
    estimated = {m: np.empty((L, reps)) for m in ESTIMATED_METRICS}
    errors = []
    for rep, (emp, est, errs) in enumerate(results):
        for m in EMPIRICAL_METRICS:
            empirical[m][:, rep] = emp[m]
        for m in ESTIMATED_METRICS:
            estimated[m][:, rep] = est[m]
        errors.extend(errs)
    theory = theory_curve(spectral_model(config, eigvals), lambdas)
    return SimResult(config, lambdas, empirical, estimated, theory, errors)
