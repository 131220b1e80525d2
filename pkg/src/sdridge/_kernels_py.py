"""Pure numpy implementations of the spectral grid kernels.

Same signatures and return conventions as the compiled ``_kernels`` module.
"""

import numpy as np


def kappa_grid(eigs, gamma, lambdas, tol=1e-12, maxiter=200):
    """Solve kappa = lam + gamma * kappa * mean(s / (s + kappa)) for each lam.

    Returns ``(kappas, iterations)``. ``iterations[j] == -1`` flags a grid
    point that did not reach ``tol`` within ``maxiter`` steps.
    """
    s = np.ascontiguousarray(eigs, dtype=np.float64)
    lambdas = np.ascontiguousarray(lambdas, dtype=np.float64)
    smax = float(s.max()) if s.size else 0.0
    out = np.empty_like(lambdas)
    iters = np.full(lambdas.shape, -1, dtype=np.int64)
    for j, lam in enumerate(lambdas):
        lo, hi = lam, lam + gamma * smax
        k = lo
        for it in range(1, maxiter + 1):
            r = s / (s + k)
            h = 1.0 - gamma * r.mean() - lam / k
            if abs(h) <= tol:
                iters[j] = it
                break
            if h < 0.0:
                lo = k
            else:
                hi = k
            dh = gamma * (r / (s + k)).mean() + lam / (k * k)
            step = k - h / dh
            if not (lo < step < hi):
                step = np.sqrt(lo * hi) if lo > 0.0 else 0.5 * (lo + hi)
            if hi - lo <= 4e-16 * hi:
                iters[j] = it
                k = step
                break
            k = step
        out[j] = k
    return out, iters


def functionals_grid(eigs, beta2, gamma, kappas):
    """Trace and alignment functionals on a kappa grid.

    Columns of the returned ``(L, 8)`` array are t2, t3, t4, q2, q3, q4, d1, d2
    with ``G = 1 / (s + kappa)``, ``t_k = gamma * mean(s**2 G**k)``,
    ``q_k = sum(beta2 s G**k)`` and, for ``c = kappa t3 / (1 - t2)``,
    ``d_j = sum(beta2 s G**2 (s G - c)**j)``. The last two feed the
    cancellation-free forms of R - C and D.
    """
    s = np.asarray(eigs, dtype=np.float64)[None, :]
    w = np.asarray(beta2, dtype=np.float64)[None, :]
    k = np.asarray(kappas, dtype=np.float64)[:, None]
    g = 1.0 / (s + k)
    g2 = g * g
    g3 = g2 * g
    g4 = g2 * g2
    s2 = s * s
    out = np.empty((k.shape[0], 8))
    out[:, 0] = gamma * (s2 * g2).mean(axis=1)
    out[:, 1] = gamma * (s2 * g3).mean(axis=1)
    out[:, 2] = gamma * (s2 * g4).mean(axis=1)
    ws = w * s
    out[:, 3] = (ws * g2).sum(axis=1)
    out[:, 4] = (ws * g3).sum(axis=1)
    out[:, 5] = (ws * g4).sum(axis=1)
    c = k[:, 0] * out[:, 1] / (1.0 - out[:, 0])
    dev = s * g - c[:, None]
    out[:, 6] = (ws * g2 * dev).sum(axis=1)
    out[:, 7] = (ws * g2 * dev * dev).sum(axis=1)
    return out


def shrinkage_traces(eigs, lambdas):
    """Return ``(df, df_pd)`` with df = sum h, df_pd = sum h**2, h = s/(s+lam)."""
    s = np.asarray(eigs, dtype=np.float64)[None, :]
    lam = np.asarray(lambdas, dtype=np.float64)[:, None]
    h = s / (s + lam)
    return h.sum(axis=1), (h * h).sum(axis=1)
