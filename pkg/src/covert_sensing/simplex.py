"""Probability-simplex helpers: Euclidean projection, softmax maps, grids."""

import itertools

import numpy as np


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max())
    return e / e.sum()


def simplex_grid(k: int, steps: int):
    """All points of the ``k``-simplex with coordinates in multiples of ``1/steps``."""
    for cut in itertools.combinations(range(steps + k - 1), k - 1):
        prev, counts = -1, []
        for c in cut:
            counts.append(c - prev - 1)
            prev = c
        counts.append(steps + k - 2 - prev)
        yield np.array(counts, dtype=float) / steps


def simplex_least_squares(A, b, restarts: int = 10, iters: int = 10_000, rng=None):
    """Minimise ``||A p - b||_2`` over the simplex.

    Projected gradient with step ``1/L`` (``L`` the Lipschitz constant of the
    squared objective's gradient) from ``restarts`` random starts, then an
    exact equality-constrained solve on the detected support.

    Returns:
        (p, residual_norm)
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    k = A.shape[1]
    rng = np.random.default_rng(0) if rng is None else rng
    gram = A.T @ A
    atb = A.T @ b
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1]) if k else 0.0
    step = 1.0 / lip if lip > 0 else 1.0

    def resid(p):
        return float(np.linalg.norm(A @ p - b))

    starts = [np.full(k, 1.0 / k)] + [rng.dirichlet(np.ones(k)) for _ in range(max(restarts - 1, 0))]
    starts += list(np.eye(k))
    best_p, best_r = starts[0], resid(starts[0])
    for p in starts:
        p = p.copy()
        for _ in range(iters):
            nxt = project_to_simplex(p - step * 2.0 * (gram @ p - atb))
            if np.max(np.abs(nxt - p)) < 1e-13:
                p = nxt
                break
            p = nxt
        for cand in (p, _polish(A, b, p)):
            if cand is not None:
                r = resid(cand)
                if r < best_r:
                    best_p, best_r = cand, r
    return best_p, best_r


def _polish(A, b, p, support_tol: float = 1e-10):
    s = np.flatnonzero(p > support_tol)
    if s.size == 0:
        return None
    As = A[:, s]
    m = s.size
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = 2.0 * As.T @ As
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.concatenate([2.0 * As.T @ b, [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:m]
    if np.any(sol < -1e-12):
        return None
    out = np.zeros_like(p)
    out[s] = np.clip(sol, 0.0, None)
    return out / out.sum()
