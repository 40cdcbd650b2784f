"""Deterministic l1 comparison methods: SRC and iteratively reweighted l1 (ISR).

Every probe frame is an independent problem. Passing a d x L matrix solves
the L problems side by side; no information is shared between columns.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .gallery import Gallery, ProbeSet, remove_subject
from .ranking import RankingResult, classify_src, subject_residuals

POWER_ITERS = 50
# power iteration under-estimates the top eigenvalue
LIPSCHITZ_MARGIN = 1.05


@dataclass(frozen=True)
class L1Config:
    """Settings for the l1 solvers.

    ``lambda_l1=None`` picks ``lambda_rel * ||A^T y||_inf`` per frame.
    """

    lambda_l1: Optional[float] = None
    lambda_rel: float = 1e-2
    max_iters: int = 500
    tol: float = 1e-6
    epsilon: float = 1e-2
    reweight_rounds: int = 4

    def __post_init__(self):
        if self.lambda_l1 is not None and not self.lambda_l1 > 0:
            raise InvalidInputError("lambda_l1 must be positive")
        if not self.lambda_rel > 0:
            raise InvalidInputError("lambda_rel must be positive")
        if self.max_iters < 1 or self.reweight_rounds < 1:
            raise InvalidInputError("max_iters and reweight_rounds must be >= 1")
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")


def _dictionary(gallery):
    return gallery.matrix if isinstance(gallery, Gallery) else np.asarray(gallery, dtype=float)


def top_eigenvalue(A, iters=POWER_ITERS) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``A^T A``."""
    v = np.random.default_rng(0).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return float(np.linalg.norm(A @ v) ** 2)


def soft_threshold(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def l1_objective(A, Y, X, lam, weights=1.0):
    R = Y - A @ X
    return np.sum(R**2, axis=0) + lam * np.sum(weights * np.abs(X), axis=0)


def _lambda(A, Y, cfg):
    if cfg.lambda_l1 is not None:
        return np.full(Y.shape[1], float(cfg.lambda_l1))
    lam = cfg.lambda_rel * np.max(np.abs(A.T @ Y), axis=0)
    return np.where(lam > 0, lam, cfg.lambda_rel)


def solve_l1(gallery, y, cfg: L1Config, weights=None, x0=None) -> np.ndarray:
    """Minimise ``||y - A x||_2^2 + lam * ||W x||_1`` by monotone FISTA.

    ``y`` may be a vector or a d x L matrix of independent frames; the
    result has the matching shape. ``weights`` are the diagonal of ``W``
    (broadcast against the coefficient array). Iterates whose objective
    would increase are rejected, so the objective never goes up.
    """
    A = _dictionary(gallery)
    vector = np.ndim(y) == 1
    Y = np.asarray(y, dtype=float).reshape(A.shape[0], -1)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Y))):
        raise InvalidInputError("non-finite input to solve_l1")
    N, L = A.shape[1], Y.shape[1]
    lam = _lambda(A, Y, cfg)
    W = np.ones((N, 1)) if weights is None else np.broadcast_to(np.asarray(weights, dtype=float).reshape(N, -1), (N, L))

    lip = 2.0 * LIPSCHITZ_MARGIN * top_eigenvalue(A)
    X = np.zeros((N, L)) if x0 is None else np.array(x0, dtype=float).reshape(N, L)
    if lip == 0:
        return X.ravel() if vector else X
    step = 1.0 / lip
    thr = step * lam * W

    F = l1_objective(A, Y, X, lam, W)
    Z, t = X.copy(), 1.0
    for _ in range(cfg.max_iters):
        U = soft_threshold(Z - step * 2.0 * (A.T @ (A @ Z - Y)), thr)
        FU = l1_objective(A, Y, U, lam, W)
        accept = FU <= F
        X_new = np.where(accept, U, X)
        F_new = np.where(accept, FU, F)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Z = X_new + (t / t_new) * (U - X_new) + ((t - 1.0) / t_new) * (X_new - X)
        rel = (F - F_new) / np.maximum(F, np.finfo(float).tiny)
        X, F, t = X_new, F_new, t_new
        if np.all(accept) and np.all(rel < cfg.tol):
            break
    return X.ravel() if vector else X


def reweight(x, epsilon):
    """ISR weights ``1 / (|x| + epsilon)``."""
    return 1.0 / (np.abs(x) + epsilon)


def solve_reweighted_l1(gallery, y, cfg: L1Config, x0=None) -> np.ndarray:
    """Run ``cfg.reweight_rounds`` weighted l1 solves, each reweighted from the last.

    The starting estimate defaults to all ones, so the first round is a
    uniformly weighted solve.
    """
    A = _dictionary(gallery)
    x = np.ones((A.shape[1],) + np.shape(y)[1:]) if x0 is None else np.asarray(x0, dtype=float)
    for _ in range(cfg.reweight_rounds):
        x = solve_l1(A, y, cfg, weights=reweight(x, cfg.epsilon), x0=x)
    return x


def _frames(probe):
    Y = probe.Y if isinstance(probe, ProbeSet) else np.asarray(probe, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def rank_isr(gallery: Gallery, probe, cfg: L1Config, max_ranks=None) -> RankingResult:
    """Iterative ISR ranking with per-frame min residuals and column removal."""
    Y = _frames(probe)
    max_ranks = max_ranks or gallery.n_subjects
    if max_ranks > gallery.n_subjects:
        raise InvalidInputError(f"max_ranks={max_ranks} exceeds the {gallery.n_subjects} gallery subjects")
    result = RankingResult(probe_id=getattr(probe, "probe_id", None))
    current = gallery
    for r in range(max_ranks):
        X = solve_reweighted_l1(current, Y, cfg)
        c = result.add(subject_residuals(current, Y, X, kind="ISR-min"), cfg.reweight_rounds)
        if r + 1 < max_ranks:
            current, _ = remove_subject(current, c)
    return result


def rank_src(gallery: Gallery, probe, cfg: L1Config, max_ranks=None) -> RankingResult:
    """Single-shot SRC on the first probe frame; one l1 solve, residual sort."""
    y = _frames(probe)[:, 0]
    max_ranks = max_ranks or gallery.n_subjects
    x = solve_l1(gallery, y, cfg)
    order = classify_src(gallery, y, x)
    residuals = subject_residuals(gallery, y, x, kind="ISR-min")
    result = RankingResult(probe_id=getattr(probe, "probe_id", None))
    for r in range(max_ranks):
        remaining = {c: residuals[c] for c in order[r:]}
        result.add(remaining, 1)
    return result
