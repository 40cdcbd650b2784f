"""Variational Bayes updates for the robust joint-block-sparse model.

Model: ``Y = A X + V + E`` with dense Gaussian noise ``V`` of variance
``lam``, block/joint-sparse coefficients ``X`` whose rows in block ``g_c``
share the variance ``gamma_c``, and sparse outliers ``E`` with one variance
``D[j, i]`` per entry. Both variances carry inverse-gamma priors.

Each sweep updates, in order, q(X), q(gamma), q(E) and q(D). The state
stores the means and the moments that the other factors consume.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy import linalg

from .errors import DimensionMismatchError, InvalidInputError, NumericalError
from .gallery import Gallery, ProbeSet

logger = logging.getLogger(__name__)

WOODBURY_MODES = ("auto", "always", "never")


@dataclass(frozen=True)
class Hyperparams:
    """Dense-noise variance and inverse-gamma shape/scale parameters.

    The all-zero inverse-gamma setting is the non-informative default.
    """

    lam: float = 1.0
    alpha_gamma: float = 0.0
    beta_gamma: float = 0.0
    alpha_delta: float = 0.0
    beta_delta: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidInputError(f"lambda must be positive and finite, got {self.lam}")
        for name in ("alpha_gamma", "beta_gamma", "alpha_delta", "beta_delta"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidInputError(f"{name} must be >= 0, got {v}")


@dataclass(frozen=True)
class InferenceConfig:
    """Iteration budget and numerical guards.

    ``precision_floor=None`` derives the floor from the probe scale as
    ``1e-12 * rms(Y)``. ``tol=0`` runs exactly ``max_iters`` sweeps.
    """

    max_iters: int = 100
    tol: float = 0.0
    precision_floor: Optional[float] = None
    use_woodbury: str = "auto"

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidInputError(f"T (max_iters) must be an integer >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise InvalidInputError(f"tol must be >= 0, got {self.tol}")
        if self.precision_floor is not None and not self.precision_floor > 0:
            raise InvalidInputError("precision_floor must be positive")
        if self.use_woodbury not in WOODBURY_MODES:
            raise InvalidInputError(f"use_woodbury must be one of {WOODBURY_MODES}")


@dataclass(frozen=True)
class PosteriorState:
    """Variational factor parameters.

    Attributes
    ----------
    mu_x : (N, L) posterior means of the coefficient columns.
    sigma_x : (N, N) covariance shared by every column, ``None`` before the
        first q(X) update.
    mu_e : (d, L) outlier means.
    sigma_e_diag : (d, L) outlier variances, ``None`` before the first q(E) update.
    inv_gamma_mean : (C,) expected block precisions, ordered like ``Gallery.subjects``.
    inv_D_mean : (d, L) expected outlier precisions.
    """

    mu_x: np.ndarray
    sigma_x: Optional[np.ndarray]
    mu_e: np.ndarray
    sigma_e_diag: Optional[np.ndarray]
    inv_gamma_mean: np.ndarray
    inv_D_mean: np.ndarray

    def is_finite(self) -> bool:
        arrays = [self.mu_x, self.mu_e, self.inv_gamma_mean, self.inv_D_mean]
        arrays += [a for a in (self.sigma_x, self.sigma_e_diag) if a is not None]
        return all(np.all(np.isfinite(a)) for a in arrays)


@dataclass(frozen=True)
class Guards:
    """Denominator floor and precision cap for the moment updates."""

    floor: float
    cap: float

    @classmethod
    def for_probe(cls, Y, precision_floor=None):
        scale = float(np.sqrt(np.mean(np.square(Y))))
        if not scale > 0:
            scale = 1.0
        floor = 1e-12 * scale if precision_floor is None else float(precision_floor)
        return cls(floor=floor, cap=1e12 / scale**2)


@dataclass
class InferenceRun:
    state: PosteriorState
    trace: List[float]
    snapshot: PosteriorState
    guards: Guards = field(repr=False, default=None)

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _matrix(probe):
    Y = probe.Y if isinstance(probe, ProbeSet) else np.asarray(probe, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def init_state(gallery: Gallery, L: int) -> PosteriorState:
    if gallery.is_empty:
        raise InvalidInputError("cannot initialise inference on an empty gallery")
    if L < 1:
        raise InvalidInputError("L must be >= 1")
    return PosteriorState(
        mu_x=np.ones((gallery.n_columns, L)),
        sigma_x=None,
        mu_e=np.zeros((gallery.d, L)),
        sigma_e_diag=None,
        inv_gamma_mean=np.ones(gallery.n_subjects),
        inv_D_mean=np.ones((gallery.d, L)),
    )


def column_precisions(inv_gamma_mean, gallery: Gallery) -> np.ndarray:
    """Expand per-block precisions to one weight per gallery column."""
    return np.asarray(inv_gamma_mean, dtype=float)[gallery.column_block_index()]


def _use_woodbury(mode, d, N):
    if mode == "always":
        return True
    if mode == "never":
        return False
    return d < N


def posterior_x(A, w, R, lam, woodbury):
    """Covariance and mean of q(X) for column precisions ``w`` and target ``R``.

    Returns ``(sigma, mu)`` with ``sigma = (A^T A / lam + diag(w))^-1`` and
    ``mu = sigma A^T R / lam``. The Woodbury route factors the d x d matrix
    ``lam I + A W^-1 A^T`` instead of the N x N precision.
    """
    d, N = A.shape
    try:
        if woodbury:
            g = 1.0 / w
            AG = A * g
            K = lam * np.eye(d) + AG @ A.T
            cho = linalg.cho_factor(K, lower=True, check_finite=False)
            sigma = np.diag(g) - AG.T @ linalg.cho_solve(cho, AG, check_finite=False)
            mu = AG.T @ linalg.cho_solve(cho, R, check_finite=False)
        else:
            P = (A.T @ A) / lam
            P[np.diag_indices(N)] += w
            cho = linalg.cho_factor(P, lower=True, check_finite=False)
            sigma = linalg.cho_solve(cho, np.eye(N), check_finite=False)
            mu = linalg.cho_solve(cho, (A.T @ R) / lam, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"q(X) system is not positive definite: {exc}") from exc
    sigma = 0.5 * (sigma + sigma.T)
    return sigma, mu


def update_qx(state, gallery, probe, hyper, use_woodbury="auto") -> PosteriorState:
    A = gallery.matrix
    Y = _matrix(probe)
    w = column_precisions(state.inv_gamma_mean, gallery)
    woodbury = _use_woodbury(use_woodbury, *A.shape)
    sigma, mu = posterior_x(A, w, Y - state.mu_e, hyper.lam, woodbury)
    return replace(state, sigma_x=sigma, mu_x=mu)


def update_qe(state, gallery, probe, hyper) -> PosteriorState:
    Y = _matrix(probe)
    sigma_e = 1.0 / (1.0 / hyper.lam + state.inv_D_mean)
    residual = Y - gallery.matrix @ state.mu_x
    mu_e = sigma_e * residual / hyper.lam
    return replace(state, sigma_e_diag=sigma_e, mu_e=mu_e)


def block_second_moment(state, blocks, L) -> np.ndarray:
    """Expected squared Frobenius norm of each block of rows of X."""
    diag = np.diag(state.sigma_x)
    M = state.mu_x
    return np.array([np.sum(M[g] ** 2) + L * np.sum(diag[g]) for g in blocks.values()])


def update_gamma_moment(second_moment, block_sizes, L, hyper, floor, cap=np.inf) -> np.ndarray:
    num = L * np.asarray(block_sizes, dtype=float) / 2.0 + hyper.alpha_gamma
    den = np.maximum(np.asarray(second_moment, dtype=float) / 2.0 + hyper.beta_gamma, floor)
    return np.minimum(num / den, cap)


def update_D_moment(state, hyper, floor, cap=np.inf) -> np.ndarray:
    e2 = state.mu_e**2 + state.sigma_e_diag
    den = np.maximum(e2 / 2.0 + hyper.beta_delta, floor)
    return np.minimum((0.5 + hyper.alpha_delta) / den, cap)


def _check_state(state, gallery, L):
    N, d, C = gallery.n_columns, gallery.d, gallery.n_subjects
    expected = {
        "mu_x": (state.mu_x, (N, L)),
        "mu_e": (state.mu_e, (d, L)),
        "inv_gamma_mean": (state.inv_gamma_mean, (C,)),
        "inv_D_mean": (state.inv_D_mean, (d, L)),
    }
    for name, (arr, shape) in expected.items():
        if np.shape(arr) != shape:
            raise DimensionMismatchError(f"warm-start {name} has shape {np.shape(arr)}, expected {shape}")


def sweep(state, gallery, Y, hyper, guards, use_woodbury="auto") -> PosteriorState:
    """One pass of q(X), q(gamma), q(E), q(D) updates."""
    L = Y.shape[1]
    state = update_qx(state, gallery, Y, hyper, use_woodbury)
    m2 = block_second_moment(state, gallery.blocks, L)
    inv_gamma = update_gamma_moment(m2, gallery.block_sizes(), L, hyper, guards.floor, guards.cap)
    state = replace(state, inv_gamma_mean=inv_gamma)
    state = update_qe(state, gallery, Y, hyper)
    inv_D = update_D_moment(state, hyper, guards.floor, guards.cap)
    return replace(state, inv_D_mean=inv_D)


def run_inference(gallery, probe, hyper, config, state=None, snapshot_at=None) -> InferenceRun:
    """Iterate the VB sweeps from ``state`` (or a fresh start).

    ``snapshot_at`` names the 1-based iteration whose state is returned as
    ``InferenceRun.snapshot``; if the run stops before it, the final state
    is used. The trace holds, per sweep, the largest change of ``mu_x``
    relative to the largest previous coefficient magnitude.
    """
    Y = _matrix(probe)
    if Y.shape[0] != gallery.d:
        raise DimensionMismatchError(f"probe has d={Y.shape[0]} rows but gallery has d={gallery.d}")
    L = Y.shape[1]
    if state is None:
        state = init_state(gallery, L)
    else:
        _check_state(state, gallery, L)
    guards = Guards.for_probe(Y, config.precision_floor)

    trace = []
    snapshot = None
    for t in range(1, config.max_iters + 1):
        mu0 = state.mu_x
        state = sweep(state, gallery, Y, hyper, guards, config.use_woodbury)
        if not state.is_finite():
            raise NumericalError("non-finite posterior state", iteration=t)
        change = float(np.max(np.abs(state.mu_x - mu0)) / (np.max(np.abs(mu0)) + guards.floor))
        trace.append(change)
        if t == snapshot_at:
            snapshot = state
        if config.tol > 0 and change < config.tol:
            logger.debug("converged after %d sweeps (change %.3g)", t, change)
            break
    if snapshot is None:
        snapshot = state
    return InferenceRun(state=state, trace=trace, snapshot=snapshot, guards=guards)
