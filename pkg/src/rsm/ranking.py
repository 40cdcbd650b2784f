"""Residual classifiers and the iterative rank-and-remove procedure."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .errors import InvalidInputError, SubjectAbsentError
from .gallery import Gallery, ProbeSet, remove_subject
from .inference import Hyperparams, InferenceConfig, PosteriorState, run_inference

logger = logging.getLogger(__name__)

RESIDUAL_KINDS = ("SRID", "ISR-min")


@dataclass(frozen=True)
class RankingConfig:
    """Warm-start fraction ``zeta``, per-rank iteration decay ``tau``.

    ``max_ranks=None`` ranks every subject.
    """

    zeta: float = 1.0
    tau: float = 1.0
    residual_kind: str = "SRID"
    max_ranks: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.zeta <= 1:
            raise InvalidInputError(f"zeta must lie in (0, 1], got {self.zeta}")
        if not 0 < self.tau <= 1:
            raise InvalidInputError(f"tau must lie in (0, 1], got {self.tau}")
        if self.residual_kind not in RESIDUAL_KINDS:
            raise InvalidInputError(f"residual_kind must be one of {RESIDUAL_KINDS}")
        if self.max_ranks is not None and self.max_ranks < 1:
            raise InvalidInputError("max_ranks must be >= 1")


@dataclass
class RankingResult:
    """Ranked subject ids (dense ids of the source gallery) with per-rank residuals."""

    psi: List[int] = field(default_factory=list)
    residual_trace: List[Dict[int, float]] = field(default_factory=list)
    iterations_used: List[int] = field(default_factory=list)
    probe_id: Optional[str] = None

    def add(self, residuals: Dict[int, float], iterations: int = 0) -> int:
        c = pick_subject(residuals)
        self.psi.append(c)
        self.residual_trace.append(dict(residuals))
        self.iterations_used.append(int(iterations))
        return c

    def rank_of(self, subject) -> Optional[int]:
        """1-based rank of ``subject``, or None if it was not ranked."""
        try:
            return self.psi.index(subject) + 1
        except ValueError:
            return None

    def to_dict(self, label_map=None) -> dict:
        lab = (lambda c: int(label_map.get(c, c))) if label_map else int
        residuals = [
            {"rank": r, "subject": lab(c), "value": float(v)}
            for r, trace in enumerate(self.residual_trace, start=1)
            for c, v in sorted(trace.items())
        ]
        return {
            "probe_id": self.probe_id,
            "psi": [lab(c) for c in self.psi],
            "residuals": residuals,
            "iterations": list(self.iterations_used),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RankingResult":
        n = len(doc["psi"])
        trace: List[Dict[int, float]] = [{} for _ in range(n)]
        for item in doc["residuals"]:
            trace[item["rank"] - 1][int(item["subject"])] = float(item["value"])
        return cls(
            psi=[int(c) for c in doc["psi"]],
            residual_trace=trace,
            iterations_used=[int(t) for t in doc["iterations"]],
            probe_id=doc.get("probe_id"),
        )


def pick_subject(residuals: Dict[int, float]) -> int:
    """Argmin of the residual map; ties go to the smallest subject id."""
    return min(residuals, key=lambda c: (residuals[c], c))


def _frames(probe):
    Y = probe.Y if isinstance(probe, ProbeSet) else np.asarray(probe, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def _block_fit(gallery, mu_x, c):
    if c not in gallery.blocks:
        raise SubjectAbsentError(c)
    g = gallery.blocks[c]
    return gallery.matrix[:, g] @ np.asarray(mu_x)[g]


def residual_srid(gallery, probe, mu_x, mu_e, c) -> float:
    """Sum over frames of ``||Y_i - E_i - A phi_c(X_i)||_2``."""
    Y = _frames(probe)
    R = Y - np.asarray(mu_e).reshape(Y.shape) - _block_fit(gallery, np.reshape(mu_x, (-1, Y.shape[1])), c)
    return float(np.sum(np.linalg.norm(R, axis=0)))


def residual_isr(gallery, probe, mu_x, c) -> float:
    """Smallest per-frame residual ``min_i ||Y_i - A phi_c(X_i)||_2``."""
    Y = _frames(probe)
    R = Y - _block_fit(gallery, np.reshape(mu_x, (-1, Y.shape[1])), c)
    return float(np.min(np.linalg.norm(R, axis=0)))


def subject_residuals(gallery, probe, mu_x, mu_e=None, kind="SRID") -> Dict[int, float]:
    if kind == "SRID":
        mu_e = np.zeros_like(_frames(probe)) if mu_e is None else mu_e
        return {c: residual_srid(gallery, probe, mu_x, mu_e, c) for c in gallery.subjects}
    if kind == "ISR-min":
        return {c: residual_isr(gallery, probe, mu_x, c) for c in gallery.subjects}
    raise InvalidInputError(f"unknown residual kind {kind!r}")


def classify_src(gallery, probe_column, x_hat) -> List[int]:
    """Subjects sorted by ascending single-frame residual (ties: smallest id first)."""
    y = np.asarray(probe_column, dtype=float).ravel()
    x_hat = np.asarray(x_hat, dtype=float).ravel()
    r = {c: float(np.linalg.norm(y - _block_fit(gallery, x_hat, c))) for c in gallery.subjects}
    return sorted(r, key=lambda c: (r[c], c))


def iteration_budget(T, tau, rank_index) -> int:
    """Sweeps for the 0-based ``rank_index``: ``max(1, floor(tau**r * T))``."""
    return max(1, math.floor(T * tau**rank_index + 1e-9))


def snapshot_iteration(zeta, iters) -> int:
    return min(iters, max(1, math.ceil(zeta * iters - 1e-9)))


def drop_subject_state(state: PosteriorState, gallery: Gallery, c, keep) -> PosteriorState:
    """Remove subject ``c``'s coefficients and block precision from ``state``.

    ``keep`` is the surviving-column map returned by ``remove_subject``. The
    shared covariance is discarded; the next q(X) update rebuilds it.
    Outlier moments are indexed by (feature, frame) and carry over as-is.
    """
    pos = gallery.subjects.index(c)
    return replace(
        state,
        mu_x=state.mu_x[keep],
        sigma_x=None,
        inv_gamma_mean=np.delete(state.inv_gamma_mean, pos),
    )


def rank_subjects(
    gallery: Gallery,
    probe,
    hyper: Hyperparams,
    inf_config: InferenceConfig,
    rank_config: RankingConfig = RankingConfig(),
) -> RankingResult:
    """Rank gallery subjects for one probe by repeated inference and removal.

    Rank ``r`` (0-based) runs ``iteration_budget(T, tau, r)`` sweeps starting
    from the state saved during the previous rank at iteration
    ``ceil(zeta * sweeps)``, with the removed subject's entries deleted.
    """
    Y = _frames(probe)
    max_ranks = rank_config.max_ranks or gallery.n_subjects
    if max_ranks > gallery.n_subjects:
        raise InvalidInputError(f"max_ranks={max_ranks} exceeds the {gallery.n_subjects} gallery subjects")
    result = RankingResult(probe_id=getattr(probe, "probe_id", None))
    current, warm = gallery, None
    for r in range(max_ranks):
        iters = iteration_budget(inf_config.max_iters, rank_config.tau, r)
        run = run_inference(
            current,
            Y,
            hyper,
            replace(inf_config, max_iters=iters),
            state=warm,
            snapshot_at=snapshot_iteration(rank_config.zeta, iters),
        )
        residuals = subject_residuals(current, Y, run.state.mu_x, run.state.mu_e, rank_config.residual_kind)
        c = result.add(residuals, run.iterations)
        logger.debug("rank %d: subject %d after %d sweeps", r + 1, c, run.iterations)
        if r + 1 < max_ranks:
            reduced, keep = remove_subject(current, c)
            warm = drop_subject_state(run.snapshot, current, c, keep)
            current = reduced
    return result
