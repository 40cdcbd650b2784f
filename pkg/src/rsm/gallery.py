"""Gallery dictionary, subject blocks and probe containers.

Subject ids are 1-based and dense (1..C) at ingest; the original labels are
kept in ``Gallery.label_map`` so that reports can translate back. Column
indices are ordinary 0-based numpy indices.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError, SubjectAbsentError


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Gallery:
    """Immutable gallery: d x N dictionary with one block of columns per subject.

    Attributes
    ----------
    matrix : ndarray, shape (d, N)
    labels : ndarray of int, shape (N,)
        Dense subject id of every column.
    blocks : dict
        Subject id -> sorted 0-based column indices. Iteration order is
        ascending subject id.
    label_map : dict
        Dense subject id -> original label as supplied by the user.
    """

    matrix: np.ndarray
    labels: np.ndarray
    blocks: Dict[int, np.ndarray]
    label_map: Dict[int, int] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def subjects(self) -> Tuple[int, ...]:
        return tuple(self.blocks)

    @property
    def n_subjects(self) -> int:
        return len(self.blocks)

    @property
    def is_empty(self) -> bool:
        return self.n_columns == 0

    def block_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.blocks.values()], dtype=int)

    def column_block_index(self) -> np.ndarray:
        """Position (0..C-1, in ``subjects`` order) of each column's block."""
        pos = {c: k for k, c in enumerate(self.blocks)}
        return np.array([pos[int(s)] for s in self.labels], dtype=int)

    def original_label(self, c: int) -> int:
        return self.label_map.get(c, c)

    def normalized(self) -> "Gallery":
        """Copy with every column scaled to unit l2 norm (zero columns left as-is)."""
        norms = np.linalg.norm(self.matrix, axis=0)
        norms[norms == 0] = 1.0
        return Gallery(_readonly(self.matrix / norms), self.labels, self.blocks, self.label_map)


@dataclass(frozen=True)
class ProbeSet:
    """One probe video: d x L matrix of frames, optionally with its true subject."""

    Y: np.ndarray
    true_subject: Optional[int] = None
    probe_id: Optional[str] = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[1] < 1 or Y.shape[0] < 1:
            raise InvalidInputError(f"probe must be a non-empty d x L matrix, got shape {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise InvalidInputError("probe contains non-finite entries")
        object.__setattr__(self, "Y", _readonly(Y))

    @property
    def L(self) -> int:
        return self.Y.shape[1]

    def check_against(self, gallery: Gallery) -> None:
        if self.Y.shape[0] != gallery.d:
            raise DimensionMismatchError(
                f"probe has d={self.Y.shape[0]} rows but gallery has d={gallery.d}"
            )


def build_gallery(matrix, labels: Sequence[int]) -> Gallery:
    """Build a gallery from a d x N matrix and N positive integer labels.

    Labels are re-indexed densely to 1..C in order of first appearance.
    """
    A = np.asarray(matrix, dtype=float)
    labels = [int(s) for s in np.asarray(labels).ravel()]
    if A.ndim != 2 or A.size == 0 or not labels:
        raise InvalidInputError("gallery matrix and labels must be non-empty")
    if A.shape[1] != len(labels):
        raise DimensionMismatchError(
            f"gallery matrix has N={A.shape[1]} columns but {len(labels)} labels were given"
        )
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("gallery matrix contains non-finite entries")
    if min(labels) < 1:
        raise InvalidInputError("labels must be positive integers")

    dense: Dict[int, int] = {}
    for s in labels:
        if s not in dense:
            dense[s] = len(dense) + 1
    dense_labels = np.array([dense[s] for s in labels], dtype=int)
    dense_labels.setflags(write=False)
    blocks = _blocks_from_labels(dense_labels)
    label_map = {c: s for s, c in dense.items()}
    return Gallery(_readonly(A), dense_labels, blocks, label_map)


def _blocks_from_labels(labels: np.ndarray) -> Dict[int, np.ndarray]:
    blocks = {}
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        idx.setflags(write=False)
        blocks[c] = idx
    return blocks


def select_subject(x, c: int, blocks: Mapping[int, np.ndarray]) -> np.ndarray:
    """Zero every entry of ``x`` outside subject ``c``'s block.

    Works row-wise on 2-D input, so an N x L coefficient matrix is masked
    for all frames at once. The input is not modified.
    """
    if c not in blocks:
        raise SubjectAbsentError(c)
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    g = blocks[c]
    out[g] = x[g]
    return out


def remove_subject(gallery: Gallery, c: int) -> Tuple[Gallery, np.ndarray]:
    """Drop subject ``c``'s columns.

    Returns the reduced gallery and ``index_map`` where ``index_map[new]`` is
    the column's index in the input gallery. Surviving subjects keep their ids.
    """
    if c not in gallery.blocks:
        raise SubjectAbsentError(c)
    keep = np.flatnonzero(gallery.labels != c)
    labels = gallery.labels[keep]
    labels.setflags(write=False)
    reduced = Gallery(
        _readonly(gallery.matrix[:, keep]),
        labels,
        _blocks_from_labels(labels),
        gallery.label_map,
    )
    keep.setflags(write=False)
    return reduced, keep
