"""CSV/JSON readers and writers.

Matrices are plain CSV, one matrix row per line, no header; floats are
written with 17 significant digits so they read back bit-exactly.
"""

import csv
import hashlib
import json
import warnings
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .gallery import ProbeSet, build_gallery

FLOAT_FMT = "%.17g"


def write_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, delimiter=",", fmt=FLOAT_FMT)


def read_matrix(path) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            # an empty file is reported below as an error
            warnings.simplefilter("ignore", UserWarning)
            M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot parse matrix file {path}: {exc}") from exc
    if M.size == 0:
        raise InvalidInputError(f"matrix file {path} is empty")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"matrix file {path} contains non-finite entries")
    return M


def write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(s)}\n" for s in labels))


def read_labels(path) -> list:
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        return [int(ln) for ln in lines]
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot parse labels file {path}: {exc}") from exc


def load_gallery(matrix_path, labels_path):
    return build_gallery(read_matrix(matrix_path), read_labels(labels_path))


def load_probe(path, true_subject=None) -> ProbeSet:
    return ProbeSet(read_matrix(path), true_subject=true_subject, probe_id=Path(path).stem)


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def write_rows(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (FLOAT_FMT % v if isinstance(v, float) else v) for k, v in row.items()})


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
