"""Synthetic multi-shot identification data, CMC evaluation and experiment runners.

Random numbers come from numpy's PCG64 bit generator seeded with the
configured 64-bit seed; trial ``t`` uses ``seed + t``. Draw order per
instance: all subject bases, then gallery coefficients and noise subject by
subject, then per probe its coefficients, dense noise, outlier mask and
outlier magnitudes.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .baselines import L1Config, rank_isr, rank_src
from .errors import InvalidInputError
from .gallery import Gallery, ProbeSet, build_gallery
from .inference import Hyperparams, InferenceConfig
from .ranking import RankingConfig, RankingResult, rank_subjects

logger = logging.getLogger(__name__)

METHODS = ("RSM", "ISR", "SRC")
GENERATOR_METADATA = {"library": "numpy", "bit_generator": "PCG64", "seed_rule": "seed + trial"}


@dataclass(frozen=True)
class GeneratorConfig:
    C: int = 10
    block_size: int = 4
    d: int = 60
    L: int = 5
    k: int = 3
    sigma_v: float = 0.0
    outlier_prob: float = 0.0
    outlier_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.C < 1 or self.L < 1 or self.k < 1:
            raise InvalidInputError("C, L and k must be >= 1")
        if not self.k <= self.block_size <= self.d:
            raise InvalidInputError(
                f"invariant k <= block_size <= d violated (k={self.k}, block_size={self.block_size}, d={self.d})"
            )
        if not 0 <= self.outlier_prob <= 1:
            raise InvalidInputError("outlier_prob must lie in [0, 1]")
        if not self.sigma_v >= 0 or not self.outlier_scale >= 0:
            raise InvalidInputError("sigma_v and outlier_scale must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")


class SyntheticInstance(NamedTuple):
    gallery: Gallery
    probes: List[ProbeSet]
    bases: List[np.ndarray]
    outlier_masks: List[np.ndarray]


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def generate_instance(cfg: GeneratorConfig) -> SyntheticInstance:
    """Draw a gallery with one k-dim subspace per subject and one probe per subject.

    Probe entries hit by an outlier get an extra
    ``outlier_scale * ||clean frame||_2 * N(0, 1)``.
    """
    rng = make_rng(cfg.seed)
    d, k, b = cfg.d, cfg.k, cfg.block_size
    bases = [rng.standard_normal((d, k)) for _ in range(cfg.C)]
    columns = []
    for B in bases:
        columns.append(B @ rng.standard_normal((k, b)) + cfg.sigma_v * rng.standard_normal((d, b)))
    labels = np.repeat(np.arange(1, cfg.C + 1), b)
    gallery = build_gallery(np.hstack(columns), labels)

    probes, masks = [], []
    for c, B in enumerate(bases, start=1):
        clean = B @ rng.standard_normal((k, cfg.L))
        noise = cfg.sigma_v * rng.standard_normal((d, cfg.L))
        mask = rng.random((d, cfg.L)) < cfg.outlier_prob
        magnitude = rng.standard_normal((d, cfg.L))
        outliers = cfg.outlier_scale * np.linalg.norm(clean, axis=0) * magnitude * mask
        probes.append(ProbeSet(clean + noise + outliers, true_subject=c, probe_id=f"probe_{c}"))
        masks.append(mask)
    return SyntheticInstance(gallery, probes, bases, masks)


@dataclass(frozen=True)
class CmcCurve:
    accuracy: List[float]
    std: Optional[List[float]] = None

    @property
    def rank1(self) -> float:
        return self.accuracy[0]


def compute_cmc(results: Sequence[RankingResult], truths: Sequence[int], n_ranks=None) -> CmcCurve:
    """Fraction of probes whose true subject is within the first r ranks, r = 1..R.

    R defaults to the longest ranking. A probe whose ranking is shorter than
    r counts as a hit only if its truth appears in what it did rank.
    """
    if len(results) != len(truths) or not results:
        raise InvalidInputError("need one truth per ranking and at least one ranking")
    R = n_ranks or max(len(res.psi) for res in results)
    hits = np.zeros(R)
    for res, truth in zip(results, truths):
        rank = res.rank_of(truth)
        if rank is not None and rank <= R:
            hits[rank - 1:] += 1
    return CmcCurve((hits / len(results)).tolist())


def rank_probe(method, gallery, probe, hyper, inf_cfg, rank_cfg, l1_cfg) -> RankingResult:
    method = method.upper()
    if method == "RSM":
        return rank_subjects(gallery, probe, hyper, inf_cfg, rank_cfg)
    if method == "ISR":
        return rank_isr(gallery, probe, l1_cfg, rank_cfg.max_ranks)
    if method == "SRC":
        return rank_src(gallery, probe, l1_cfg, rank_cfg.max_ranks)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a trial needs; picklable so trials can run in worker processes."""

    gen: GeneratorConfig
    methods: tuple
    hyper: Hyperparams = Hyperparams()
    inf: InferenceConfig = InferenceConfig()
    rank: RankingConfig = RankingConfig()
    l1: L1Config = L1Config()
    normalize_columns: bool = False


def run_trial(spec: ExperimentSpec, trial: int) -> List[dict]:
    """One instance, every method on every probe. Returns one record per method."""
    seed = spec.gen.seed + trial
    inst = generate_instance(replace(spec.gen, seed=seed))
    gallery = inst.gallery.normalized() if spec.normalize_columns else inst.gallery
    records = []
    for method in spec.methods:
        rankings = [rank_probe(method, gallery, p, spec.hyper, spec.inf, spec.rank, spec.l1) for p in inst.probes]
        truths = [p.true_subject for p in inst.probes]
        cmc = compute_cmc(rankings, truths)
        records.append(
            {
                "trial": trial,
                "seed": seed,
                "method": method,
                "cmc": cmc.accuracy,
                "rank1": cmc.rank1,
                "rankings": [dict(r.to_dict(), true_subject=t) for r, t in zip(rankings, truths)],
            }
        )
    return records


def _trial_job(args):
    return run_trial(*args)


def run_trials(spec: ExperimentSpec, trials: int, jobs: int = 1) -> List[dict]:
    """Run ``trials`` independent trials; records are ordered by trial, then method."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    args = [(spec, t) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(_trial_job, args))
    else:
        per_trial = [_trial_job(a) for a in args]
    return [rec for recs in per_trial for rec in recs]


def aggregate_cmc(records: Sequence[dict]) -> Dict[str, CmcCurve]:
    """Mean CMC per method with per-rank sample std (0 for a single trial)."""
    out = {}
    for method in dict.fromkeys(r["method"] for r in records):
        curves = [r["cmc"] for r in records if r["method"] == method]
        R = min(len(c) for c in curves)
        M = np.array([c[:R] for c in curves])
        std = M.std(axis=0, ddof=1) if len(M) > 1 else np.zeros(R)
        out[method] = CmcCurve(M.mean(axis=0).tolist(), std.tolist())
    return out


@dataclass
class ExperimentResult:
    aggregate: CmcCurve
    records: List[dict]


def run_experiment(gen_cfg, method, hyper, inf_cfg, rank_cfg, trials, l1_cfg=L1Config(), jobs=1,
                   normalize_columns=False) -> ExperimentResult:
    spec = ExperimentSpec(gen_cfg, (method.upper(),), hyper, inf_cfg, rank_cfg, l1_cfg, normalize_columns)
    records = run_trials(spec, trials, jobs)
    return ExperimentResult(aggregate_cmc(records)[method.upper()], records)


def rank1_table(records) -> Dict[str, np.ndarray]:
    """Per-method rank-1 accuracy, one entry per trial in trial order."""
    out: Dict[str, list] = {}
    for r in records:
        out.setdefault(r["method"], []).append(r["rank1"])
    return {m: np.array(v) for m, v in out.items()}


def _mean_std(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def sweep_L(spec: ExperimentSpec, L_values, trials, jobs=1) -> List[dict]:
    """Rank-1 accuracy per (L, method). Only rank 1 is computed."""
    rows = []
    rank_cfg = replace(spec.rank, max_ranks=1)
    for L in L_values:
        s = replace(spec, gen=replace(spec.gen, L=int(L)), rank=rank_cfg)
        for method, acc in rank1_table(run_trials(s, trials, jobs)).items():
            mean, std = _mean_std(acc)
            rows.append({"L": int(L), "method": method, "rank1_mean": mean, "rank1_std": std})
    return rows


def sweep_lambda(spec: ExperimentSpec, lambdas, trials, jobs=1) -> List[dict]:
    """RSM rank-1 accuracy over a grid of dense-noise variances."""
    rows = []
    for lam in lambdas:
        s = replace(spec, methods=("RSM",), hyper=replace(spec.hyper, lam=float(lam)),
                    rank=replace(spec.rank, max_ranks=1))
        mean, std = _mean_std(rank1_table(run_trials(s, trials, jobs))["RSM"])
        rows.append({"lambda": float(lam), "rank1_mean": mean, "rank1_std": std})
    return rows


def paired_bootstrap_ci(diffs, n_boot=10000, level=0.95, seed=0):
    """Percentile bootstrap interval for the mean of paired differences."""
    diffs = np.asarray(diffs, dtype=float)
    rng = make_rng(seed)
    idx = rng.integers(0, len(diffs), size=(n_boot, len(diffs)))
    means = diffs[idx].mean(axis=1)
    a = (1.0 - level) / 2.0
    return float(np.quantile(means, a)), float(np.quantile(means, 1.0 - a))


def spec_metadata(spec: ExperimentSpec) -> dict:
    return {
        "generator": asdict(spec.gen),
        "methods": list(spec.methods),
        "hyper": asdict(spec.hyper),
        "inference": asdict(spec.inf),
        "ranking": asdict(spec.rank),
        "baseline": asdict(spec.l1),
        "normalize_columns": spec.normalize_columns,
        "rng": GENERATOR_METADATA,
    }
