from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsm.errors import InvalidInputError
from rsm.inference import Hyperparams, InferenceConfig
from rsm.ranking import RankingConfig, RankingResult
from rsm.synth import (
    ExperimentSpec,
    GeneratorConfig,
    aggregate_cmc,
    compute_cmc,
    generate_instance,
    paired_bootstrap_ci,
    rank1_table,
    run_experiment,
    run_trials,
    sweep_L,
    sweep_lambda,
)

NOISELESS = GeneratorConfig(C=6, block_size=4, d=40, L=3, k=3, seed=11)
FAST = dict(hyper=Hyperparams(lam=1e-4), inf_cfg=InferenceConfig(max_iters=20), rank_cfg=RankingConfig())


def test_shapes_and_zero_outliers():
    inst = generate_instance(GeneratorConfig(C=3, block_size=2, d=4, L=2, k=2, outlier_prob=0.0))
    assert inst.gallery.matrix.shape == (4, 6)
    assert list(inst.gallery.labels) == [1, 1, 2, 2, 3, 3]
    assert len(inst.probes) == 3
    assert all(p.Y.shape == (4, 2) for p in inst.probes)
    assert [p.true_subject for p in inst.probes] == [1, 2, 3]
    assert sum(int(m.sum()) for m in inst.outlier_masks) == 0


def test_every_entry_perturbed_when_p_is_one():
    cfg = GeneratorConfig(C=4, block_size=3, d=10, L=3, k=2, sigma_v=0.1, outlier_prob=1.0, seed=5)
    hit = generate_instance(cfg)
    clean = generate_instance(replace(cfg, outlier_prob=0.0))
    for p, q, mask in zip(hit.probes, clean.probes, hit.outlier_masks):
        assert int(mask.sum()) == cfg.d * cfg.L
        # draw order does not depend on p, so the difference is exactly the outliers
        assert np.count_nonzero(p.Y - q.Y) == cfg.d * cfg.L
    np.testing.assert_array_equal(hit.gallery.matrix, clean.gallery.matrix)


def test_same_seed_is_bit_identical():
    cfg = GeneratorConfig(C=5, sigma_v=0.3, outlier_prob=0.2, seed=2**63 + 17)
    a, b = generate_instance(cfg), generate_instance(cfg)
    np.testing.assert_array_equal(a.gallery.matrix, b.gallery.matrix)
    for p, q in zip(a.probes, b.probes):
        assert p.Y.tobytes() == q.Y.tobytes()
    c = generate_instance(replace(cfg, seed=cfg.seed + 1))
    assert not np.array_equal(a.gallery.matrix, c.gallery.matrix)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 4), st.integers(1, 5))
def test_noiseless_probe_lies_in_subject_subspace(seed, k, L):
    cfg = GeneratorConfig(C=3, block_size=5, d=12, L=L, k=k, seed=seed)
    inst = generate_instance(cfg)
    for p, B in zip(inst.probes, inst.bases):
        Q, _ = np.linalg.qr(B)
        out = p.Y - Q @ (Q.T @ p.Y)
        assert np.linalg.norm(out) <= 1e-10 * max(np.linalg.norm(p.Y), 1.0)
    for c, B in enumerate(inst.bases, start=1):
        G = inst.gallery.matrix[:, inst.gallery.blocks[c]]
        Q, _ = np.linalg.qr(B)
        assert np.linalg.norm(G - Q @ (Q.T @ G)) <= 1e-10 * np.linalg.norm(G)


@pytest.mark.parametrize(
    "kw",
    [dict(k=5, block_size=4), dict(block_size=70, d=60), dict(outlier_prob=1.5), dict(sigma_v=-1.0),
     dict(C=0), dict(seed=-1)],
)
def test_generator_invariants(kw):
    with pytest.raises(InvalidInputError):
        GeneratorConfig(**kw)


def test_invariant_message_names_the_constraint():
    with pytest.raises(InvalidInputError, match="k <= block_size"):
        GeneratorConfig(k=5, block_size=4)


def _result(psi):
    r = RankingResult()
    r.psi = list(psi)
    return r


def test_cmc_all_correct():
    curve = compute_cmc([_result([1, 2, 3]), _result([2, 1, 3])], [1, 2])
    assert curve.accuracy == [1.0, 1.0, 1.0]
    assert curve.rank1 == 1.0


def test_cmc_half_then_full():
    curve = compute_cmc([_result([1, 2, 3]), _result([1, 2, 3])], [1, 2])
    assert curve.accuracy == [0.5, 1.0, 1.0]


def test_cmc_truncated_rankings():
    curve = compute_cmc([_result([4]), _result([2])], [4, 3], n_ranks=3)
    assert curve.accuracy == [0.5, 0.5, 0.5]


def test_cmc_needs_matching_truths():
    with pytest.raises(InvalidInputError):
        compute_cmc([_result([1])], [1, 2])


def test_uniform_random_rankings_match_binomial_expectation():
    C, n = 10, 4000
    rng = np.random.default_rng(99)
    results = [_result(rng.permutation(C) + 1) for _ in range(n)]
    truths = list(rng.integers(1, C + 1, size=n))
    acc = np.array(compute_cmc(results, truths).accuracy)
    r = np.arange(1, C + 1)
    expected = r / C
    sigma = np.sqrt(expected * (1 - expected) / n)
    assert np.all(np.abs(acc - expected) <= 3 * sigma + 1e-12)
    assert np.all(np.diff(acc) >= 0)
    assert acc[-1] == 1.0


def test_run_experiment_record_count():
    res = run_experiment(replace(NOISELESS, C=4), "RSM", trials=3, **FAST)
    assert len(res.records) == 3
    assert [r["trial"] for r in res.records] == [0, 1, 2]
    assert [r["seed"] for r in res.records] == [11, 12, 13]
    assert len(res.aggregate.accuracy) == 4 and len(res.aggregate.std) == 4


@pytest.mark.parametrize("method", ["RSM", "SRC", "ISR"])
def test_noiseless_planted_instance_is_identified(method):
    res = run_experiment(NOISELESS, method, trials=1, **FAST)
    assert res.aggregate.rank1 == 1.0
    assert res.aggregate.accuracy[-1] == 1.0


def test_aggregate_mean_and_std():
    records = [
        {"method": "RSM", "cmc": [0.5, 1.0]},
        {"method": "RSM", "cmc": [1.0, 1.0]},
        {"method": "ISR", "cmc": [0.0, 1.0]},
    ]
    agg = aggregate_cmc(records)
    assert list(agg) == ["RSM", "ISR"]
    assert agg["RSM"].accuracy == [0.75, 1.0]
    assert agg["RSM"].std[0] == pytest.approx(np.std([0.5, 1.0], ddof=1))
    assert agg["ISR"].std == [0.0, 0.0]


def test_trials_are_deterministic_and_ordered():
    spec = ExperimentSpec(replace(NOISELESS, C=3, sigma_v=0.2, outlier_prob=0.1), ("RSM", "SRC"),
                          Hyperparams(lam=0.04), InferenceConfig(max_iters=10))
    a, b = run_trials(spec, 2), run_trials(spec, 2)
    assert a == b
    assert [(r["trial"], r["method"]) for r in a] == [(0, "RSM"), (0, "SRC"), (1, "RSM"), (1, "SRC")]
    assert set(rank1_table(a)) == {"RSM", "SRC"}


def test_parallel_trials_match_serial():
    spec = ExperimentSpec(replace(NOISELESS, C=3, sigma_v=0.2), ("RSM",), Hyperparams(lam=0.04),
                          InferenceConfig(max_iters=5))
    assert run_trials(spec, 3, jobs=2) == run_trials(spec, 3, jobs=1)


def test_sweep_L_rows():
    spec = ExperimentSpec(replace(NOISELESS, C=4), ("RSM", "SRC"), Hyperparams(lam=1e-4), InferenceConfig(max_iters=15))
    rows = sweep_L(spec, [1, 2, 4], trials=1)
    assert len(rows) == 6
    assert {(r["L"], r["method"]) for r in rows} == {(L, m) for L in (1, 2, 4) for m in ("RSM", "SRC")}
    assert all(r["rank1_mean"] == 1.0 for r in rows)


def test_sweep_lambda_rows():
    spec = ExperimentSpec(replace(NOISELESS, C=3), ("RSM",), inf=InferenceConfig(max_iters=10))
    rows = sweep_lambda(spec, [1e-4, 1e-2], trials=1)
    assert [r["lambda"] for r in rows] == [1e-4, 1e-2]
    assert all(0.0 <= r["rank1_mean"] <= 1.0 for r in rows)


def test_paired_bootstrap_ci():
    lo, hi = paired_bootstrap_ci(np.full(30, 0.2))
    assert lo == pytest.approx(0.2) and hi == pytest.approx(0.2)
    diffs = np.random.default_rng(0).normal(0.1, 0.05, size=200)
    lo, hi = paired_bootstrap_ci(diffs)
    assert lo < diffs.mean() < hi
    assert lo > 0
    assert paired_bootstrap_ci(diffs) == paired_bootstrap_ci(diffs)
