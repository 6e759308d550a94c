import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dalap.similarity import (
    AttentionParams,
    ParallelSimilarity,
    RunningExtrema,
    batch_similarity,
    fit_beta,
    parallel_similarity,
    projection_score,
)


def identity_params(dim):
    return AttentionParams(np.eye(dim), shuffle_seed=0)


def test_projection_of_vector_onto_itself_is_its_norm():
    assert projection_score(np.array([[3.0, 4.0]]), np.array([[3.0, 4.0]])) == 5.0


def test_projection_onto_negated_unit_rows():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(4, 3))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    assert projection_score(q, -q) == pytest.approx(-4.0, abs=1e-12)


def test_projection_of_orthogonal_pairs_is_zero():
    q = np.array([[1.0, 0.0], [0.0, 2.0]])
    k = np.array([[0.0, 5.0], [3.0, 0.0]])
    assert projection_score(q, k) == 0.0


def test_zero_key_rows_contribute_nothing():
    q = np.array([[1.0, 2.0], [3.0, 4.0]])
    k = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert projection_score(q, k) == 5.0


def test_projection_shape_mismatch():
    with pytest.raises(ValueError):
        projection_score(np.zeros((2, 2)), np.zeros((3, 2)))


def test_identical_rows_give_m_norm_over_sqrt_dk():
    x = np.tile([1.0, 2.0, 2.0], (5, 1))
    params = identity_params(3)
    for _ in range(3):
        assert batch_similarity(x, params) == pytest.approx(5 * 3.0 / math.sqrt(3), rel=1e-12)


def test_zero_batch_scores_zero():
    assert batch_similarity(np.zeros((6, 4)), AttentionParams.initialise(4, 3, seed=1)) == 0.0


def test_swapped_orthonormal_rows_score_zero():
    x = np.eye(2)
    assert batch_similarity(x, identity_params(2), permutation=np.array([1, 0])) == 0.0


def test_single_row_rejected():
    with pytest.raises(ValueError):
        batch_similarity(np.ones((1, 3)), identity_params(3))


def test_same_batch_same_permutation_gives_zero_delta():
    x = np.random.default_rng(0).normal(size=(8, 5))
    perm = np.random.default_rng(1).permutation(8)
    params = AttentionParams.initialise(5, 4, seed=2)
    raw_ps, raw_rus, delta = parallel_similarity(x, x, params, permutations=(perm, perm))
    assert delta == 0.0 and raw_ps == raw_rus


def test_degenerate_ps_batch_beats_orthogonal_rus_batch():
    m = 4
    ps = np.tile([1.0, 0.0, 0.0, 0.0], (m, 1))
    rus = np.eye(m)
    shift = np.roll(np.arange(m), 1)
    params = identity_params(m)
    raw_ps, raw_rus, delta = parallel_similarity(ps, rus, params, permutations=(shift, shift))
    # direct evaluation: PS pairs are identical unit vectors, RUS pairs orthogonal
    assert raw_rus == 0.0
    assert delta == raw_ps == pytest.approx(m / math.sqrt(m))


def test_zero_state_batches_give_zero_delta():
    params = AttentionParams.initialise(3, 2, seed=0)
    assert parallel_similarity(np.zeros((4, 3)), np.zeros((4, 3)), params)[2] == 0.0


def test_mismatched_arm_sizes_rejected():
    with pytest.raises(ValueError):
        parallel_similarity(np.ones((4, 2)), np.ones((3, 2)), identity_params(2))


@pytest.mark.parametrize(
    "history, delta, beta0, expected",
    [
        ([0.0, 10.0], 0.0, 0.4, 0.4),  # at running_lo
        ([0.0, 10.0], 10.0, 0.4, 1.0),  # at running_hi
        ([0.0, 10.0], 5.0, 0.4, 0.7),  # normalised 0.5
    ],
)
def test_fit_beta_examples(history, delta, beta0, expected):
    state = RunningExtrema()
    for h in history:
        fit_beta(h, state, beta0)
    assert fit_beta(delta, state, beta0) == pytest.approx(expected, abs=1e-15)


def test_fit_beta_first_call_and_negative_delta():
    state = RunningExtrema()
    assert fit_beta(3.0, state, 0.4) == 0.4
    fit_beta(10.0, state, 0.4)
    assert fit_beta(-2.0, state, 0.4) == 0.4
    assert state.lo == -2.0 and state.hi == 10.0


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20),
    st.floats(0.0, 0.99),
    st.floats(-1e3, 1e3),
    st.floats(0.0, 1e3),
)
def test_fit_beta_bounded_and_monotone(history, beta0, delta, bump):
    state = RunningExtrema()
    for h in history:
        beta = fit_beta(h, state, beta0)
        assert beta0 <= beta <= 1.0
    lo_state = RunningExtrema(state.lo, state.hi)
    hi_state = RunningExtrema(state.lo, state.hi)
    lo_state.update(delta + bump)
    hi_state.update(delta)
    # with the extrema fixed, a larger increment never lowers beta
    a = fit_beta(delta, RunningExtrema(lo_state.lo, lo_state.hi), beta0)
    b = fit_beta(delta + bump, RunningExtrema(lo_state.lo, lo_state.hi), beta0)
    assert a <= b


def test_projection_of_q_on_q_is_sum_of_norms():
    q = np.random.default_rng(3).normal(size=(7, 4))
    assert projection_score(q, q) == pytest.approx(np.linalg.norm(q, axis=1).sum(), rel=1e-12)
    assert projection_score(np.zeros((3, 2)), np.zeros((3, 2))) == 0.0


def test_score_invariant_to_joint_row_relabelling():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(9, 5))
    params = AttentionParams.initialise(5, 3, seed=5)
    perm = rng.permutation(9)
    relabel = rng.permutation(9)
    inverse = np.argsort(relabel)
    # same (q_i, k_i) pairs, listed in a different row order
    moved = batch_similarity(x[relabel], params, permutation=inverse[perm[relabel]])
    assert moved == pytest.approx(batch_similarity(x, params, permutation=perm), rel=1e-12)


def test_parallel_similarity_single_arm_mode():
    params = AttentionParams.initialise(3, 2, seed=0)
    psan = ParallelSimilarity(params, beta0=0.4, single_arm=True)
    x = np.random.default_rng(0).normal(size=(6, 3))
    report = psan(None, x)
    assert report.raw_ps is None and report.delta is None and report.beta == 0.4


def test_psan_report_fields():
    params = AttentionParams.initialise(3, 2, seed=0)
    psan = ParallelSimilarity(params, beta0=0.4)
    rng = np.random.default_rng(1)
    for _ in range(20):
        report = psan(rng.normal(size=(6, 3)), rng.normal(size=(6, 3)))
        assert report.delta == report.raw_ps - report.raw_rus
        assert 0.4 <= report.beta <= 1.0
        assert report.running_lo <= report.delta <= report.running_hi
