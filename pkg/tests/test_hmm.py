import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_paths, brute_marginals, brute_viterbi, path_weight
from pourkit import hmm
from pourkit.errors import DimensionMismatch, EmptyTrainingSet, InputError
from pourkit.hmm import HistogramSpec, TransitionModel, VolumeHistogram


def random_stochastic(rng, n, zeros=False):
    m = rng.random((n, n))
    if zeros:
        m *= rng.random((n, n)) < 0.6
        m[np.arange(n), rng.integers(0, n, n)] += 0.1
    return m / m.sum(axis=1, keepdims=True)


def random_belief(rng, n):
    p = rng.random(n) + 1e-3
    return p / p.sum()


def shift_matrix(n):
    m = np.zeros((n, n))
    m[np.arange(n - 1), np.arange(1, n)] = 1.0
    m[n - 1, n - 1] = 1.0
    return m


# -- types ---------------------------------------------------------------------


def test_spec_geometry():
    s = HistogramSpec(100, 400)
    assert s.width == 4.0
    assert np.all(np.diff(s.edges) > 0)
    assert s.centers[0] == 2.0 and s.centers[-1] == 398.0
    assert s.bin_of([0, 3.999, 4.0, 399.9, 1e6, -5]).tolist() == [0, 0, 1, 99, 99, 0]


def test_histogram_validation():
    spec = HistogramSpec(3, 30)
    with pytest.raises(InputError):
        VolumeHistogram(spec, [0.5, 0.5, 0.5])
    with pytest.raises(InputError):
        VolumeHistogram(spec, [1.5, -0.5, 0.0])
    with pytest.raises(DimensionMismatch):
        VolumeHistogram(spec, [1.0, 0.0])
    with pytest.raises(InputError):
        TransitionModel(spec, np.full((3, 3), 0.5))


# -- predict / update ----------------------------------------------------------


def test_predict_identity_and_shift():
    spec = HistogramSpec(5, 50)
    rng = np.random.default_rng(0)
    b = VolumeHistogram(spec, random_belief(rng, 5))
    assert np.allclose(hmm.predict(b, TransitionModel(spec, np.eye(5))).probs, b.probs, atol=1e-15)
    p = hmm.predict(VolumeHistogram.point_mass(spec, 2), TransitionModel(spec, shift_matrix(5)))
    assert p.probs.tolist() == [0, 0, 0, 1, 0]


def test_predict_matches_dense_product():
    spec = HistogramSpec(5, 50)
    rng = np.random.default_rng(1)
    b = random_belief(rng, 5)
    t = random_stochastic(rng, 5)
    want = [sum(t[i, j] * b[i] for i in range(5)) for j in range(5)]
    got = hmm.predict(VolumeHistogram(spec, b), TransitionModel(spec, t)).probs
    assert np.allclose(got, want, rtol=1e-12)


def test_predict_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        hmm.predict(
            VolumeHistogram.uniform(HistogramSpec(3, 30)), TransitionModel(HistogramSpec(4, 40), np.eye(4))
        )


def test_update_uniform_likelihood_and_flat_prior():
    spec = HistogramSpec(6, 60)
    rng = np.random.default_rng(2)
    b = VolumeHistogram(spec, random_belief(rng, 6))
    assert np.allclose(hmm.update(b, np.full(6, -3.7)).probs, b.probs, rtol=1e-13)
    ll = rng.normal(size=6) * 5
    soft = np.exp(ll) / np.exp(ll).sum()
    assert np.allclose(hmm.update(VolumeHistogram.uniform(spec), ll).probs, soft, rtol=1e-12)


def test_update_three_bin_hand_case():
    spec = HistogramSpec(3, 30)
    b = VolumeHistogram(spec, [0.2, 0.5, 0.3])
    post = hmm.update(b, np.log([0.9, 0.05, 0.05])).probs
    assert post == pytest.approx([0.818, 0.114, 0.068], abs=1e-3)
    assert post == pytest.approx(np.array([0.18, 0.025, 0.015]) / 0.22, rel=1e-12)


def test_update_survives_huge_loglik_offsets():
    spec = HistogramSpec(3, 30)
    post = hmm.update(VolumeHistogram.uniform(spec), np.array([-1e5, -1e5 - 1, -1e5 - 2]))
    assert post.probs[0] > post.probs[1] > post.probs[2] > 0


def test_update_rejects_non_finite_likelihood():
    spec = HistogramSpec(3, 30)
    b = VolumeHistogram(spec, [0.0, 1.0, 0.0])
    with pytest.raises(InputError):
        hmm.update(b, np.array([0.0, -np.inf, 0.0]))
    with pytest.raises(DimensionMismatch):
        hmm.update(b, np.zeros(4))


def test_update_keeps_support_under_extreme_likelihoods():
    # the only supported bin is strongly disfavoured, but max-subtraction keeps it
    spec = HistogramSpec(3, 30)
    post = hmm.update(VolumeHistogram(spec, [1.0, 0.0, 0.0]), np.array([-1e300, 0.0, 0.0]))
    assert post.probs.tolist() == [1.0, 0.0, 0.0]


def test_normalization_over_many_random_applications():
    rng = np.random.default_rng(3)
    n = 7
    spec = HistogramSpec(n, 70)
    trans = TransitionModel(spec, random_stochastic(rng, n, zeros=True))
    b = VolumeHistogram.uniform(spec)
    for i in range(10_000):
        if i % 2:
            b = hmm.predict(b, trans)
        else:
            b = hmm.update(b, rng.normal(size=n) * 3)
        assert abs(b.probs.sum() - 1.0) <= 1e-12
        if b.probs.max() > 1 - 1e-9:
            b = VolumeHistogram.uniform(spec)


# -- median --------------------------------------------------------------------


def test_median_examples():
    spec = HistogramSpec(4, 400)
    assert hmm.median_estimate(VolumeHistogram.point_mass(spec, 3)) == 350.0
    assert hmm.median_estimate(VolumeHistogram(spec, [0.1, 0.2, 0.3, 0.4])) == 250.0
    # uniform over 4 bins: cumulative mass reaches exactly 0.5 on the second bin
    assert hmm.median_estimate(VolumeHistogram.uniform(spec)) == 150.0
    spec100 = HistogramSpec(100, 400)
    assert hmm.median_estimate(VolumeHistogram.uniform(spec100)) == spec100.centers[49]


# -- forward filter / viterbi versus enumeration -------------------------------


def test_forward_filter_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        steps = int(rng.integers(1, 7 if n <= 3 else 5))
        spec = HistogramSpec(n, 10.0 * n)
        t = random_stochastic(rng, n, zeros=bool(rng.integers(2)))
        init = random_belief(rng, n)
        ll = [rng.normal(size=n) * 2 for _ in range(steps)]
        got = hmm.forward_filter(ll, TransitionModel(spec, t), VolumeHistogram(spec, init))
        want = brute_marginals([np.exp(x) for x in ll], t, init)
        for g, w in zip(got, want):
            assert np.allclose(g.probs, w, rtol=1e-9, atol=1e-300)


def test_viterbi_matches_exhaustive_search():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        steps = int(rng.integers(1, 7 if n <= 3 else 5))
        spec = HistogramSpec(n, 10.0 * n)
        t = random_stochastic(rng, n, zeros=bool(rng.integers(2)))
        init = random_belief(rng, n)
        ll = [rng.normal(size=n) * 2 for _ in range(steps)]
        got = hmm.viterbi(ll, TransitionModel(spec, t), VolumeHistogram(spec, init))
        want, w = brute_viterbi([np.exp(x) for x in ll], t, init)
        assert got == want
        lp = hmm.path_log_prob(got, ll, TransitionModel(spec, t), VolumeHistogram(spec, init))
        assert lp == pytest.approx(math.log(w), rel=1e-12)


def test_viterbi_three_by_four_and_path_dominance():
    rng = np.random.default_rng(6)
    spec = HistogramSpec(3, 30)
    t = random_stochastic(rng, 3)
    init = random_belief(rng, 3)
    ll = [rng.normal(size=3) for _ in range(4)]
    trans, b0 = TransitionModel(spec, t), VolumeHistogram(spec, init)
    best = hmm.path_log_prob(hmm.viterbi(ll, trans, b0), ll, trans, b0)
    for path in all_paths(3, 4):
        assert hmm.path_log_prob(path, ll, trans, b0) <= best + 1e-12
    assert len(list(all_paths(3, 4))) == 81


def test_viterbi_length_one_and_identity():
    spec = HistogramSpec(4, 40)
    init = VolumeHistogram(spec, [0.1, 0.2, 0.3, 0.4])
    ll = np.log([0.5, 0.4, 0.05, 0.05])
    assert hmm.viterbi([ll], TransitionModel(spec, np.eye(4)), init) == [int(np.argmax(np.log(init.probs) + ll))]
    steady = np.log([0.1, 0.1, 0.7, 0.1])
    path = hmm.viterbi([steady] * 6, TransitionModel(spec, np.eye(4)), VolumeHistogram.uniform(spec))
    assert path == [2] * 6


def test_viterbi_ties_go_low():
    spec = HistogramSpec(3, 30)
    flat = [np.zeros(3)] * 3
    assert hmm.viterbi(flat, TransitionModel(spec, np.full((3, 3), 1 / 3)), VolumeHistogram.uniform(spec)) == [0, 0, 0]


def test_viterbi_errors():
    spec = HistogramSpec(3, 30)
    trans = TransitionModel(spec, np.eye(3))
    with pytest.raises(EmptyTrainingSet):
        hmm.viterbi([], trans, VolumeHistogram.uniform(spec))
    with pytest.raises(DimensionMismatch):
        hmm.viterbi([np.zeros(4)], trans, VolumeHistogram.uniform(spec))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabeling_equivariance(seed):
    rng = np.random.default_rng(seed)
    n = 5
    spec = HistogramSpec(n, 50)
    b = random_belief(rng, n)
    t = random_stochastic(rng, n)
    ll = rng.normal(size=n)
    perm = rng.permutation(n)
    out = hmm.predict(hmm.update(VolumeHistogram(spec, b), ll), TransitionModel(spec, t)).probs
    out_p = hmm.predict(
        hmm.update(VolumeHistogram(spec, b[perm]), ll[perm]), TransitionModel(spec, t[np.ix_(perm, perm)])
    ).probs
    assert np.allclose(out_p, out[perm], rtol=1e-12, atol=1e-15)


# -- transition fitting --------------------------------------------------------


def test_fit_constant_log_is_identity():
    spec = HistogramSpec(10, 100)
    t = hmm.fit_transition([np.full(50, 33.0)], spec, smoothing=1.0)
    assert np.array_equal(t.matrix[np.arange(10) != 3], np.eye(10)[np.arange(10) != 3])
    # the visited row: 49 self-moves plus one pseudo-count on each of j >= 3
    row = np.zeros(10)
    row[3:] = 1.0
    row[3] += 49
    assert np.allclose(t.matrix[3], row / row.sum(), rtol=1e-15)
    assert np.array_equal(hmm.fit_transition([np.full(50, 33.0)], spec, smoothing=0).matrix, np.eye(10))


def test_fit_one_bin_per_tick_is_shift():
    spec = HistogramSpec(10, 100)
    t = hmm.fit_transition([np.arange(10) * 10.0 + 5], spec, smoothing=0)
    want = shift_matrix(10)
    assert np.array_equal(t.matrix, want)


def test_fit_on_simulated_corpus(world):
    from pourkit.simulator import collection_protocol

    specs = collection_protocol(20, list(world.scenes), seed=7)
    logs = [world.pour(s, world.estimator(s.container, trans=world.prior), world.cfg.noise_table()) for s in specs]
    spec = world.spec
    t = hmm.fit_transition([l["tgt_ml"] for l in logs], spec)
    assert np.all(np.abs(t.matrix.sum(axis=1) - 1) <= 1e-12)
    assert np.all(np.tril(t.matrix, -1) == 0)
    # the same counts done by hand
    counts = np.zeros((spec.bins, spec.bins))
    for l in logs:
        b = [min(int(v // spec.width), spec.bins - 1) for v in l["tgt_ml"]]
        for i, j in zip(b[:-1], b[1:]):
            counts[i, j] += 1
    for i in range(spec.bins):
        if counts[i].sum():
            row = counts[i].copy()
            row[i:] += 1.0
            assert np.allclose(t.matrix[i], row / row.sum(), rtol=1e-12)


def test_fit_errors():
    spec = HistogramSpec(4, 40)
    with pytest.raises(EmptyTrainingSet):
        hmm.fit_transition([], spec)
    with pytest.raises(EmptyTrainingSet):
        hmm.fit_transition([np.array([])], spec)
    with pytest.raises(InputError):
        hmm.fit_transition([np.ones(3)], spec, smoothing=-1)


def test_json_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    spec = HistogramSpec(12, 48)
    t = TransitionModel(spec, random_stochastic(rng, 12))
    t.save(tmp_path / "t.json")
    back = TransitionModel.load(tmp_path / "t.json")
    assert np.array_equal(back.matrix, t.matrix)
    assert back.spec == spec
    assert back.to_json() == t.to_json()
    data = json.loads(t.to_json())
    assert set(data) == {"bins", "v_max_ml", "rows"}


def test_json_malformed():
    with pytest.raises(InputError):
        TransitionModel.from_json('{"bins": 2}')
    with pytest.raises(InputError):
        TransitionModel.from_json("not json")


def test_drift_prior_is_monotone_and_stochastic():
    t = hmm.drift_transition(HistogramSpec(100, 400))
    assert np.all(np.tril(t.matrix, -1) == 0)
    assert t.matrix[0, 0] == 0.9 and t.matrix[99, 99] == 1.0


# -- median monotonicity in the noise-free case --------------------------------


def test_median_non_decreasing_on_noise_free_fill(world):
    cache = world.cache("cylinder")
    table = world.cfg.observation_table()
    scene = world.scenes["cylinder"]
    est = hmm.VolumeHistogram.point_mass(world.spec)
    trans = world.prior
    prev = -1.0
    volumes = np.concatenate([np.zeros(10), np.linspace(0, 300, 200), np.full(20, 300.0)])
    for t, v in enumerate(volumes):
        if t:
            est = hmm.predict(est, trans)
        inner = scene.inner_expected(v * 1e-6)
        est = hmm.update(est, cache.profile_from_inner(inner, table))
        m = hmm.median_estimate(est)
        assert m >= prev
        prev = m
    assert abs(prev - 300.0) <= 2 * world.spec.width


def test_path_weight_oracle_sanity():
    # the enumerator and the package agree on a hand-computable two-step path
    t = np.array([[0.5, 0.5], [0.0, 1.0]])
    init = np.array([0.6, 0.4])
    likes = [np.array([0.2, 0.8]), np.array([0.9, 0.1])]
    assert path_weight((0, 1), likes, t, init) == pytest.approx(0.6 * 0.2 * 0.5 * 0.1)
