import math

import numpy as np
import pytest

import selective_bench.oracle as oracle
from selective_bench.adversaries import GeneratorSpec
from selective_bench.algorithms import (
    BoundedRecallParams,
    HybridParams,
    RealizabilityError,
    bounded_recall_decision_at,
    erm_decision_at,
    hybrid_decision_at,
    realizable_decision_at,
)
from selective_bench.convexity import f_loss, log_sum_exp, quadratic
from selective_bench.core import Instance, excess_risk
from selective_bench.oracle import (
    EnumerationTooLarge,
    check_experts_bound,
    check_lemma1,
    check_theorem5,
    exact_risk,
    experts_sweep,
    lemma1_aggregate,
    monte_carlo_risk,
)

# Fixed 3x8 matrix; all frozen numbers below were computed by the
# standalone enumerations in tests/oracles/derive_expected.py.
MATRIX = Instance(
    [
        [0, 1, 0, 1, 1, 0, 0, 1],
        [1, 0, 0, 0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 1, 1],
    ]
)


def random_instance(m, n, seed, binary=False):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, (m, n))
    if binary:
        a = (a < 0.5).astype(float)
    return Instance(a)


# ---------------------------------------------------------------------------
# frozen exact values


def test_exact_recall_frozen():
    r = exact_risk("bounded_recall_ew", MATRIX, BoundedRecallParams(alpha=1.25))
    assert r.total == pytest.approx(0.3634078488790497, abs=1e-14)
    assert r.by_scale[1] == pytest.approx(0.43619731021842145, abs=1e-14)
    assert r.by_scale[2] == pytest.approx(0.6540262364187277, abs=1e-14)
    assert r.by_scale[4] == 0.0
    assert r.enumeration_size == 7


def test_exact_erm_frozen():
    r = exact_risk("erm", MATRIX)
    assert r.total == pytest.approx(0.5833333333333334, abs=1e-14)
    assert r.by_scale == pytest.approx({1: 0.75, 2: 1.0, 4: 0.0})


def test_exact_hybrid_frozen():
    r = exact_risk("hybrid_ew", MATRIX, HybridParams(delta=1, eta=0.5))
    assert r.total == pytest.approx(0.33924406665120943, abs=1e-14)
    assert r.by_scale[1] == pytest.approx(0.44463544431716412, abs=1e-14)
    assert r.by_scale[2] == pytest.approx(0.4897634223031308, abs=1e-14)
    assert r.by_scale[4] == pytest.approx(0.083333333333333315, abs=1e-14)


def test_exact_realizable_frozen():
    r = exact_risk("realizable_learner", Instance([[0, 0], [1, 1]]))
    assert r.total == 0.25
    assert r.total <= math.log(2) / 2


def test_exact_mean_predict_frozen():
    r = exact_risk("mean_predict", np.array([0, 1, 0, 1.0]), quadratic(1))
    assert r.total == pytest.approx(0.5, abs=1e-15)
    seq8 = [0.1, 0.9, 0.3, 0.7, 0.5, 0.2, 0.8, 0.4]
    r8 = exact_risk("mean_predict", np.array(seq8), quadratic(1))
    assert r8.total == pytest.approx(0.098125, abs=1e-15)


def test_zero_instance_all_algorithms():
    zero = Instance(np.zeros((3, 16)))
    assert exact_risk("bounded_recall_ew", zero, BoundedRecallParams(alpha=2.0)).total == 0.0
    assert exact_risk("erm", zero).total == 0.0
    assert exact_risk("hybrid_ew", zero, HybridParams(delta=2, eta=1.0)).total == 0.0
    assert exact_risk("realizable_learner", zero).total == 0.0
    assert exact_risk("mean_predict", np.zeros(16), quadratic(1)).total == 0.0


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        exact_risk("gradient_descent", MATRIX)


# ---------------------------------------------------------------------------
# structural invariants


@pytest.mark.parametrize("seed", range(6))
def test_probability_mass_and_total_identity(seed):
    inst = random_instance(4, 32, seed)
    for name, params in [
        ("bounded_recall_ew", BoundedRecallParams(alpha=1.7)),
        ("erm", None),
        ("hybrid_ew", HybridParams(delta=2, eta=0.9)),
        ("mean_predict", quadratic(1)),
    ]:
        arg = inst.losses[0] if name == "mean_predict" else inst
        r = exact_risk(name, arg, params)
        assert r.probability_mass == pytest.approx(1.0, abs=1e-12)
        scales = sorted(r.by_scale)
        recombined = sum(r.by_scale[w] for w in scales) / len(scales)
        assert r.total == pytest.approx(recombined, abs=1e-12)


def test_exact_matches_atomwise_enumeration():
    # the vectorized pipelines against one-atom-at-a-time decisions
    inst = random_instance(3, 16, seed=11)
    k = inst.k

    alpha = 1.3
    acc = []
    for kp in range(1, k + 1):
        per = [
            excess_risk(inst, bounded_recall_decision_at(inst, alpha, kp, t))
            for t in range(0, (1 << k) - (1 << kp) + 1, 1 << kp)
        ]
        acc.append(np.mean(per))
    r = exact_risk("bounded_recall_ew", inst, BoundedRecallParams(alpha=alpha))
    assert r.total == pytest.approx(np.mean(acc), abs=1e-12)

    acc = []
    for kp in range(1, k + 1):
        per = [
            excess_risk(inst, erm_decision_at(inst, kp, t))
            for t in range(0, (1 << k) - (1 << kp) + 1, 1 << kp)
        ]
        acc.append(np.mean(per))
    assert exact_risk("erm", inst).total == pytest.approx(np.mean(acc), abs=1e-12)

    delta, eta = 1, 0.6
    acc = []
    for i in range(k - delta + 1):
        w = 1 << i
        n1 = (1 << k) // ((1 << delta) * w)
        per = [
            excess_risk(inst, hybrid_decision_at(inst, delta, eta, w, i1, i2))
            for i1 in range(1, n1 + 1)
            for i2 in range(1, (1 << delta) + 1)
        ]
        acc.append(np.mean(per))
    r = exact_risk("hybrid_ew", inst, HybridParams(delta=delta, eta=eta))
    assert r.total == pytest.approx(np.mean(acc), abs=1e-12)


def test_realizable_matches_atomwise():
    rows = (np.random.default_rng(3).uniform(0, 1, (3, 12)) < 0.4).astype(float)
    inst = Instance(np.vstack([np.zeros(12), rows]))
    per = [excess_risk(inst, realizable_decision_at(inst, t)) for t in range(inst.n)]
    assert exact_risk("realizable_learner", inst).total == pytest.approx(np.mean(per), abs=1e-12)


def test_mean_predict_matches_atomwise():
    rng = np.random.default_rng(9)
    seq = rng.uniform(0, 1, 16)
    f = quadratic(1)
    k = 4
    per_scale = []
    for kp in range(1, k + 1):
        half = 1 << (kp - 1)
        losses = []
        for t in range(0, 16 - 2 * half + 1, 2 * half):
            est = seq[t : t + half].mean()
            act = seq[t + half : t + 2 * half].mean()
            losses.append(f_loss(f, [est], [act]))
        per_scale.append(np.mean(losses))
    r = exact_risk("mean_predict", seq, f)
    assert r.total == pytest.approx(np.mean(per_scale), abs=1e-12)


def test_erm_is_recall_alpha_limit_when_tie_free():
    inst = random_instance(4, 32, seed=21)  # continuous entries: ties have measure zero
    uniform_ties = exact_risk("bounded_recall_ew", inst, BoundedRecallParams(alpha=math.inf))
    assert exact_risk("erm", inst).total == pytest.approx(uniform_ties.total, abs=1e-12)


def test_enumeration_cap(monkeypatch):
    monkeypatch.setattr(oracle, "ENUMERATION_CAP", 6)
    with pytest.raises(EnumerationTooLarge, match="monte_carlo_risk"):
        exact_risk("erm", MATRIX)


def test_realizable_requires_zero_model():
    with pytest.raises(RealizabilityError):
        exact_risk("realizable_learner", Instance([[0, 1], [1, 0]]))


# ---------------------------------------------------------------------------
# lemma 1 and experts checkers


def test_lemma1_frozen_sides():
    v = check_lemma1(MATRIX, 1, 0.5)
    assert [x.i for x in v] == [0, 1, 2]
    np.testing.assert_allclose(
        [x.lhs for x in v],
        [0.44463544431716412, 0.4897634223031308, 0.083333333333333315],
        atol=1e-14,
    )
    np.testing.assert_allclose(
        [x.rhs for x in v],
        [1.1611122886681098, 1.5361122886681098, 1.1611122886681098],
        atol=1e-14,
    )
    assert all(x.holds for x in v)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("delta", [1, 2])
def test_lemma1_holds_on_random_instances(seed, delta):
    inst = random_instance(4, 64, seed, binary=seed % 2 == 0)
    for eta in (0.25, "auto", 2.0):
        assert all(v.holds for v in check_lemma1(inst, delta, eta))


def test_lemma1_zero_instance():
    zero = Instance(np.zeros((4, 16)))
    for v in check_lemma1(zero, 1, 0.5):
        assert v.lhs == 0.0
        assert v.rhs == pytest.approx(math.log(4) / (0.5 * 2) + 0.5 / 8)


def test_lemma1_single_model():
    inst = Instance(np.random.default_rng(0).uniform(0, 1, (1, 32)))
    for v in check_lemma1(inst, 1, "auto"):
        assert v.lhs == 0.0
        assert v.rhs >= -1e-12


def test_lemma1_aggregate_identity():
    for seed in range(5):
        inst = random_instance(5, 128, seed)
        for delta in (1, 2, 3):
            mean_rhs, telescoped = lemma1_aggregate(inst, delta)
            assert mean_rhs == pytest.approx(telescoped, abs=1e-9)


def test_experts_bound_frozen():
    ew, best, bound = check_experts_bound(MATRIX, 2, 0, 1, 0.7)
    assert ew == pytest.approx(0.44730861382311282, abs=1e-14)
    assert best == 0.25
    assert bound == pytest.approx(1.1222230633343639, abs=1e-14)


def test_experts_bound_t1_edge():
    ew, best, bound = check_experts_bound(MATRIX, 1, 0, 0, 0.7)
    assert ew == pytest.approx(1 / 3, abs=1e-14)
    assert best == 0.0
    assert bound == pytest.approx(math.log(3) / 0.7 + 0.7 / 8, abs=1e-14)


def test_experts_bound_identical_experts():
    inst = Instance(np.tile(np.random.default_rng(1).uniform(0, 1, 16), (3, 1)))
    ew, best, bound = check_experts_bound(inst, 2, 0, 2, 1.0)
    assert ew == pytest.approx(best, abs=1e-12)
    assert bound - best == pytest.approx(math.log(3) / 4 + 1 / 8)


def test_experts_bound_alignment_errors():
    with pytest.raises(ValueError):
        check_experts_bound(MATRIX, 2, 2, 1, 0.5)  # t0 not aligned to W=4
    with pytest.raises(ValueError):
        check_experts_bound(MATRIX, 4, 0, 2, 0.5)  # superblock 16 > n=8
    with pytest.raises(ValueError):
        check_experts_bound(MATRIX, 2, 0, 1, 0.0)


def test_experts_sweep_covers_all_pairs_and_holds():
    inst = random_instance(4, 64, seed=14)
    rows = experts_sweep(inst, delta=3, eta=0.8)
    # full (w, t0) coverage: sum over scales of 2^k / (2^delta w)
    assert len(rows) == sum(64 // (8 * (1 << i)) for i in range(4))
    for w, t0, ew, best, bound in rows:
        assert ew <= bound + 1e-9
        single = check_experts_bound(inst, w, t0, 3, 0.8)
        assert (ew, best, bound) == pytest.approx(single, abs=1e-12)


# ---------------------------------------------------------------------------
# theorem 5 checker


def test_theorem5_frozen_example():
    exact, bound = check_theorem5(np.array([0, 1, 0, 1.0]), quadratic(1))
    assert exact == pytest.approx(0.5, abs=1e-15)
    assert bound == pytest.approx(1.5, abs=1e-12)


def test_theorem5_constant_sequence():
    exact, bound = check_theorem5(np.full(8, 0.3), quadratic(1))
    assert exact == 0.0
    assert exact <= bound + 1e-9


def test_theorem5_random_sequences_hold():
    rng = np.random.default_rng(2)
    for _ in range(25):
        n = 2 ** int(rng.integers(1, 9))
        exact, bound = check_theorem5(rng.uniform(0, 1, n), quadratic(1))
        assert exact <= bound + 1e-9
    f = log_sum_exp(1.0, 3)
    for _ in range(25):
        n = 2 ** int(rng.integers(1, 8))
        exact, bound = check_theorem5(rng.uniform(0, 1, (n, 3)), f)
        assert exact <= bound + 1e-9


def test_theorem5_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        check_theorem5(np.zeros(6), quadratic(1))


# ---------------------------------------------------------------------------
# Monte Carlo cross-validation


def test_mc_zero_instance():
    zero = Instance(np.zeros((2, 8)))
    rep = monte_carlo_risk("erm", zero, trials=50, seed=3)
    assert rep.mean == 0.0 and rep.stderr == 0.0


def test_mc_single_trial_has_no_stderr():
    rep = monte_carlo_risk("erm", MATRIX, trials=1, seed=3)
    assert rep.stderr is None and rep.trials == 1


def test_mc_deterministic_and_order_free():
    a = monte_carlo_risk("hybrid_ew", MATRIX, trials=200, seed=9, params=HybridParams(delta=1, eta=0.5))
    b = monte_carlo_risk("hybrid_ew", MATRIX, trials=200, seed=9, params=HybridParams(delta=1, eta=0.5))
    assert (a.mean, a.stderr) == (b.mean, b.stderr)
    # first 100 trials of the 200-trial run = the 100-trial run, rescaled
    c = monte_carlo_risk("hybrid_ew", MATRIX, trials=100, seed=9, params=HybridParams(delta=1, eta=0.5))
    assert c.mean != a.mean  # different averages, same underlying trials


@pytest.mark.parametrize(
    "alg,params",
    [
        ("bounded_recall_ew", BoundedRecallParams(alpha=1.25)),
        ("erm", None),
        ("hybrid_ew", HybridParams(delta=1, eta=0.5)),
    ],
)
def test_mc_agrees_with_exact(alg, params):
    rep = monte_carlo_risk(alg, MATRIX, trials=4000, seed=17, params=params)
    exact = exact_risk(alg, MATRIX, params).total
    assert abs(rep.mean - exact) <= 4 * rep.stderr + 1e-12


def test_mc_with_generator_rebuilds_per_trial():
    spec = GeneratorSpec("realizable_random", 16, 4, 0, (("density", 0.6),))
    rep = monte_carlo_risk("realizable_learner", spec, trials=300, seed=4)
    rep2 = monte_carlo_risk("realizable_learner", spec, trials=300, seed=4)
    assert rep == rep2
    assert 0.0 < rep.mean < 0.5  # fresh random instances: strictly positive risk
    # the generator's own seed field is ignored in favor of per-trial seeds
    rep3 = monte_carlo_risk("realizable_learner", spec.with_seed(99), trials=300, seed=4)
    assert rep3.mean == rep.mean


def test_mc_mean_predict():
    seq = np.array([0.1, 0.9, 0.3, 0.7, 0.5, 0.2, 0.8, 0.4])
    rep = monte_carlo_risk("mean_predict", seq, trials=3000, seed=8, params=quadratic(1))
    assert abs(rep.mean - 0.098125) <= 4 * rep.stderr


def test_mc_validates_trials():
    with pytest.raises(ValueError):
        monte_carlo_risk("erm", MATRIX, trials=0, seed=0)
