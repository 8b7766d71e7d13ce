import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from treedistill.envs import make
from treedistill.errors import ContractError, FormatError
from treedistill.seeding import make_rng
from treedistill.teacher import NetworkTeacher, NetworkWeights, advantage
from treedistill.transfer import (ALGORITHMS, TransferSet, TreeConfig, algorithm, build_costs,
                                  collect, distill, loop_collect_seed, offline_loop,
                                  training_set, viper_resample, viper_weights)
from treedistill.tree import Criterion, grow


def linear_teacher():
    """A fixed CartPole controller: push toward the pole's lean."""
    W = np.array([[0.0, 0.0, 0.0, 0.0], [0.1, 0.5, 10.0, 1.0]])
    return NetworkTeacher(NetworkWeights("relu", [W], [np.zeros(2)]), make("CartPole").spec)


def sample_set(q, actions=None):
    q = np.atleast_2d(np.asarray(q, float))
    actions = np.argmax(q, axis=1) if actions is None else actions
    return TransferSet(np.zeros((len(q), 1)), actions, q)


class TestCosts:
    q = [[1.0, 0.0]]

    def test_bc_row(self):
        np.testing.assert_array_equal(build_costs(sample_set(self.q), "bc").costs, [[0.0, 1.0]])

    def test_dpic_row(self):
        np.testing.assert_allclose(build_costs(sample_set(self.q), "dpic").costs,
                                   [[0.31326, 1.31326]], atol=1e-5)

    def test_dpic_r_row(self):
        c = build_costs(sample_set(self.q), "dpic_r", alpha=0.1)
        np.testing.assert_allclose(c.costs, [[0.31326, 1.41326]], atol=1e-5)
        assert c.alpha == 0.1

    def test_fq_carries_targets(self):
        c = build_costs(sample_set(self.q), "fq")
        assert c.costs is None
        np.testing.assert_array_equal(c.targets, self.q)

    def test_alpha_contract(self):
        with pytest.raises(ContractError):
            build_costs(sample_set(self.q), "dpic_r", alpha=-0.1)
        with pytest.raises(ContractError):
            build_costs(sample_set(self.q), "dpic_r")
        with pytest.raises(ContractError):
            build_costs(sample_set(self.q), "dpic", alpha=0.1)

    def test_permutation_equivariance(self, rng):
        samples = sample_set(rng.normal(size=(30, 3)) * 4)
        perm = rng.permutation(30)
        for obj, alpha in (("bc", None), ("dpic", None), ("dpic_r", 0.08)):
            a = build_costs(samples, obj, alpha).costs[perm]
            b = build_costs(samples.subset(perm), obj, alpha).costs
            np.testing.assert_array_equal(a, b)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5).flatmap(lambda k: arrays(np.float64, (4, k),
                                                  elements=st.floats(-20, 20, allow_nan=False))),
       st.floats(0, 1))
def test_cost_row_invariants(q, alpha):
    samples = sample_set(q)
    k = q.shape[1]
    bc = build_costs(samples, "bc").costs
    assert np.all(bc.sum(axis=1) == k - 1) and np.all(bc.min(axis=1) == 0)
    dpic = build_costs(samples, "dpic").costs
    assert np.all(dpic >= 0)
    assert np.all(dpic.min(axis=1) <= math.log(k) + 1e-12)
    top = q >= q.max(axis=1, keepdims=True) - 1e-9
    assert np.all(top[np.arange(len(q)), np.argmin(dpic, axis=1)])
    np.testing.assert_allclose(build_costs(samples, "dpic_r", alpha).costs, dpic + alpha * bc,
                               rtol=0, atol=1e-12)


class TestViper:
    def test_weights_nonnegative(self, rng):
        assert np.all(viper_weights(rng.normal(size=(100, 3)) * 5) >= 0)

    def test_weight_formula(self):
        assert viper_weights([[1.0, 0.0]])[0] == pytest.approx(1.313262, abs=1e-6)

    def test_identical_q_is_uniform(self):
        samples = sample_set(np.tile([[0.3, 0.1, -0.4]], (4, 1)))
        samples.states[:, 0] = np.arange(4)
        rng = make_rng("viper-uniform")
        counts = np.zeros(4)
        for _ in range(2500):
            counts += np.bincount(viper_resample(samples, rng).states[:, 0].astype(int), minlength=4)
        np.testing.assert_allclose(counts / counts.sum(), 0.25, atol=0.01)

    def test_three_to_one_ratio(self):
        q = np.array([[0.0, -_gap_for_weight(3.0)], [0.0, -_gap_for_weight(1.0)]])
        w = viper_weights(q)
        np.testing.assert_allclose(w, [3.0, 1.0], rtol=1e-12)
        samples = sample_set(q)
        samples.states[:, 0] = [0, 1]
        rng = make_rng("viper-ratio")
        picks = np.concatenate([viper_resample(samples, rng).states[:, 0] for _ in range(50000)])
        assert len(picks) == 100000
        ratio = (picks == 0).sum() / (picks == 1).sum()
        assert ratio == pytest.approx(3.0, rel=0.03)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            viper_resample(TransferSet(np.zeros((0, 1)), np.zeros(0, int), np.zeros((0, 2))), make_rng("x"))


def _gap_for_weight(w):
    """Solve ln(1 + e^-g) + g = w for the gap g in q = [0, -g]."""
    lo, hi = 0.0, w
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.log1p(math.exp(-mid)) + mid < w:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestCollect:
    def test_single_sample(self):
        s = collect(linear_teacher(), make("CartPole"), 1, seed=3)
        assert len(s) == 1
        np.testing.assert_array_equal(s.advantages[0], advantage(s.q[0]))

    def test_greedy_is_deterministic(self):
        a = collect(linear_teacher(), make("CartPole"), 500, seed=4)
        b = collect(linear_teacher(), make("CartPole"), 500, seed=4)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.q, b.q)

    def test_teacher_action_is_argmax(self):
        s = collect(linear_teacher(), make("CartPole"), 800, mode="softmax", seed=1)
        assert len(s) == 800
        np.testing.assert_array_equal(s.actions, np.argmax(s.q, axis=1))

    def test_bad_arguments(self):
        with pytest.raises(ContractError):
            collect(linear_teacher(), make("CartPole"), 0)
        with pytest.raises(ContractError):
            collect(linear_teacher(), make("CartPole"), 5, mode="eps")


class TestTransferFile:
    def test_round_trip(self, tmp_path):
        s = collect(linear_teacher(), make("CartPole"), 300, seed=2)
        s.save(tmp_path / "t.csv", header={"seed": 2})
        back = TransferSet.load(tmp_path / "t.csv")
        np.testing.assert_array_equal(back.states, s.states)
        np.testing.assert_array_equal(back.actions, s.actions)
        np.testing.assert_array_equal(back.q, s.q)

    @pytest.mark.parametrize("body", ["4,2\n1,2,3\n", "x\n", "", "2,2\n0.1,0.2,5,0.0,1.0\n"])
    def test_malformed(self, tmp_path, body):
        p = tmp_path / "t.csv"
        p.write_text(body)
        with pytest.raises(FormatError):
            TransferSet.load(p)


class TestDistill:
    def test_algorithm_table(self):
        assert set(ALGORITHMS) == {"BC", "ViperM", "Dpic", "DpicM", "DpicR", "DpicRM", "FQ"}
        assert algorithm("FQ").criterion is Criterion.VARIANCE_REDUCTION
        assert algorithm("DpicRM").resample
        with pytest.raises(ContractError):
            algorithm("Dagger")

    def test_distill_matches_manual_growth(self):
        s = collect(linear_teacher(), make("CartPole"), 2000, seed=5)
        tree = distill(s, "DpicR", 15, alpha=0.04)
        ref = grow(training_set(s, build_costs(s, "dpic_r", 0.04)), "cost_info_gain", 15)
        np.testing.assert_array_equal(tree.threshold, ref.threshold)
        np.testing.assert_array_equal(tree.action, ref.action)

    def test_resampled_variant_is_seeded(self):
        s = collect(linear_teacher(), make("CartPole"), 1000, seed=5)
        a = distill(s, "DpicM", 7, seed=1)
        b = distill(s, "DpicM", 7, seed=1)
        np.testing.assert_array_equal(a.threshold, b.threshold)


class TestOfflineLoop:
    def test_single_iteration_is_plain_growth(self):
        teacher, env = linear_teacher(), make("CartPole")
        res = offline_loop(teacher, env, "dpic", 1, 1500, TreeConfig(max_nodes=15),
                           eval_episodes=3, seed=8)
        batch = collect(teacher, env, 1500, "greedy", loop_collect_seed(8, 0))
        ref = grow(training_set(batch, build_costs(batch, "dpic")), "cost_info_gain", 15)
        for name in ("feature", "threshold", "left", "right", "action", "gain", "weight"):
            np.testing.assert_array_equal(getattr(res.tree, name), getattr(ref, name))

    def test_trace_and_selection(self):
        res = offline_loop(linear_teacher(), make("CartPole"), "dpic_r", 4, 300,
                           TreeConfig(max_nodes=3), alpha=0.1, eval_episodes=5, seed=1)
        sizes = [r.dataset_size for r in res.records]
        assert sizes == [300, 600, 900, 1200]
        best = [r.best_so_far for r in res.records]
        assert all(b >= a for a, b in zip(best, best[1:]))
        assert res.records[res.best_iteration].mean_return == max(r.mean_return for r in res.records)

    def test_without_aggregation(self):
        res = offline_loop(linear_teacher(), make("CartPole"), "bc", 2, 200,
                           TreeConfig(max_nodes=3), aggregate=False, resample=True,
                           eval_episodes=2, seed=1)
        assert [r.dataset_size for r in res.records] == [200, 200]

    def test_needs_an_iteration(self):
        with pytest.raises(ContractError):
            offline_loop(linear_teacher(), make("CartPole"), "bc", 0, 10)
