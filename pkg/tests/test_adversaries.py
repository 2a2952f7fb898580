"""Adaptive hardness constructions and random instance generation."""

import numpy as np
import pytest

from pmean_arena.adversaries import (
    NegativeAdversaryConfig,
    PositiveAdversaryConfig,
    good_agent_floor,
    negative_opt_lower_bound,
    negative_ratio_bound,
    random_instance,
    run_negative_adversary,
    run_positive_adversary,
    s_sequence,
)
from pmean_arena.allocators import (
    MixedGreedy,
    NashianGreedy,
    UniformAllocator,
    compose_with_uniform,
)
from pmean_arena.core import (
    ConfigurationError,
    InvalidInputError,
    PMeanParam,
    instance_to_json,
    p_mean_welfare,
    utilities_of,
    validate_instance,
)

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


class TestSSequence:
    def test_L1(self):
        assert np.allclose(s_sequence(1, 0.0, -1.0), [1.0, 2 / 3])

    def test_L2(self):
        assert np.allclose(s_sequence(2, 0.0, -1.0), [1.0, 0.8, 0.6])

    def test_recurrence_residual(self):
        for p in (-0.5, -1.0, -2.0):
            for L in (1, 3, 6):
                for alpha in (0.0, abs(p) / 3):
                    s = s_sequence(L, alpha, p)
                    ap = abs(p)
                    for ell in range(1, L + 1):
                        resid = s[ell - 1] + ap * (1 - s[ell]) - (
                            s[L] * (1 + ap) - alpha)
                        assert abs(resid) <= 1e-12
                    assert s[0] == 1.0
                    assert np.all(np.diff(s) < 0)
                    assert s[-1] >= 0

    def test_alpha_out_of_range(self):
        with pytest.raises(InvalidInputError):
            s_sequence(2, 1.0, -1.0)


class TestNegativeAdversary:
    def test_uniform_bad_group_average(self):
        cfg = NegativeAdversaryConfig(n=100, p=PMeanParam.of(-1), L=1)
        run = run_negative_adversary(cfg, UniformAllocator())
        B = run.groups["B"]
        assert run.utilities[B].mean() < (cfg.L + 1) / cfg.n

    def test_instance_telescopes(self):
        cfg = NegativeAdversaryConfig(n=64, p=PMeanParam.of(-1), L=2)
        run = run_negative_adversary(
            cfg, compose_with_uniform(NashianGreedy(), 0.5))
        assert validate_instance(run.instance, tol=1e-9).passed

    def test_witness_welfare_meets_closed_form(self):
        cfg = NegativeAdversaryConfig(n=100, p=PMeanParam.of(-1), L=1)
        run = run_negative_adversary(cfg, UniformAllocator())
        w = p_mean_welfare(
            utilities_of(run.instance, run.explicit_allocation), cfg.p)
        assert w >= negative_opt_lower_bound(cfg) - 1e-9

    def test_ungrouped_average_inductive_bound(self):
        cfg = NegativeAdversaryConfig(n=256, p=PMeanParam.of(-1), L=4)
        for opponent in (UniformAllocator(),
                         compose_with_uniform(MixedGreedy(), 0.5)):
            run = run_negative_adversary(cfg, opponent)
            for ell, avg in enumerate(run.extra["round_ungrouped_avgs"], start=1):
                assert avg < ell / cfg.n

    def test_group_size_zero_is_config_error(self):
        with pytest.raises(ConfigurationError):
            NegativeAdversaryConfig(n=4, p=PMeanParam.of(-0.5), L=6)

    def test_ratio_bound_uses_realized_sizes(self):
        cfg = NegativeAdversaryConfig(n=256, p=PMeanParam.of(-1), L=6)
        assert negative_ratio_bound(cfg) > 0
        assert np.all(np.diff(cfg.realized_s) <= 0)

    def test_requires_negative_p(self):
        with pytest.raises(ConfigurationError):
            NegativeAdversaryConfig(n=64, p=PMeanParam.of(0.5), L=2)


class TestPositiveAdversary:
    def test_config_derivation(self):
        cfg = PositiveAdversaryConfig(n=4096, p=PMeanParam.of(0.01))
        assert cfg.M >= 4
        assert cfg.L == int(np.ceil(np.log(4096) / 2))
        assert cfg.supplies[0] == pytest.approx(np.exp(-cfg.L))
        assert cfg.supplies.sum() < 1

    def test_instance_telescopes(self):
        cfg = PositiveAdversaryConfig(n=256, p=PMeanParam.of(0.1))
        run = run_positive_adversary(cfg, UniformAllocator())
        assert validate_instance(run.instance, tol=1e-9).passed

    def test_round_supply_and_membership(self):
        cfg = PositiveAdversaryConfig(n=128, p=PMeanParam.of(0.1))
        run = run_positive_adversary(cfg, UniformAllocator())
        V = run.instance.value_matrix()
        # round 1: ceil(n/M) items, each agent valued by exactly one
        k1 = int(np.ceil(cfg.n / cfg.M))
        round1 = V[:, :k1]
        counts = (round1 > 0).sum(axis=1)
        assert np.all(counts == 1)
        assert round1.sum() == pytest.approx(cfg.n * cfg.supplies[0])

    def test_witness_utilities(self):
        cfg = PositiveAdversaryConfig(n=256, p=PMeanParam.of(0.1))
        run = run_positive_adversary(cfg, UniformAllocator())
        wu = utilities_of(run.instance, run.explicit_allocation)
        for ell in range(1, cfg.L + 1):
            grp = run.groups[f"B{ell}"]
            assert wu[grp].min() >= cfg.supplies[ell - 1] - 1e-12
        assert wu[run.groups["G"]].min() >= good_agent_floor() - 1e-12

    def test_uniform_opponent_bad_averages(self):
        cfg = PositiveAdversaryConfig(n=256, p=PMeanParam.of(0.1))
        run = run_positive_adversary(cfg, UniformAllocator())
        for ell, avg in enumerate(run.extra["bad_group_avgs"], start=1):
            assert avg <= 3 * cfg.supplies[ell - 1] / cfg.M


class TestRandomInstance:
    def test_single_agent(self):
        inst = random_instance(1, 3, seed=0)
        assert validate_instance(inst, tol=1e-12).passed

    def test_deterministic(self):
        a = random_instance(6, 9, seed=42)
        b = random_instance(6, 9, seed=42)
        assert instance_to_json(a) == instance_to_json(b)

    def test_rescaling_exact(self):
        inst = random_instance(8, 20, seed=42)
        assert validate_instance(inst, tol=1e-12).passed

    def test_distributions(self):
        for dist in ("uniform", "sparse:3", "correlated"):
            inst = random_instance(5, 10, seed=7, dist=dist)
            assert validate_instance(inst, tol=1e-9).passed
        sparse = random_instance(5, 10, seed=7, dist="sparse:3")
        assert np.all((sparse.value_matrix() > 0).sum(axis=1) == 3)

    def test_heterogeneous_monopolist(self):
        V = np.array([0.5, 0.75, 1.0])
        inst = random_instance(3, 6, seed=1, monopolist=V)
        assert np.allclose(inst.value_matrix().sum(axis=1), V)
        assert validate_instance(inst, tol=1e-12).realized_K == pytest.approx(2.0)
