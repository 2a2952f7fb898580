"""Online allocation rules: worked examples, oracle equivalence, invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmean_arena.allocators import (
    AllocatorState,
    MixedGreedy,
    NashianGreedy,
    PDGreedy,
    RegularizedPDGreedy,
    UniformAllocator,
    allocate_egalitarian_regularized,
    allocate_mixed,
    allocate_nashian_atomic,
    allocate_nashian_waterfill,
    allocate_pd_greedy,
    allocate_regularized_pd,
    allocate_uniform,
    compose_with_uniform,
    regularized_gamma,
    regularizer_scale,
    run_online,
)
from pmean_arena.core import (
    ConfigurationError,
    Instance,
    InvalidInputError,
    Item,
    PMeanParam,
    PreconditionError,
)
from conftest import corpus_instance, identity_instance


def slice_oracle(u0, values, slices=10_000):
    """Feed the item as many tiny atomic sub-items: the reference dynamics."""
    u = u0.copy()
    f = np.zeros_like(values)
    tiny = Item(values / slices)
    state = AllocatorState(n=len(u0), u=u)
    for _ in range(slices):
        out = allocate_nashian_atomic(state, tiny)
        f += out.fractions / slices
    return f, state.u


class TestUniform:
    def test_shares(self):
        assert np.allclose(allocate_uniform(4).fractions, 0.25)
        assert np.allclose(allocate_uniform(1).fractions, [1.0])

    def test_rejects_zero_agents(self):
        with pytest.raises(InvalidInputError):
            allocate_uniform(0)

    def test_complete_run_gives_v_over_n(self):
        inst = corpus_instance(0)
        trace = run_online(UniformAllocator(), inst, base="physical")
        assert np.allclose(trace.final_utilities, inst.monopolist / inst.n)


class TestNashianAtomic:
    def test_exclusive_item(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 0.5]))
        out = allocate_nashian_atomic(st_, Item(np.array([1.0, 0.0])))
        assert out.fractions[0] == 1.0

    def test_ratio_comparison(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 1.0]))
        out = allocate_nashian_atomic(st_, Item(np.array([0.6, 1.0])))
        assert out.fractions[0] == 1.0  # ratios 1.2 vs 1.0

    def test_index_tie_break(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 0.5]))
        out = allocate_nashian_atomic(st_, Item(np.array([0.3, 0.3])))
        assert out.fractions[0] == 1.0

    def test_zero_utility_precondition(self):
        st_ = AllocatorState(n=2, u=np.array([0.0, 0.5]))
        with pytest.raises(PreconditionError):
            allocate_nashian_atomic(st_, Item(np.array([1.0, 1.0])))

    def test_all_zero_item_discarded(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 0.5]))
        out = allocate_nashian_atomic(st_, Item(np.array([0.0, 0.0])))
        assert np.all(out.fractions == 0)

    def test_scale_covariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            u = rng.uniform(0.1, 1, 4)
            v = rng.uniform(0, 1, 4)
            picks = []
            for c in (1.0, 0.01, 37.5):
                st_ = AllocatorState(n=4, u=u.copy())
                out = allocate_nashian_atomic(st_, Item(v * c))
                picks.append(int(np.argmax(out.fractions)))
            assert len(set(picks)) == 1


class TestNashianWaterfill:
    def test_symmetric_split(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 0.5]))
        out = allocate_nashian_waterfill(st_, Item(np.array([1.0, 1.0])))
        assert np.allclose(out.fractions, [0.5, 0.5])
        assert np.allclose(st_.u, [1.0, 1.0])

    def test_worked_example(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 0.5]))
        out = allocate_nashian_waterfill(st_, Item(np.array([1.0, 0.5])))
        assert np.allclose(out.fractions, [0.75, 0.25], atol=1e-12)
        assert np.allclose(st_.u, [1.25, 0.625], atol=1e-12)
        # common final ratio
        assert np.allclose([1.0 / 1.25, 0.5 / 0.625], 0.8)

    def test_small_item_stays_with_leader(self):
        st_ = AllocatorState(n=2, u=np.array([0.5, 2.0]))
        out = allocate_nashian_waterfill(st_, Item(np.array([0.1, 0.1])))
        assert np.allclose(out.fractions, [1.0, 0.0])

    def test_matches_slice_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            u0 = rng.uniform(0.05, 1.0, n)
            v = rng.uniform(0, 1, n) * (rng.random(n) > 0.2)
            st_ = AllocatorState(n=n, u=u0.copy())
            out = allocate_nashian_waterfill(st_, Item(v))
            f_ref, u_ref = slice_oracle(u0, v)
            assert np.abs(out.fractions - f_ref).sum() <= 1e-2
            assert np.abs(st_.u - u_ref).max() <= 1e-3

    def test_ratio_law(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            n = int(rng.integers(2, 8))
            u0 = rng.uniform(0.05, 1.0, n)
            v = rng.uniform(0, 1, n) * (rng.random(n) > 0.3)
            if not (v > 0).any():
                continue
            st_ = AllocatorState(n=n, u=u0.copy())
            out = allocate_nashian_waterfill(st_, Item(v))
            got = out.fractions > 0
            if not got.any():
                continue
            levels = v[got] / st_.u[got]
            level = levels[0]
            assert np.allclose(levels, level, atol=1e-9)
            rest = (v > 0) & ~got
            assert np.all(v[rest] / u0[rest] <= level + 1e-9)

    def test_budget_fully_spent(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            n = int(rng.integers(2, 8))
            st_ = AllocatorState(n=n, u=rng.uniform(0.05, 1.0, n))
            v = rng.uniform(0.01, 1, n)
            out = allocate_nashian_waterfill(st_, Item(v))
            assert out.fractions.sum() == pytest.approx(1.0, abs=1e-9)


class TestEgalitarian:
    def test_atomic_prefers_smaller_regularized_utility(self):
        st_ = AllocatorState(n=2, u=np.array([0.9, 0.8]),
                             remaining=np.array([0.2, 0.2]), phi=2.0)
        out = allocate_egalitarian_regularized(st_, Item(np.array([0.5, 0.5])),
                                               mode="atomic")
        assert out.fractions[1] == 1.0

    def test_zero_value_agent_excluded(self):
        st_ = AllocatorState(n=2, u=np.array([0.9, 0.8]),
                             remaining=np.array([0.2, 0.2]), phi=2.0)
        out = allocate_egalitarian_regularized(st_, Item(np.array([0.5, 0.0])),
                                               mode="atomic")
        assert out.fractions[0] == 1.0

    def test_waterfill_symmetric_thirds(self):
        st_ = AllocatorState(n=3, u=np.full(3, 0.4),
                             remaining=np.full(3, 0.5), phi=2.0)
        out = allocate_egalitarian_regularized(st_, Item(np.ones(3)))
        assert np.allclose(out.fractions, 1 / 3)

    def test_unset_phi_is_config_error(self):
        st_ = AllocatorState(n=2, u=np.ones(2))
        with pytest.raises(ConfigurationError):
            allocate_egalitarian_regularized(st_, Item(np.ones(2)))

    def test_remaining_decremented_once(self):
        st_ = AllocatorState(n=2, u=np.full(2, 0.5),
                             remaining=np.array([0.9, 0.1]),
                             phi=regularizer_scale(2))
        allocate_mixed(st_, Item(np.array([0.3, 0.1])))
        assert np.allclose(st_.remaining, [0.6, 0.0])


class TestMixed:
    def test_symmetric_split(self):
        st_ = AllocatorState(n=2, u=np.full(2, 0.5),
                             remaining=np.ones(2), phi=regularizer_scale(2))
        out = allocate_mixed(st_, Item(np.ones(2)))
        assert np.allclose(out.fractions, 0.5)

    def test_single_interested_agent_gets_everything(self):
        st_ = AllocatorState(n=2, u=np.full(2, 0.5),
                             remaining=np.ones(2), phi=regularizer_scale(2))
        out = allocate_mixed(st_, Item(np.array([0.0, 0.8])))
        assert out.fractions[1] == pytest.approx(1.0)

    def test_egalitarian_half_follows_remaining(self):
        # Equal utilities but unequal remaining: the egalitarian half flows
        # to the smaller-remaining agent; the Nashian half splits evenly.
        phi = regularizer_scale(2)
        st_ = AllocatorState(n=2, u=np.full(2, 0.5),
                             remaining=np.array([0.9, 0.1]), phi=phi)
        reg = st_.u + st_.remaining / phi
        assert reg[1] < reg[0]
        out = allocate_mixed(st_, Item(np.ones(2)))
        assert out.fractions[1] > out.fractions[0]
        assert out.fractions.sum() == pytest.approx(1.0)


class TestPDGreedy:
    def test_p1_is_utilitarian(self):
        st_ = AllocatorState(n=2, u=np.zeros(2), gammas=np.zeros(2),
                             p=PMeanParam.of(1))
        out = allocate_pd_greedy(st_, Item(np.array([0.3, 0.7])), mode="atomic")
        assert out.fractions[1] == 1.0
        assert out.alpha == pytest.approx(0.7)

    def test_priority_example(self):
        st_ = AllocatorState(n=2, u=np.array([0.25, 1.0]),
                             gammas=np.array([0.5, 2.0]), p=PMeanParam.of(0.5))
        out = allocate_pd_greedy(st_, Item(np.ones(2)), mode="atomic")
        assert out.fractions[0] == 1.0
        assert out.alpha == pytest.approx(np.sqrt(2))

    def test_zero_gamma_value_tie_break(self):
        st_ = AllocatorState(n=2, u=np.zeros(2), gammas=np.zeros(2),
                             p=PMeanParam.of(0.5))
        out = allocate_pd_greedy(st_, Item(np.array([0.3, 0.7])), mode="atomic")
        assert out.fractions[1] == 1.0

    def test_bad_p_is_config_error(self):
        st_ = AllocatorState(n=2, u=np.zeros(2), gammas=np.zeros(2),
                             p=PMeanParam.of(-0.5))
        with pytest.raises(ConfigurationError):
            allocate_pd_greedy(st_, Item(np.ones(2)))

    def test_waterfill_increment_identity(self):
        # Exact accounting: Gamma^p * dP == dD on every waterfill step.
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = int(rng.integers(2, 7))
            p = float(rng.uniform(0.05, 0.95))
            u0 = rng.uniform(0, 1, n) * (rng.random(n) > 0.3)
            st_ = AllocatorState(n=n, u=u0.copy(), gammas=u0 / p,
                                 p=PMeanParam.of(p))
            v = rng.uniform(0, 1, n)
            P0 = (u0**p).sum() / p
            G0 = (1 / p - 1) * ((u0 / p) ** p).sum()
            out = allocate_pd_greedy(st_, Item(v), mode="waterfill")
            dP = (st_.u**p).sum() / p - P0
            dD = out.alpha + (1 / p - 1) * (st_.gammas**p).sum() - G0
            assert (1 / p) ** p * dP == pytest.approx(dD, abs=1e-9)

    def test_gammas_monotone_over_run(self):
        inst = corpus_instance(3)
        trace = run_online(PDGreedy(PMeanParam.of(0.5)), inst)
        assert np.all(trace.state.gammas >= 0)
        # replay step by step to observe monotonicity
        alloc = PDGreedy(PMeanParam.of(0.5))
        state = alloc.start(inst.n, inst.monopolist, "relaxed")
        prev = state.gammas.copy()
        for item in inst.items:
            alloc.step(state, item)
            assert np.all(state.gammas >= prev - 1e-12)
            prev = state.gammas.copy()


class TestRegularizedPD:
    def test_init_identity(self):
        # gamma(1/2) equals the boxed initialization (log 3 + 1)/2 at n = 2
        assert regularized_gamma(0.5, 2) == pytest.approx((np.log(3) + 1) / 2)

    def test_gamma_increasing_on_range(self):
        n = 4
        g = regularized_gamma(np.array([1 / n, 0.5, 1 + 1 / n]), n)
        assert g[0] < g[1] < g[2]

    def test_symmetric_tie_to_lowest_index(self):
        alloc = RegularizedPDGreedy(PMeanParam.of(0.5))
        state = alloc.start(2, np.ones(2), "relaxed")
        out = alloc.step(state, Item(np.ones(2)))
        assert out.fractions[0] == 1.0

    def test_gammas_monotone(self):
        inst = corpus_instance(4)
        alloc = RegularizedPDGreedy(PMeanParam.of(0.25))
        state = alloc.start(inst.n, inst.monopolist, "relaxed")
        prev = state.gammas.copy()
        for item in inst.items:
            alloc.step(state, item)
            assert np.all(state.gammas >= prev - 1e-12)
            prev = state.gammas.copy()


class TestCompose:
    def test_share_one_is_uniform(self):
        inst = corpus_instance(1)
        t1 = run_online(compose_with_uniform(NashianGreedy(), 1.0), inst,
                        base="physical")
        t2 = run_online(UniformAllocator(), inst, base="physical")
        assert np.allclose(t1.final_utilities, t2.final_utilities)

    def test_share_zero_is_inner(self):
        inst = corpus_instance(2)
        t1 = run_online(compose_with_uniform(NashianGreedy(), 0.0), inst)
        t2 = run_online(NashianGreedy(), inst)
        assert np.allclose(t1.final_utilities, t2.final_utilities)

    def test_half_share_identity_example(self):
        trace = run_online(
            compose_with_uniform(NashianGreedy("atomic"), 0.5),
            identity_instance(2), base="physical")
        assert np.allclose(trace.final_utilities, [0.75, 0.75])

    def test_out_of_range_share(self):
        with pytest.raises(ConfigurationError):
            compose_with_uniform(NashianGreedy(), 1.5)

    def test_column_sums_feasible(self):
        inst = corpus_instance(5)
        trace = run_online(compose_with_uniform(MixedGreedy(), 0.5), inst,
                           base="physical")
        sums = trace.allocation.x.sum(axis=0)
        assert np.all(sums <= 1 + 1e-12)
        assert np.allclose(sums, 1.0, atol=1e-9)


class TestRunOnline:
    def test_uniform_identity(self):
        trace = run_online(UniformAllocator(), identity_instance(2))
        assert np.allclose(trace.final_utilities, [0.5, 0.5])

    def test_relaxed_nashian_identity(self):
        trace = run_online(NashianGreedy("atomic"), identity_instance(2))
        assert np.allclose(trace.final_utilities, [1.5, 1.5])

    def test_snapshot_count(self):
        inst = corpus_instance(6)
        trace = run_online(NashianGreedy(), inst)
        assert trace.u_before.shape == (inst.m, inst.n)

    def test_invalid_instance_refused(self):
        bad = Instance(2, (Item(np.array([1.0, 0.7])),))
        with pytest.raises(InvalidInputError):
            run_online(NashianGreedy(), bad)
        trace = run_online(NashianGreedy("atomic"), bad, allow_invalid=True)
        assert trace.final_utilities[0] == pytest.approx(1.5)

    def test_utilities_nondecreasing_and_remaining_to_zero(self):
        inst = corpus_instance(7)
        trace = run_online(MixedGreedy(), inst)
        u_path = np.vstack([trace.u_before, trace.final_utilities])
        assert np.all(np.diff(u_path, axis=0) >= -1e-12)
        assert np.allclose(trace.state.remaining, 0.0, atol=1e-9)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_waterfill_matches_oracle_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    u0 = rng.uniform(0.05, 1.5, n)
    v = rng.uniform(0, 1, n)
    st_ = AllocatorState(n=n, u=u0.copy())
    out = allocate_nashian_waterfill(st_, Item(v))
    f_ref, u_ref = slice_oracle(u0, v, slices=2000)
    assert np.abs(out.fractions - f_ref).sum() <= 5e-2
    assert np.abs(st_.u - u_ref).max() <= 5e-3
