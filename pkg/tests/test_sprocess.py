import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sedpf_lab import netsim, sprocess
from sedpf_lab.expctl import upper_confidence
from sedpf_lab.sprocess import (DivergenceError, SProcessSpec, capacity_check, coded_path_delay_ratio, delay_bound,
                                exact_distribution, exact_p_s, lossiest_path, moments, monte_carlo, p_s,
                                poisson_binomial_distribution, poisson_binomial_pmf, tail_formula)


def single(tau, eps):
    return SProcessSpec(tau, (tau,), (eps,))


# --- spec validation and capacity ----------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(tau=1, counts=(1,), eps=(0.1,)),
    dict(tau=4, counts=(2, 1), eps=(0.1, 0.1)),
    dict(tau=4, counts=(4,), eps=(0.1, 0.2)),
    dict(tau=4, counts=(0, 4), eps=(0.1, 0.1), coded_path=1),
    dict(tau=4, counts=(4,), eps=(1.0,)),
    dict(tau=4, counts=(4,), eps=(0.1,), coded_path=2),
])
def test_spec_rejects(kw):
    with pytest.raises(ValueError):
        SProcessSpec(**kw)


def test_capacity_examples():
    assert capacity_check(SProcessSpec(4, (2, 2), (0.0, 0.0)))
    assert not capacity_check(single(4, 0.3))
    assert capacity_check(SProcessSpec(4, (2, 2), (0.2, 0.2)))


def test_eps_bar_counts_every_slot():
    s = SProcessSpec(4, (2, 2), (0.1, 0.0))
    assert s.load == pytest.approx(0.2)
    assert s.eps_bar == pytest.approx(0.2 / 3)


# --- closed forms ------------------------------------------------------------------

def test_p_s_lossless():
    s = SProcessSpec(4, (2, 2), (0.0, 0.0))
    assert p_s(s, 0) == 1.0
    assert p_s(s, 1) == 0.0
    assert p_s(s, 5) == 0.0


def test_p_s_single_path_examples():
    s = single(4, 0.1)
    assert p_s(s, 0) == pytest.approx(0.729, abs=1e-15)
    assert p_s(s, 1) == pytest.approx(0.2187, abs=1e-15)


def test_p_s_negative_k():
    with pytest.raises(ValueError):
        p_s(single(4, 0.1), -1)


def test_p_s_matches_monte_carlo():
    s = single(4, 0.1)
    mc = monte_carlo(s, 1_000_000, seed=3)
    for k in (0, 1):
        p = p_s(s, k)
        assert abs(mc.prob(k) - p) <= 2.576 * math.sqrt(p * (1 - p) / mc.samples)


def test_tail_formula_frozen():
    # (3/2) e^2 (1-e)^6 C(4, 1) at e = 0.1
    assert tail_formula(4, 0.1, 2) == pytest.approx(1.5 * 0.01 * 0.9**6 * 4, rel=1e-13)
    assert tail_formula(4, 0.0, 3) == 0.0


# --- poisson-binomial ----------------------------------------------------------------

def test_poisson_binomial_examples():
    assert poisson_binomial_pmf([0.5, 0.5], 1) == pytest.approx(0.5)
    assert poisson_binomial_pmf([0.37], 1) == pytest.approx(0.37)


def test_poisson_binomial_brute_force():
    probs = [0.1, 0.2, 0.3]
    want = 0.0
    for bits in itertools.product((0, 1), repeat=3):
        if sum(bits) == 2:
            want += math.prod(p if b else 1 - p for p, b in zip(probs, bits))
    assert want == pytest.approx(0.092, abs=1e-15)
    assert poisson_binomial_pmf(probs, 2) == pytest.approx(want, abs=1e-15)


def test_poisson_binomial_range():
    with pytest.raises(ValueError):
        poisson_binomial_pmf([0.1], 2)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_poisson_binomial_is_a_distribution(probs):
    pmf = poisson_binomial_distribution(probs)
    assert pmf.min() >= -1e-15
    assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-12)
    assert float(np.dot(np.arange(len(pmf)), pmf)) == pytest.approx(sum(probs), abs=1e-9)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.integers(0, 10))
def test_poisson_binomial_truncation_agrees(probs, r):
    full = poisson_binomial_distribution(probs)
    cut = poisson_binomial_distribution(probs, r)
    assert np.allclose(full[: len(cut)], cut, atol=1e-15)


# --- exact oracle --------------------------------------------------------------------

def test_exact_lossless_is_zero():
    assert exact_p_s(SProcessSpec(4, (2, 2), (0.0, 0.0)), 2) == 0.0


@pytest.mark.parametrize("tau,eps", [(2, 0.1), (4, 0.05), (4, 0.1), (8, 0.02)])
def test_exact_equals_tail_when_homogeneous(tau, eps):
    # every slot erased with the same eps: the per-frame law is binomial
    for k in range(2, 11):
        assert exact_p_s(single(tau, eps), k) == pytest.approx(tail_formula(tau, eps, k), rel=1e-12)


def test_exact_equals_tail_on_equal_two_path_split():
    s = SProcessSpec(4, (2, 2), (0.08, 0.08))
    for k in range(2, 11):
        assert exact_p_s(s, k) == pytest.approx(tail_formula(4, 0.08, k), rel=1e-12)


def test_exact_rejects_small_k_and_huge_k():
    with pytest.raises(ValueError):
        exact_p_s(single(4, 0.1), 1)
    with pytest.raises(ValueError):
        exact_p_s(single(4, 0.1), 10_000)


def test_exact_heterogeneous_matches_monte_carlo():
    s = SProcessSpec(4, (2, 2), (0.15, 0.02))
    mc = monte_carlo(s, 1_000_000, seed=11)
    for k in (2, 3):
        p = exact_p_s(s, k)
        assert abs(mc.prob(k) - p) <= 2.576 * math.sqrt(p * (1 - p) / mc.samples)


def test_exact_distribution_normalised():
    s = SProcessSpec(4, (3, 1), (0.05, 0.1))
    d = exact_distribution(s, 150)
    assert math.fsum(d.pmf) + d.tail_mass == pytest.approx(1.0, abs=1e-12)
    assert d.tail_mass < 1e-9
    assert d.pmf[3] == pytest.approx(exact_p_s(s, 3), rel=1e-12)


def test_approx_distribution_exact_head():
    s = single(4, 0.1)
    d = sprocess.approx_distribution(s, 20)
    assert d.pmf[0] == p_s(s, 0) and d.pmf[1] == p_s(s, 1)


# --- moments -------------------------------------------------------------------------

def test_moments_lossless():
    assert moments(SProcessSpec(4, (2, 2), (0.0, 0.0))) == (0.0, 0.0)


def test_moments_frozen():
    m, m2 = moments(single(4, 0.05))
    assert m == pytest.approx(0.18773621632996634, rel=1e-12)
    assert m2 == pytest.approx(0.2903584719439575, rel=1e-12)


def test_moments_diverge_at_pole():
    with pytest.raises(DivergenceError):
        moments(single(4, 0.2))


# --- delay bound ------------------------------------------------------------------------

def test_bound_zero_without_loss():
    b = delay_bound(SProcessSpec(4, (2, 2), (0.0, 0.0)), [0.001, 0.001])
    assert b.statement == 0.0 and b.proof == 0.0


def test_bound_variants():
    s = SProcessSpec(4, (2, 2), (0.1, 0.05))
    b = delay_bound(s, [0.002, 0.002])
    m, m2 = moments(s)
    scale = m2 / (2 * 4 * (m + p_s(s, 0)))
    assert b.statement == pytest.approx(scale * (2 + 2) * 0.002, rel=1e-12)
    # in slots of the fastest path: delta/unit = 1, so N(N-1) per path
    assert b.proof == pytest.approx(scale * 0.002 * (2 + 2), rel=1e-12)
    one = delay_bound(SProcessSpec(2, (1, 1), (0.1, 0.1)), [0.002, 0.002])
    assert one.statement > 0 and one.proof == 0.0


def test_bound_proof_is_unit_free():
    s = SProcessSpec(6, (4, 2), (0.05, 0.02))
    ms = delay_bound(s, [0.002, 0.004])
    us = delay_bound(s, [2000.0, 4000.0])
    assert us.proof == pytest.approx(ms.proof * 1e6, rel=1e-12)
    assert us.statement == pytest.approx(ms.statement * 1e6, rel=1e-12)


def test_bound_rejects_bad_delta():
    s = single(4, 0.05)
    with pytest.raises(ValueError):
        delay_bound(s, [0.01, 0.01])
    with pytest.raises(ValueError):
        delay_bound(s, [0.0])


def test_bound_holds_single_path_sim():
    s = single(4, 0.05)
    bound = delay_bound(s, [0.01]).statement
    sims = []
    for seed in range(1, 6):
        cfg = netsim.SimConfig([netsim.ChannelSpec(1, 0.01, erasure=0.05)], tau=4, packets=6000,
                               seed=seed, estimate="nominal")
        sims.append(netsim.run(cfg).mean_buffering)
    assert upper_confidence(sims, 0.95) <= bound


# --- coded-path choice ----------------------------------------------------------------

def test_lossiest_path():
    assert lossiest_path([0.1, 0.2]) == 2
    assert lossiest_path([0.0, 0.0]) == 1
    assert lossiest_path([0.3, 0.3, 0.1]) == 1


def test_ratio_examples():
    assert coded_path_delay_ratio(SProcessSpec(4, (2, 2), (0.1, 0.1)), 2) == pytest.approx(1.0, abs=1e-15)
    r = coded_path_delay_ratio(SProcessSpec(4, (2, 2), (0.2, 0.1)), 2)
    assert r == pytest.approx(1.125, abs=1e-12)


@given(st.floats(0, 0.4), st.floats(0, 0.4), st.integers(1, 5), st.integers(1, 5))
def test_ratio_closed_form(e1, e2, n1, n2):
    s = SProcessSpec(n1 + n2, (n1, n2), (e1, e2))
    hi, lo = (1, 2) if e1 >= e2 else (2, 1)
    want = (1 - s.eps[lo - 1]) / (1 - s.eps[hi - 1])
    assert abs(coded_path_delay_ratio(s, lo) - want) <= 1e-12 * want


@given(st.floats(0, 0.4), st.floats(0, 0.4), st.integers(1, 5), st.integers(1, 5))
def test_balance_p0_plus_p1(e1, e2, n1, n2):
    a = SProcessSpec(n1 + n2, (n1, n2), (e1, e2), 1)
    b = a.with_coded_path(2)
    assert p_s(a, 0) + p_s(a, 1) == pytest.approx(p_s(b, 0) + p_s(b, 1), rel=1e-12, abs=1e-15)


def test_tail_ignores_coded_path():
    a = SProcessSpec(6, (3, 3), (0.1, 0.02), 1)
    b = a.with_coded_path(2)
    for k in range(2, 8):
        assert p_s(a, k) == p_s(b, k)


# --- Monte Carlo --------------------------------------------------------------------

def test_monte_carlo_deterministic():
    s = SProcessSpec(4, (2, 2), (0.1, 0.05))
    a, b = monte_carlo(s, 50_000, seed=5), monte_carlo(s, 50_000, seed=5)
    assert np.array_equal(a.pmf, b.pmf) and a.samples == b.samples


def test_monte_carlo_chunking_invariant():
    s = SProcessSpec(4, (2, 2), (0.1, 0.05))
    a = monte_carlo(s, 30_000, seed=5, chunk=30_000)
    b = monte_carlo(s, 30_000, seed=5, chunk=30_000)
    assert np.array_equal(a.extra["counts"], b.extra["counts"])
    assert math.fsum(a.pmf) + a.tail_mass == pytest.approx(1.0)


def test_monte_carlo_lossless():
    d = monte_carlo(SProcessSpec(4, (2, 2), (0.0, 0.0)), 1000)
    assert d.prob(0) == 1.0 and d.samples == 1000
