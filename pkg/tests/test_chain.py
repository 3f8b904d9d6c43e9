"""Sampler, discrete kernel, generator, and the spectral/cut diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csmasim.chain import (
    chain_diagnostics,
    chi2_distance,
    conductance,
    ctmc_generator,
    empirical_distribution,
    glauber_kernel,
    matrix_norm,
    mixing_time_estimate,
    occupancy,
    second_eigenvalue_modulus,
    simulate,
    transient_distribution,
    tv_distance,
)
from csmasim.conflict_graph import (
    ConflictGraph,
    enumerate_independent_sets,
    preset,
    schedule_nodes,
)
from csmasim.errors import ExactModeUnavailable
from csmasim.gibbs import stationary_distribution


@st.composite
def family_and_backoff(draw, max_n=6):
    n = draw(st.integers(min_value=1, max_value=max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = [p for p in pairs if draw(st.booleans())]
    fam = enumerate_independent_sets(ConflictGraph.from_edges(n, edges))
    r = np.array(draw(st.lists(st.floats(min_value=-3.0, max_value=3.0),
                               min_size=n, max_size=n)))
    return fam, r


# -- discrete kernel ----------------------------------------------------------

def test_single_node_kernel_is_half_lazy():
    fam = enumerate_independent_sets(preset("single"))
    k = glauber_kernel(fam, [0.0])
    assert np.allclose(k.matrix, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)
    assert k.total_rate == 1.0
    assert second_eigenvalue_modulus(k) == pytest.approx(0.0, abs=1e-12)


def test_kernel_rejects_unusable_backoffs():
    fam = enumerate_independent_sets(preset("single"))
    with pytest.raises(ValueError):
        glauber_kernel(fam, [-math.inf])
    with pytest.raises(ValueError):
        glauber_kernel(fam, [701.0])
    with pytest.raises(ValueError):
        glauber_kernel(fam, [0.0, 0.0])


@settings(max_examples=80, deadline=None)
@given(family_and_backoff())
def test_kernel_rows_and_detailed_balance(pair):
    fam, r = pair
    k = glauber_kernel(fam, r)
    P = k.matrix
    assert np.all(P >= -1e-15)
    assert P.sum(axis=1) == pytest.approx(np.ones(fam.size), abs=1e-12)
    # moves touch exactly one node
    for a, ma in enumerate(fam.masks):
        for b, mb in enumerate(fam.masks):
            if a != b and bin(ma ^ mb).count("1") != 1:
                assert P[a, b] == 0.0
    pi = stationary_distribution(fam, r).probs
    flow = pi[:, None] * P
    assert flow == pytest.approx(flow.T, abs=1e-12)


def test_kernel_is_at_least_half_lazy():
    fam = enumerate_independent_sets(preset("cycle5"))
    for r in ([0.0] * 5, [1.5, -2.0, 0.3, 0.0, 2.5]):
        P = glauber_kernel(fam, r).matrix
        assert np.all(np.diag(P) >= 0.5 - 1e-12)


@settings(max_examples=50, deadline=None)
@given(family_and_backoff(max_n=5))
def test_second_eigenvalue_matches_dense_spectrum(pair):
    fam, r = pair
    k = glauber_kernel(fam, r)
    vals = np.sort(np.abs(np.linalg.eigvals(k.matrix)))
    oracle = 0.0 if vals.size == 1 else float(vals[-2])
    assert second_eigenvalue_modulus(k) == pytest.approx(oracle, abs=1e-9)


def test_matrix_norm_recovers_eigenvalue_and_submultiplies():
    fam = enumerate_independent_sets(preset("cycle5"))
    r = np.array([0.4, -0.3, 0.0, 0.7, -1.1])
    k = glauber_kernel(fam, r)
    pi = stationary_distribution(fam, r).probs
    lam = second_eigenvalue_modulus(k, pi)
    assert matrix_norm(k.matrix, pi) == pytest.approx(lam, abs=1e-10)
    assert matrix_norm(k.matrix @ k.matrix, pi) <= lam * lam + 1e-12


# -- continuous-time generator -------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(family_and_backoff(max_n=5))
def test_generator_rows_and_stationarity(pair):
    fam, r = pair
    Q = ctmc_generator(fam, r)
    assert Q.sum(axis=1) == pytest.approx(np.zeros(fam.size), abs=1e-9)
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0.0)
    pi = stationary_distribution(fam, r).probs
    assert pi @ Q == pytest.approx(np.zeros(fam.size), abs=1e-9)


def test_transient_distribution_limits():
    fam = enumerate_independent_sets(preset("clique2"))
    r = np.array([0.3, -0.2])
    init = np.zeros(fam.size)
    init[0] = 1.0
    assert transient_distribution(fam, r, init, 0.0) == pytest.approx(init, abs=1e-12)
    mid = transient_distribution(fam, r, init, 0.7)
    assert mid.sum() == pytest.approx(1.0, abs=1e-10)
    far = transient_distribution(fam, r, init, 200.0)
    assert far == pytest.approx(stationary_distribution(fam, r).probs, abs=1e-9)
    with pytest.raises(ValueError):
        transient_distribution(fam, r, np.zeros(2), 1.0)


# -- conductance and mixing estimates ------------------------------------------

def test_single_node_conductance_is_one():
    fam = enumerate_independent_sets(preset("single"))
    k = glauber_kernel(fam, [0.0])
    pi = stationary_distribution(fam, [0.0]).probs
    # only cut: Q = 1/2 * 1/2 = 1/4 over pi(S)pi(Sc) = 1/4
    assert conductance(k.matrix, pi) == pytest.approx(1.0, abs=1e-12)


def brute_conductance(P, pi):
    N = pi.size
    E = pi[:, None] * P
    best = math.inf
    for cut in range(1, (1 << N) - 1):
        s = [i for i in range(N) if cut >> i & 1]
        sc = [i for i in range(N) if not cut >> i & 1]
        q = E[np.ix_(s, sc)].sum()
        best = min(best, q / (pi[s].sum() * pi[sc].sum()))
    return best


@settings(max_examples=30, deadline=None)
@given(family_and_backoff(max_n=4))
def test_conductance_matches_cut_loop(pair):
    fam, r = pair
    if fam.size < 2:
        return
    k = glauber_kernel(fam, r)
    pi = stationary_distribution(fam, r).probs
    assert conductance(k.matrix, pi) == pytest.approx(
        brute_conductance(k.matrix, pi), abs=1e-10)


def test_conductance_caps_and_argument_checks():
    fam = enumerate_independent_sets(preset("grid3x3"))
    pi = stationary_distribution(fam, [0.0] * 9).probs
    with pytest.raises(ExactModeUnavailable):
        conductance(np.eye(fam.size), pi)
    with pytest.raises(ValueError):
        conductance(np.ones((1, 1)), np.ones(1))


def test_cheeger_bound_on_presets():
    for name in ("single", "clique2", "path3", "cycle5"):
        fam = enumerate_independent_sets(preset(name))
        for r in (np.zeros(fam.n), np.full(fam.n, 0.5)):
            k = glauber_kernel(fam, r)
            pi = stationary_distribution(fam, r).probs
            phi = conductance(k.matrix, pi)
            lam = second_eigenvalue_modulus(k, pi)
            if phi <= math.sqrt(2.0):
                assert lam <= 1.0 - phi * phi / 2.0 + 1e-9


def test_mixing_estimate_single_node_closed_form():
    fam = enumerate_independent_sets(preset("single"))
    est = mixing_time_estimate(fam, [0.0], 0.01)
    # gap 1, unit clock budget, floor pi_min = 1/2
    assert est.spectral_bound == pytest.approx(math.log(200.0), abs=1e-12)
    assert est.worst_case_bound == pytest.approx(math.e * math.log(100.0), abs=1e-12)
    with pytest.raises(ValueError):
        mixing_time_estimate(fam, [0.0], 1.5)


def test_chain_diagnostics_fields():
    fam = enumerate_independent_sets(preset("clique2"))
    diag = chain_diagnostics(fam, [0.0, 0.0])
    assert 0.0 < diag.conductance <= 2.0
    assert diag.lambda_max < 1.0
    assert diag.cheeger_upper == pytest.approx(1.0 - diag.conductance ** 2 / 2.0, abs=1e-12)
    payload = diag.to_json_dict()
    assert set(payload) == {"lambda_max", "conductance", "cheeger_upper",
                            "mixing_estimate", "mixing_worst_case", "conductance_ctmc"}


# -- distances ------------------------------------------------------------------

def test_distance_basics():
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert chi2_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert chi2_distance([1.0, 0.0], [0.0, 1.0]) == math.inf


@given(st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6),
       st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=6))
@settings(max_examples=80, deadline=None)
def test_tv_below_half_chi2(p_raw, q_raw):
    k = min(len(p_raw), len(q_raw))
    p = np.array(p_raw[:k]) / sum(p_raw[:k])
    q = np.array(q_raw[:k]) / sum(q_raw[:k])
    tv = tv_distance(p, q)
    assert 0.0 <= tv <= 1.0
    assert tv == tv_distance(q, p)
    assert tv <= 0.5 * chi2_distance(p, q) + 1e-12


# -- event-driven sampler --------------------------------------------------------

def test_simulate_validates_inputs():
    g = preset("clique2")
    with pytest.raises(ValueError):
        simulate(g, [0.0], 1.0)
    with pytest.raises(ValueError):
        simulate(g, [math.nan, 0.0], 1.0)
    with pytest.raises(ValueError):
        simulate(g, [math.inf, 0.0], 1.0)
    with pytest.raises(ValueError):
        simulate(g, [800.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        simulate(g, [0.0, 0.0], -1.0)
    with pytest.raises(ValueError):
        simulate(g, [0.0, 0.0], 1.0, initial_mask=0b11)


def test_simulate_reproducible_and_feasible():
    g = preset("cycle5")
    r = [0.5, 0.1, -0.4, 0.9, 0.0]
    a = simulate(g, r, 50.0, seed=42)
    b = simulate(g, r, 50.0, seed=42)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.starts, b.starts)
    assert a.final_mask == b.final_mask
    covered = 0.0
    for t0, t1, mask in a.segments():
        assert t1 > t0
        assert g.is_independent(mask)
        covered += t1 - t0
    assert covered == pytest.approx(50.0, abs=1e-9)


def test_clique_nodes_never_overlap():
    g = preset("clique2")
    traj = simulate(g, [1.0, 1.0], 200.0, seed=7)
    for _, _, mask in traj.segments():
        assert mask != 0b11


def test_masked_node_never_transmits():
    g = preset("clique2")
    traj = simulate(g, [-math.inf, 0.3], 100.0, seed=3)
    occ = occupancy(traj)
    assert occ.busy_fraction[0] == 0.0
    assert occ.busy_fraction[1] > 0.1


def test_long_run_matches_stationary_law():
    g = preset("clique2")
    fam = enumerate_independent_sets(g)
    r = np.array([0.2, -0.4])
    traj = simulate(g, r, 40_000.0, seed=11)
    emp = empirical_distribution(occupancy(traj), fam)
    pi = stationary_distribution(fam, r).probs
    assert tv_distance(emp, pi) <= 0.02
    # busy fractions are the same data viewed per node
    occ = occupancy(traj)
    assert occ.busy_fraction == pytest.approx(emp @ fam.matrix, abs=1e-12)


def test_zero_duration_has_no_events():
    g = preset("single")
    traj = simulate(g, [0.0], 0.0, seed=1)
    assert traj.times.size == 0
    assert list(traj.segments()) == []
    with pytest.raises(ValueError):
        occupancy(traj)


def test_trajectory_csv(tmp_path):
    g = preset("single")
    traj = simulate(g, [2.0], 5.0, seed=9)
    out = tmp_path / "traj.csv"
    traj.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "time,node,kind"
    assert len(lines) == traj.times.size + 1


def test_occupancy_against_event_replay():
    g = preset("path3")
    r = [0.3, 0.6, -0.2]
    traj = simulate(g, r, 300.0, seed=21)
    occ = occupancy(traj)
    # replay events with an independent per-node busy-interval accumulator
    busy = np.zeros(3)
    on_since = {}
    for i in schedule_nodes(traj.initial_mask):
        on_since[i] = 0.0
    for t, node, start in zip(traj.times, traj.nodes, traj.starts):
        if start:
            on_since[int(node)] = float(t)
        else:
            busy[int(node)] += float(t) - on_since.pop(int(node))
    for i, t0 in on_since.items():
        busy[i] += traj.duration - t0
    assert occ.busy_fraction == pytest.approx(busy / traj.duration, abs=1e-12)