"""Kernel solvers, campaigns, budgets, and the record CSV round trip."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reshadow import channels, ensembles, estimator, lgt, qcore, visible
from reshadow.errors import RepresentabilityError

from conftest import random_hermitian


def random_density(n, rng):
    a = random_hermitian(n, rng) + 2.0 * np.eye(1 << n)
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def exact_expectation(k, rho):
    """E[K] under the true sampling distribution of a discrete ensemble."""
    tables = np.stack([
        qcore.born_probabilities(rho, ensembles.realize(m)) for m in k.ens.members
    ])
    return float(np.dot(k.density, (tables * k.values).sum(axis=1)))


# ---------------------------------------------------------------------------
# Budget formula
# ---------------------------------------------------------------------------


def test_theorem_shot_count_reference_point():
    # M=1, eps=0.1, delta=0.05, Var=1, Q=1:
    # 2 ln(1/0.1) * (1 + 0.1/3) / 0.01 = 475.87 -> 476
    b = estimator.Budget(1, 0.1, 0.05, (1.0,), (1.0,))
    assert estimator.theorem1_shots(b) == 476


def test_theorem_shots_monotone_in_variance():
    shots = [
        estimator.theorem1_shots(estimator.Budget(1, 0.1, 0.05, (v,), (1.0,)))
        for v in (0.5, 1.0, 2.0, 4.0)
    ]
    assert shots == sorted(shots)
    assert shots[0] < shots[-1]


def test_bias_eats_error_budget():
    b = estimator.Budget(1, 0.1, 0.05, (1.0,), (1.0,), biases=(0.05,))
    plain = estimator.Budget(1, 0.1, 0.05, (1.0,), (1.0,))
    assert estimator.theorem1_shots(b) > estimator.theorem1_shots(plain)
    with pytest.raises(ValueError):
        bad = estimator.Budget(1, 0.1, 0.05, (1.0,), (1.0,), biases=(0.1,))
        estimator.theorem1_shots(bad)


def test_budget_validation():
    with pytest.raises(ValueError):
        estimator.Budget(1, 0.0, 0.05, (1.0,), (1.0,))
    with pytest.raises(ValueError):
        estimator.Budget(1, 0.1, 0.05, (1.0, 2.0), (1.0,))


def test_default_batches():
    assert estimator.default_batches(1, 0.1) == 6
    assert estimator.default_batches(10, 0.05) >= estimator.default_batches(1, 0.1)


# ---------------------------------------------------------------------------
# Analytic kernels
# ---------------------------------------------------------------------------


def test_su2_kernel_reconstructs_visible_operator(rng):
    a = random_hermitian(2, rng)
    o = visible.project_visible(a)
    ens = ensembles.Ensemble(ensembles.KIND_GLOBAL_SU2, 2)
    k = estimator.kernel_cs(o, ens)
    np.testing.assert_allclose(estimator.reconstruct(k), o, atol=1e-10)


def test_su2_kernel_rejects_invisible_part(rng):
    s = visible.FixedIdSet(2, 0, 1, 1, 0)  # the XY/YX family
    bperp = visible.build_Bperp(s, 1)
    ens = ensembles.Ensemble(ensembles.KIND_GLOBAL_SU2, 2)
    with pytest.raises(Exception):
        estimator.kernel_cs(bperp, ens)


def test_cl2_kernel_variance_is_shadow_norm():
    xx = qcore.PauliString.from_word("XX").to_dense()
    ens = ensembles.Ensemble(ensembles.KIND_GLOBAL_CL2, 2)
    k = estimator.kernel_cs(xx, ens)
    v = estimator.var_max_bound(k)
    assert abs(v - channels.shadow_norm_cl2(xx)) < 1e-9
    assert abs(v - 3.0) < 1e-9
    np.testing.assert_allclose(estimator.reconstruct(k), xx, atol=1e-10)


def test_cl2_kernel_unbiased_under_random_state(rng):
    xx = qcore.PauliString.from_word("XX").to_dense()
    ens = ensembles.Ensemble(ensembles.KIND_GLOBAL_CL2, 2)
    k = estimator.kernel_cs(xx, ens)
    rho = random_density(2, rng)
    want = np.trace(rho @ xx).real
    assert abs(exact_expectation(k, rho) - want) < 1e-10


@settings(max_examples=15)
@given(st.integers(min_value=0, max_value=10**6))
def test_su2_quadrature_mean_matches_trace(seed):
    rng = np.random.default_rng(seed)
    o = visible.project_visible(random_hermitian(2, rng))
    rho = random_density(2, rng)
    ens = ensembles.Ensemble(ensembles.KIND_GLOBAL_SU2, 2)
    k = estimator.kernel_cs(o, ens)
    nodes, weights = estimator.su2_quadrature_angles(2)
    vals = estimator._su2_node_values(k.inv_op, nodes, 2)
    probs = np.stack([
        qcore.born_probabilities(rho, estimator._realize_node(node, 2))
        for node in nodes
    ])
    mean = float(np.dot(weights, (probs * vals).sum(axis=1)))
    assert abs(mean - np.trace(rho @ o).real) < 1e-8


# ---------------------------------------------------------------------------
# Subsampled ensembles and the least-squares kernel
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def link_setup():
    link = lgt.link_local(1.0, 1.0)  # two-qubit gauge-link term
    rng = np.random.default_rng(0)
    ens = ensembles.subsample_su2(6, rng, targets=(link,), n=2)
    return link, ens


def test_subsample_kernel_is_unbiased(link_setup, rng):
    link, ens = link_setup
    k = estimator.kernel_least_squares(link, ens)
    assert k.residual < 1e-8
    np.testing.assert_allclose(estimator.reconstruct(k), link, atol=1e-8)
    for _ in range(5):
        rho = random_density(2, rng)
        want = np.trace(rho @ link).real
        assert abs(exact_expectation(k, rho) - want) < 1e-8


def test_small_subsample_not_representable():
    link = lgt.link_local(1.0, 1.0)
    rng = np.random.default_rng(1)
    ens = ensembles.subsample_su2(3, rng, n=2)
    assert estimator.representability_residual(link, ens) > 1e-3
    with pytest.raises(RepresentabilityError):
        estimator.kernel_least_squares(link, ens)


def test_var_under_state_matches_direct_sum(link_setup, rng):
    link, ens = link_setup
    k = estimator.kernel_least_squares(link, ens)
    rho = random_density(2, rng)
    tables = np.stack([
        qcore.born_probabilities(rho, ensembles.realize(m)) for m in ens.members
    ])
    mean = np.dot(k.density, (tables * k.values).sum(axis=1))
    second = np.dot(k.density, (tables * k.values**2).sum(axis=1))
    want = second - mean**2
    assert abs(estimator.var_under_state(k, rho) - want) < 1e-10


def test_var_max_bound_dominates_any_state(link_setup, rng):
    link, ens = link_setup
    k = estimator.kernel_least_squares(link, ens)
    bound = estimator.var_max_bound(k)
    for _ in range(10):
        rho = random_density(2, rng)
        assert estimator.var_under_state(k, rho) <= bound + 1e-10


def test_kernel_q_variants(link_setup):
    link, ens = link_setup
    k = estimator.kernel_least_squares(link, ens)
    q_bare = estimator.kernel_q(k, "max_abs_k")
    q_thm = estimator.kernel_q(k, "theorem")
    assert q_bare == pytest.approx(np.abs(k.values).max())
    assert q_thm == pytest.approx(q_bare + qcore.spectral_norm(link), rel=1e-8)
    with pytest.raises(ValueError):
        estimator.kernel_q(k, "nope")


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


def test_campaign_threads_do_not_change_records(link_setup):
    link, ens = link_setup
    rho = qcore.basis_state(2, 0)
    r1 = estimator.run_campaign(rho, ens, 5000, np.random.default_rng(7), threads=1)
    r4 = estimator.run_campaign(rho, ens, 5000, np.random.default_rng(7), threads=4)
    assert np.array_equal(r1.b, r4.b)
    assert np.array_equal(r1.member_idx, r4.member_idx)


def test_campaign_estimate_tracks_truth(link_setup):
    link, ens = link_setup
    rho = qcore.basis_state(2, 0)
    want = float(np.vdot(rho, link @ rho).real)
    k = estimator.kernel_least_squares(link, ens)
    records = estimator.run_campaign(rho, ens, 20_000, np.random.default_rng(3))
    est = estimator.estimate(records, k)
    sigma = np.sqrt(estimator.var_under_state(k, rho) / len(records))
    assert abs(est - want) < 5.0 * sigma
    mom = estimator.estimate(records, k, method="median_of_means")
    assert abs(mom - want) < 8.0 * sigma


def test_estimate_rejects_bad_inputs(link_setup):
    link, ens = link_setup
    k = estimator.kernel_least_squares(link, ens)
    records = estimator.run_campaign(
        qcore.basis_state(2, 0), ens, 16, np.random.default_rng(0))
    with pytest.raises(ValueError):
        estimator.estimate(records, k, method="trimmed")
    other = estimator.run_campaign(
        qcore.basis_state(2, 0),
        ensembles.Ensemble(ensembles.KIND_GLOBAL_SU2, 2), 4,
        np.random.default_rng(0))  # different kind, same n
    with pytest.raises(ValueError):
        k.evaluate_records(other)


def test_su2_campaign_agrees_with_kernel_evaluate():
    ens = ensembles.Ensemble(ensembles.KIND_GLOBAL_SU2, 2)
    o = visible.project_visible(random_hermitian(2, np.random.default_rng(4)))
    k = estimator.kernel_cs(o, ens)
    records = estimator.run_campaign(
        qcore.basis_state(2, 0), ens, 50, np.random.default_rng(5))
    vals = k.evaluate_records(records)
    for i in (0, 17, 49):
        assert vals[i] == pytest.approx(k.evaluate(records.unitary(i),
                                                   int(records.b[i])), abs=1e-12)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def _campaign_for(kind, rng):
    if kind == ensembles.KIND_GLOBAL_SU2:
        ens = ensembles.Ensemble(kind, 2)
    elif kind == ensembles.KIND_GLOBAL_CL2:
        ens = ensembles.Ensemble(kind, 2)
    elif kind == ensembles.KIND_LOCAL_CLIFFORD:
        ens = ensembles.Ensemble(kind, 2)
    else:
        ens = ensembles.subsample_su2(4, rng, n=2)
    state = np.zeros(4)
    state[0] = state[3] = 1.0 / np.sqrt(2.0)
    return estimator.run_campaign(state, ens, 25, rng)


@pytest.mark.parametrize("kind", [
    ensembles.KIND_GLOBAL_SU2,
    ensembles.KIND_GLOBAL_CL2,
    ensembles.KIND_LOCAL_CLIFFORD,
    ensembles.KIND_DISCRETE_SUBSAMPLE,
])
def test_records_csv_roundtrip(kind, rng):
    records = _campaign_for(kind, rng)
    text = estimator.records_to_csv(records, metadata={"seed": "7"})
    back, meta = estimator.records_from_csv(text)
    assert meta["seed"] == "7"
    assert back.kind == records.kind and back.n == records.n
    assert np.array_equal(back.b, records.b)
    if records.thetas is not None:
        np.testing.assert_allclose(back.thetas, records.thetas, atol=1e-15)
        np.testing.assert_allclose(back.psis, records.psis, atol=1e-15)
    if kind == ensembles.KIND_LOCAL_CLIFFORD:
        assert back.words == records.words
    # a second serialization is byte-identical
    assert estimator.records_to_csv(back, metadata={"seed": "7"}) == text


def test_records_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        estimator.records_from_csv("# n=2\na,b,c\n1,2,3\n")
