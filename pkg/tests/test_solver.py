import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from occnum.cme import build_generator, enumerate_states
from occnum.model import builtin_model, default_caps
from occnum.solver import (
    DiagonalDistribution,
    ErgodicityError,
    SolverError,
    detailed_balance_residual,
    evolve,
    gf_derivatives,
    gf_eval,
    gf_ode_residual,
    moment_identity_residuals,
    moments,
    stationary,
    stationary_residual,
    tv_between,
)


def solve(name, params, caps=None, total=None):
    spec = builtin_model(name, params)
    if total is not None:
        lat = enumerate_states(spec, None, ((1, 1), total))
    else:
        lat = enumerate_states(spec, caps or default_caps(spec))
    gen = build_generator(spec, lat)
    return gen, stationary(gen)


def cannibal_lambdas(a, b):
    # a = 2 lam2^2, b = 2 lam1^2
    return [math.sqrt(b / 2), math.sqrt(a / 2)]


def test_cannibal_symmetric_is_uniform():
    _, dist = solve("cannibal", [1, 1], total=2)
    np.testing.assert_allclose(dist.p, [1 / 3] * 3, atol=1e-14)


def test_cannibal_detailed_balance_chain():
    # p(n1+1)/p(n1) = a/b = 1/2 on [(0,2),(1,1),(2,0)]
    gen, dist = solve("cannibal", cannibal_lambdas(1, 2), total=2)
    np.testing.assert_allclose(dist.p, [4 / 7, 2 / 7, 1 / 7], rtol=1e-13)
    assert detailed_balance_residual(gen, dist) <= 1e-10


def test_oscillator_stationary_matches_nullspace_oracle():
    gen, dist = solve("oscillator", [1])
    null = scipy.linalg.null_space(gen.dense())
    assert null.shape[1] == 1
    ref = null[:, 0] / null[:, 0].sum()
    np.testing.assert_allclose(dist.p, ref, atol=1e-13)
    assert stationary_residual(gen, dist) <= 1e-10 * gen.max_rate


def test_oscillator_large_mu_mean():
    _, dist = solve("oscillator", [50], caps=[130])
    assert moments(dist).mean[0] == pytest.approx(25.5, rel=0.02)


def test_multiple_closed_classes_reported():
    spec = builtin_model("lvm_truncated")
    gen = build_generator(spec, enumerate_states(spec, [2, 2]))
    with pytest.raises(ErgodicityError) as info:
        stationary(gen)
    # n1 = 0 is absorbing, and so is n2 = cap since the jump would leave the box
    absorbing = sorted(int(c[0]) for c in info.value.components)
    assert all(len(c) == 1 for c in info.value.components)
    assert [gen.lattice.states[i].tolist() for i in absorbing] == [
        [0, 0], [0, 1], [0, 2], [1, 2], [2, 2]]


def test_transient_states_get_no_mass():
    _, dist = solve("lvm_truncated", [], total=3)
    assert dist.p.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_evolve_identity_at_zero():
    gen, _ = solve("oscillator", [1.5])
    p0 = DiagonalDistribution.point(gen.lattice, [3])
    assert np.array_equal(evolve(gen, p0, 0.0).p, p0.p)


def test_evolve_negative_time():
    gen, _ = solve("oscillator", [1.5])
    with pytest.raises(ValueError):
        evolve(gen, DiagonalDistribution.point(gen.lattice, [0]), -1.0)


@pytest.mark.parametrize(
    "name, params, caps, init, t",
    [("oscillator", [0.7], [12], [2], 0.8), ("lvm", [0.9, 1.1], [7, 7], [2, 1], 0.6),
     ("cannibal", [1.0, 0.6], [5, 5], [3, 2], 2.0)],
)
def test_evolve_matches_dense_expm(name, params, caps, init, t):
    spec = builtin_model(name, params)
    gen = build_generator(spec, enumerate_states(spec, caps))
    p0 = DiagonalDistribution.point(gen.lattice, init)
    ref = scipy.linalg.expm(gen.dense() * t) @ p0.p
    np.testing.assert_allclose(evolve(gen, p0, t).p, ref, atol=1e-11)


def test_evolve_lvm_truncated_limit():
    spec = builtin_model("lvm_truncated")
    lat = enumerate_states(spec, None, ((1, 1), 2))
    gen = build_generator(spec, lat)
    m = moments(evolve(gen, DiagonalDistribution.point(lat, [2, 0]), 20.0))
    assert m.mean[0] == pytest.approx(0.0, abs=1e-12)
    assert m.mean[1] == pytest.approx(2.0, abs=1e-12)


def test_evolve_semigroup_and_mass():
    gen, _ = solve("lvm", [1.0, 1.2], caps=[15, 15])
    p0 = DiagonalDistribution.point(gen.lattice, [4, 1])
    whole = evolve(gen, p0, 1.0)
    split = evolve(gen, evolve(gen, p0, 0.35), 0.65)
    assert tv_between(whole, split) <= 1e-9
    assert abs(whole.p.sum() - 1) <= 1e-12
    assert whole.p.min() >= 0


def test_evolve_conserves_manifold_total():
    spec = builtin_model("cannibal", [0.8, 1.3])
    gen = build_generator(spec, enumerate_states(spec, [6, 6]))
    p0 = DiagonalDistribution.point(gen.lattice, [2, 3])
    p = evolve(gen, p0, 3.0)
    totals = gen.lattice.states.sum(axis=1)
    assert p.p[totals != 5].sum() == 0.0


def test_moments_point_mass():
    lat = enumerate_states(2, [6, 6])
    m = moments(DiagonalDistribution.point(lat, [3, 5]))
    assert m.mean.tolist() == [3, 5]
    assert m.variance.tolist() == [0, 0]
    assert m.second[0, 1] == 15


def test_moments_zero_mean_rel_fluct_undefined():
    lat = enumerate_states(1, [3])
    m = moments(DiagonalDistribution.point(lat, [0]))
    assert math.isnan(m.rel_fluct[0])
    assert json.loads(m.to_json())["rel_fluct"] == [None]


def test_oscillator_small_mu_moments():
    _, dist = solve("oscillator", [0.01])
    m = moments(dist)
    assert m.mean[0] == pytest.approx(1 / 3, abs=0.01)
    assert m.variance[0] == pytest.approx(2 / 9, abs=0.01)


def test_lvm_special_case_moments():
    _, dist = solve("lvm", [math.sqrt(2), math.sqrt(3)], caps=[80, 80])
    m = moments(dist)
    np.testing.assert_allclose(m.mean, [2, 2], atol=1e-6)
    assert m.rel_fluct[0] == pytest.approx(math.sqrt(1.5), abs=1e-6)


def test_gf_normalization_and_vacuum():
    _, dist = solve("lvm", [1, 1.2], caps=[20, 20])
    assert gf_eval(dist, [1, 1]) == pytest.approx(1, abs=1e-14)
    vac = DiagonalDistribution.point(enumerate_states(1, [4]), [0])
    for u in (-1.0, 0.0, 0.3, 2.0):
        assert gf_eval(vac, [u]) == 1.0


def test_gf_small_mu_limit():
    _, dist = solve("oscillator", [1e-3])
    for u in (0.0, 0.5, 1.0):
        assert gf_eval(dist, [u]) == pytest.approx((2 + u) / 3, abs=0.01)


def test_gf_derivatives_are_moments():
    _, dist = solve("oscillator", [2.0])
    g, d1, d2 = gf_derivatives(dist, 1.0)
    m = moments(dist)
    assert g == pytest.approx(1)
    assert d1 == pytest.approx(m.mean[0], rel=1e-13)
    assert d2 == pytest.approx(m.second[0, 0] - m.mean[0], rel=1e-13)


def test_gf_ode_residual():
    _, dist = solve("oscillator", [1])
    assert gf_ode_residual(dist, 1.0, [0.0, 0.5, 1.0]) <= 1e-8
    rng = np.random.default_rng(3)
    noise = DiagonalDistribution(dist.lattice, rng.dirichlet(np.ones(dist.lattice.size)))
    assert gf_ode_residual(noise, 1.0, [0.0, 0.5, 1.0]) > 1e-4
    vac = DiagonalDistribution.point(enumerate_states(1, [5]), [0])
    assert gf_ode_residual(vac, 0.0, [0.0, 0.5, 1.0]) == 0.0


def test_moment_identities_on_lvm_solve():
    _, dist = solve("lvm", [math.sqrt(2), math.sqrt(3)], caps=[80, 80])
    r = moment_identity_residuals(dist, math.sqrt(2), math.sqrt(3))
    assert abs(r.r_a) <= 1e-6 and abs(r.r_b) <= 1e-6
    assert r.ratio == pytest.approx(r.ratio_expected, rel=1e-6)


def test_moment_identities_on_product_geometric():
    lam1_sq = 0.8
    kappa = lam1_sq / (1 + lam1_sq)
    lat = enumerate_states(2, [200, 200])
    p = (1 - kappa) ** 2 * kappa ** lat.states.sum(axis=1).astype(float)
    dist = DiagonalDistribution(lat, p / p.sum())
    r = moment_identity_residuals(dist, math.sqrt(lam1_sq), math.sqrt(1 + lam1_sq))
    assert abs(r.r_a) <= 1e-10 and abs(r.r_b) <= 1e-10


def test_moment_identities_point_mass():
    lat = enumerate_states(2, [2, 2])
    r = moment_identity_residuals(DiagonalDistribution.point(lat, [0, 0]), 0.0, 1.3)
    assert r.r_a == 0.0 and r.r_b == 0.0


def test_distribution_validation():
    lat = enumerate_states(1, [2])
    with pytest.raises(SolverError):
        DiagonalDistribution(lat, np.array([0.5, 0.6, -0.1]))
    with pytest.raises(SolverError):
        DiagonalDistribution(lat, np.array([0.5, 0.6, 0.1]))
    d = DiagonalDistribution(lat, np.array([0.5, 0.5 + 1e-13, -1e-13]))
    assert d.p.min() == 0.0 and d.p.sum() == pytest.approx(1, abs=1e-15)


def test_csv_export():
    _, dist = solve("cannibal", [1, 1], total=1)
    assert dist.to_csv() == "# schema_version=1\nn1,n2,probability\n0,1,0.5\n1,0,0.5\n"


def test_moments_json_keys():
    _, dist = solve("cannibal", [1, 1], total=2)
    data = json.loads(moments(dist).to_json())
    assert set(data) == {"schema_version", "mean", "second", "variance", "rel_fluct"}
    assert data["mean"] == pytest.approx([1, 1])


def test_boundary_mass_reported():
    _, tight = solve("oscillator", [20], caps=[15])
    _, roomy = solve("oscillator", [20])
    assert tight.boundary_mass() > 1e-3
    assert roomy.boundary_mass() < 1e-12


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 30), a=st.floats(0.05, 5), b=st.floats(0.05, 5))
def test_cannibal_detailed_balance_property(n, a, b):
    gen, dist = solve("cannibal", cannibal_lambdas(a, b), total=n)
    assert detailed_balance_residual(gen, dist) <= 1e-10
    w = (a / b) ** np.arange(n + 1)
    np.testing.assert_allclose(dist.p, w / w.sum(), rtol=1e-9, atol=1e-14)


@pytest.mark.parametrize("name, params, caps", [("lvm", [1.0, 1.3], [12, 12]),
                                                ("oscillator", [3.0], None)])
def test_gth_and_lu_paths_agree(monkeypatch, name, params, caps):
    import occnum.solver as solver_mod

    gen, small = solve(name, params, caps)
    monkeypatch.setattr(solver_mod, "GTH_MAX", 0)
    big = stationary(gen)
    np.testing.assert_allclose(small.p, big.p, atol=1e-13)
