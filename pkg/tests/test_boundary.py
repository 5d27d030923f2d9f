import json

import numpy as np
import pytest

from conftest import sphere
from lamehardy import boundary as bd
from lamehardy import clifford as cl
from lamehardy.errors import ConditioningError, DegeneracyError, DomainError, NearSingularError
from lamehardy.harness import hardy_errors, involution_errors, recovery_errors, reproduction_errors, smooth_jets
from lamehardy.poly import LameParams, PolyField, make_test_solution, random_poly

P = LameParams(1.0, 1.0)
P2 = LameParams(2.0, 0.5)
INNER = np.array([[0.1, 0.2, -0.3], [0.0, 0.0, 0.0], [-0.5, 0.3, 0.2]])
OUTER = np.array([[1.5, 0.2, 0.0], [0.0, -2.0, 0.3]])


def test_jet_json_round_trip():
    mesh = sphere(1)
    jet = bd.LipschitzJet.from_field(random_poly(3, 2, 4), mesh, alpha=0.5)
    again = bd.LipschitzJet.from_json(json.loads(json.dumps(jet.to_json())))
    np.testing.assert_array_equal(again.f0, jet.f0)
    np.testing.assert_array_equal(again.grad, jet.grad)
    assert again.alpha == 0.5


def test_jet_validation():
    mesh = sphere(1)
    with pytest.raises(DomainError):
        bd.LipschitzJet(mesh, np.zeros((3, 8)), np.zeros((3, 3, 8)))
    with pytest.raises(DomainError):
        bd.LipschitzJet.zeros(mesh, alpha=1.5)
    with pytest.raises(DomainError):
        bd.LipschitzJet.from_json({"m": 3})


@pytest.mark.parametrize("level", [2, 3])
@pytest.mark.parametrize("kind", ["constant", "coordinate", "monogenic_linear", "universal_quadratic"])
def test_cauchy_integral_reproduces_solutions(level, kind):
    rel, ext = reproduction_errors(sphere(level), P2, kind, INNER, OUTER)
    assert rel < 2e-2
    assert ext < 2e-2


def test_reproduction_improves_with_level():
    errs = [reproduction_errors(sphere(k), P, "universal_quadratic", INNER, OUTER)[0] for k in (2, 3, 4)]
    assert errs[0] > errs[1] > errs[2]


def test_near_singular_guard():
    mesh = sphere(2)
    jet = bd.LipschitzJet.from_field(make_test_solution("coordinate", 3), mesh)
    with pytest.raises(NearSingularError):
        bd.lame_cauchy_integral(jet, P, mesh.nodes[5] * (1 + 1e-3))
    with pytest.raises(DomainError):
        bd.lame_cauchy_integral(jet, P, np.zeros(4))


def test_half_value_is_one_half():
    for level in (2, 3):
        hv = bd.half_value(sphere(level))
        hv[:, 0] -= 0.5
        assert np.abs(hv).max() < 5e-2


def test_constant_is_fixed_by_the_singular_operator():
    mesh = sphere(2)
    c = np.arange(1.0, 9.0)
    jet = bd.LipschitzJet(mesh, np.tile(c, (mesh.size, 1)), np.zeros((mesh.size, 3, 8)))
    S = bd.singular_SL(jet, P).jet
    np.testing.assert_allclose(S.f0, jet.f0, atol=5e-2 * np.abs(c).max())
    np.testing.assert_allclose(S.grad, 0.0, atol=5e-2 * np.abs(c).max())


@pytest.mark.parametrize("kind", ["coordinate", "monogenic_linear"])
def test_linear_solutions_are_fixed_points(kind):
    mesh = sphere(3)
    jet = bd.LipschitzJet.from_field(make_test_solution(kind, 3), mesh)
    S = bd.singular_SL(jet, P).jet
    assert (S - jet).norm() / jet.norm() < 2e-2


def test_principal_value_trace_identity():
    # a sum S^j e_j + b sum e_j S^j equals 2 p.v. int E0 n (M f), compared as jets at level 4
    mesh = sphere(4)
    jet = bd.LipschitzJet.from_field(random_poly(3, 2, 12), mesh)
    S = bd.singular_SL(jet, P2).jet
    Mt = bd.M_traces(jet, P2)
    diff = bd.M_traces(S, P2) - 2 * bd.cauchy_principal_value(mesh, Mt)
    w = mesh.weights
    rel = np.sqrt(w @ np.sum(diff ** 2, axis=1)) / np.sqrt(w @ np.sum(Mt ** 2, axis=1))
    assert rel <= 5e-2


@pytest.mark.parametrize("seed", [21, 3])
def test_intertwining_with_the_monogenic_transform(seed):
    # M applied to the Cauchy integral equals the monogenic Cauchy transform of the M trace
    mesh = sphere(3)
    p = P2
    a, b = float(p.a), float(p.b)
    jet = bd.LipschitzJet.from_field(random_poly(3, 2, seed), mesh)
    h = 1e-4
    for x in (np.array([0.1, -0.2, 0.25]), np.array([0.0, 0.5, -0.4])):
        grads = []
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            vals = bd.lame_cauchy_integral(jet, p, np.stack([x + e, x - e]))
            grads.append((vals[0] - vals[1]) / (2 * h))
        Mv = sum(a * cl.right_basis(g, j + 1, 3) + b * cl.left_basis(j + 1, g, 3) for j, g in enumerate(grads))
        ref = bd.cauchy_monogenic(mesh, bd.M_traces(jet, p), x).coeffs
        assert np.linalg.norm(Mv - ref) / np.linalg.norm(ref) <= 1e-2


def test_projection_algebra():
    mesh = sphere(3)
    jet = smooth_jets(mesh, 3, 2)[0]
    plus, minus = bd.hardy_projections(jet, P)
    res, _ = bd.involution_residual([jet], P)
    bound = 2 * res[0] * jet.norm() + 1e-12
    pp = bd.hardy_projections(plus, P)[0]
    mm = bd.hardy_projections(minus, P)[1]
    pm = bd.hardy_projections(minus, P)[0]
    assert (pp - plus).norm() <= bound
    assert (mm - minus).norm() <= bound
    assert pm.norm() <= bound
    assert (plus + minus - jet).norm() < 1e-12 * jet.norm()


def test_involution_small_and_shrinking():
    e2 = max(involution_errors(sphere(2), P, 5, count=3))
    e3 = max(involution_errors(sphere(3), P, 5, count=3))
    assert e3 < 1e-2 and e3 < e2


def test_hardy_catalogue_sides():
    for name, (frac, _, _) in hardy_errors(sphere(3), P2, 1).items():
        assert frac < 2e-2, name


def test_uncorrected_operator_still_converges():
    mesh2, mesh3 = sphere(2), sphere(3)
    errs = []
    for mesh in (mesh2, mesh3):
        jet = bd.LipschitzJet.from_field(make_test_solution("universal_quadratic", 3), mesh)
        f0, g = bd.singular_SL_batch([jet], P, corrected=False)[0]
        errs.append((bd.LipschitzJet(mesh, f0, g) - jet).norm() / jet.norm())
    assert errs[1] < errs[0] < 0.5


def test_four_dimensional_path():
    mesh = sphere(1, m=4)
    jet = bd.LipschitzJet.from_field(make_test_solution("coordinate", 4), mesh)
    S = bd.singular_SL(jet, P).jet
    assert S.f0.shape == (mesh.size, 16)
    assert (S - jet).norm() / jet.norm() < 0.2
    rel, ext = reproduction_errors(mesh, P, "monogenic_linear",
                                   np.array([[0.1, 0.0, -0.2, 0.1]]), np.array([[2.0, 0.0, 0.0, 0.5]]))
    assert rel < 5e-2 and ext < 5e-2


def test_worker_count_does_not_change_results(monkeypatch):
    mesh = sphere(3)
    jet = smooth_jets(mesh, 2, 2)[0]
    out = {}
    for threads in ("1", "4"):
        monkeypatch.setenv("LAMEHARDY_THREADS", threads)
        assert bd.worker_count() == int(threads)
        f0, g = bd.singular_SL_batch([jet], P)[0]
        out[threads] = (f0, g, bd.lame_cauchy_integral(jet, P, INNER))
    for a, b in zip(out["1"], out["4"]):
        np.testing.assert_array_equal(a, b)


def test_recovery_of_planted_gradients():
    errs = recovery_errors(sphere(3), P2, 7)
    assert errs["coordinate"] < 1e-3
    assert errs["monogenic_linear"] < 1e-3
    assert errs["universal_quadratic"] < 5e-2
    assert errs["random_poly"] < 5e-2


def test_recovery_errors():
    mesh = sphere(1)
    z = np.zeros((mesh.size, 8))
    for c1, c2 in ((1.0, 1.0), (2.0, -2.0)):
        with pytest.raises(DegeneracyError):
            bd.recover_jet(z, z, c1, c2, mesh)
    with pytest.raises(ConditioningError) as info:
        bd.recover_jet(z, z, 1.0, 2.0, mesh, cond_limit=1.0)
    assert info.value.node == 0
    with pytest.raises(DomainError):
        bd.recover_jet(z[:3], z, 1.0, 2.0, mesh)


def test_whitney_constant_detects_inconsistent_gradients():
    mesh = sphere(3)
    jet = bd.LipschitzJet.from_field(random_poly(3, 2, 8), mesh)
    good = bd.whitney_constant(jet)
    rng = np.random.default_rng(0)
    bad = bd.LipschitzJet(mesh, jet.f0, jet.grad + rng.standard_normal(jet.grad.shape))
    assert good < 50
    assert bd.whitney_constant(bad) > 5 * good


def test_whitney_residual_vanishes_for_linear_fields():
    mesh = sphere(2)
    jet = bd.LipschitzJet.from_field(PolyField.position(3), mesh)
    pairs = bd.sample_pairs(mesh, 50, 0.1, 1.0)
    _, res = bd.whitney_residuals(jet, pairs)
    assert len(pairs) == 50 and res.max() < 1e-12
