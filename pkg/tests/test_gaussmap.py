import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaussimage import gaussmap as G
from gaussimage import harness as H
from gaussimage import immersion as I
from gaussimage import intrinsic as Q
from gaussimage import pipeline as PL


def state(name, u):
    sc = H.load_scenario(name)
    return sc, PL.compute_state(sc.coords, sc.model, u)


def test_obata_operator_sphere():
    _, st_ = state("round_sphere_r2", [np.pi / 3, np.pi / 4])
    np.testing.assert_allclose(st_.obata.W.value, 0.25 * np.eye(2), atol=1e-14)
    np.testing.assert_allclose(st_.obata.III.value, 0.25 * st_.shape.g.value, atol=1e-14)
    V = st_.obata.V
    np.testing.assert_allclose(V.T @ st_.obata.III.value @ V, np.eye(2), atol=1e-10)


def test_obata_operator_clifford():
    _, st_ = state("clifford_torus", [0.4, 1.1])
    np.testing.assert_allclose(st_.obata.W.value, np.eye(2), atol=1e-13)
    np.testing.assert_allclose(st_.obata.III.value, st_.shape.g.value, atol=1e-13)


def test_cylinder_regularity_error():
    sc = H.load_scenario("cylinder")
    geom = I.evaluate_geometry(sc.coords, sc.model, [0.3, 0.2])
    with pytest.raises(G.RegularityError, match="smallest eigenvalue") as err:
        G.obata(I.shape_operators(geom))
    assert err.value.w_min == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("name", ["round_sphere_r2", "clifford_torus", "torus_of_revolution", "sphere_in_s3"])
def test_obata_identity(name):
    sc, st_ = state(name, H.load_scenario(name).sample_points()[6])
    ric, _ = Q.ricci_scalar(st_.riemann_I)
    assert G.obata_identity_residual(st_.obata, st_.shape, ric, sc.model.k) <= 1e-12


def test_obata_identity_sphere_terms():
    sc, st_ = state("round_sphere_r2", [1.0, 0.2])
    ric, _ = Q.ricci_scalar(st_.riemann_I)
    t = G.obata_identity_terms(st_.obata, st_.shape, ric, 0.0)
    np.testing.assert_allclose(np.abs(t["A_H"]), 0.5 * np.eye(2), atol=1e-13)
    np.testing.assert_allclose(t["Ric_op"], 0.25 * np.eye(2), atol=1e-13)


@pytest.mark.parametrize("name,u", [("round_sphere_r2", [1.0, 0.5]), ("helix", [0.7]), ("clifford_torus", [0.1, 0.2])])
def test_connection_difference_vanishes(name, u):
    _, st_ = state(name, u)
    assert np.max(np.abs(st_.conn.T)) <= 1e-13


@pytest.mark.parametrize("name", ["torus_of_revolution", "ellipse_product_r4", "rotation_surface_h3", "rotation_hypersurface_r4"])
def test_connection_difference_matches_christoffel_difference(name):
    sc = H.load_scenario(name)
    for u in sc.sample_points()[::4]:
        st_ = PL.compute_state(sc.coords, sc.model, u)
        oracle = Q.christoffel(st_.obata.III).value - st_.shape.gamma.value
        scale = max(1.0, np.max(np.abs(oracle)))
        np.testing.assert_allclose(st_.conn.T, oracle, atol=1e-7 * scale)
        assert st_.conn.symmetry_defect() <= 1e-10 * scale
        d = I.principal_decomposition(st_.shape)
        if not d.ambiguous:
            Tp = G.connection_difference_principal(d, st_.shape, st_.obata).T
            np.testing.assert_allclose(Tp, st_.conn.T, atol=1e-7 * scale)


def test_principal_path_umbilic_single_cluster():
    _, st_ = state("sphere_in_s3", [1.0, 0.5])
    d = I.principal_decomposition(st_.shape)
    assert d.s == 1
    assert np.max(np.abs(G.connection_difference_principal(d, st_.shape, st_.obata).T)) <= 1e-12


def test_principal_path_refuses_ambiguous_clusters():
    _, st_ = state("torus_of_revolution", [0.3, 0.4])
    d = I.principal_decomposition(st_.shape)
    d.ambiguous = True
    with pytest.raises(G.ClusterAmbiguityError):
        G.connection_difference_principal(d, st_.shape, st_.obata)


def test_kn_scalar_example():
    g = np.eye(2)
    S = G.generalized_kn(g, g, None)
    assert S[0, 1, 0, 1] == pytest.approx(1.0)
    assert S[0, 0, 1, 1] == pytest.approx(0.0)
    w = np.array([0.6, 0.8])
    hv = np.einsum("ab,e->abe", g, w)
    np.testing.assert_allclose(G.generalized_kn(hv, hv, np.eye(2)), S, atol=1e-15)


def test_kn_dimension_mismatch():
    with pytest.raises(ValueError):
        G.generalized_kn(np.zeros((2, 2, 3)), np.zeros((2, 2, 2)), np.eye(3))


def sym_forms(n, m):
    def build(raw):
        return 0.5 * (raw + raw.transpose(1, 0, 2))

    return arrays(float, (n, n, m), elements=st.floats(-2, 2, allow_nan=False)).map(build)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_kn_bilinear_and_algebraic_curvature(data):
    n, m = data.draw(st.integers(1, 3)), data.draw(st.integers(1, 3))
    h, k, l = (data.draw(sym_forms(n, m)) for _ in range(3))
    raw = data.draw(arrays(float, (m, m), elements=st.floats(-1, 1, allow_nan=False)))
    inner = raw @ raw.T + np.eye(m)
    a = data.draw(st.floats(-3, 3, allow_nan=False))
    lhs = G.generalized_kn(h + a * l, k, inner)
    rhs = G.generalized_kn(h, k, inner) + a * G.generalized_kn(l, k, inner)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * max(1.0, np.max(np.abs(rhs))))
    S = G.generalized_kn(h, h, inner)
    defects = Q.Curv4(S, np.eye(n)).symmetry_defects()
    assert max(defects.values()) <= 1e-12 * max(1.0, np.max(np.abs(S)))


def test_aux_tensors_vanish_on_umbilic_and_flat():
    for name, u in [("round_sphere_r2", [1.0, 0.5]), ("clifford_torus", [0.2, 0.3])]:
        _, st_ = state(name, u)
        assert np.max(np.abs(st_.aux.P)) <= 1e-12
    _, st_ = state("product_torus_r4", [0.2, 0.3])
    assert np.max(np.abs(st_.aux.L)) == 0.0


def test_inverse_square_root():
    _, st_ = state("torus_of_revolution", [0.3, 0.4])
    R = st_.aux.W_inv_sqrt
    np.testing.assert_allclose(R @ R @ st_.obata.W.value, np.eye(2), atol=1e-12)
    gR = st_.shape.g.value @ R
    np.testing.assert_allclose(gR, gR.T, atol=1e-12)


@pytest.mark.parametrize("name", ["torus_of_revolution", "sphere_in_s3", "rotation_surface_h3", "ellipse_product_r4", "rotation_hypersurface_r4"])
def test_curvature_routes_agree_with_oracle(name):
    sc = H.load_scenario(name)
    for u in sc.sample_points()[::5]:
        st_ = PL.compute_state(sc.coords, sc.model, u)
        oracle = Q.riemann(st_.obata.III, "III")
        scale = max(oracle.max_abs(), 1e-6)
        for route, c in st_.curvature.items():
            assert np.max(np.abs(c.components - oracle.components)) <= 1e-8 * scale, route
            assert max(c.symmetry_defects().values()) <= 1e-9 * scale, route


def test_sphere_commutator_and_literal_readings():
    sc = H.load_scenario("round_sphere_r2")
    u = [np.pi / 3, np.pi / 4]
    st_ = PL.compute_state(sc.coords, sc.model, u)
    R = G.curvature_operator(st_.riemann_I)
    R3 = st_.curvature["theorem"].raised().transpose(0, 1, 3, 2)
    np.testing.assert_allclose(R3, R, atol=1e-8 * np.max(np.abs(R)))
    lit = PL.compute_state(sc.coords, sc.model, u, literal_p=True)
    R3_lit = lit.curvature["theorem"].raised().transpose(0, 1, 3, 2)
    np.testing.assert_allclose(R3_lit, 2 * R, atol=1e-8 * np.max(np.abs(R)))


def test_unknown_route():
    _, st_ = state("round_sphere_r2", [1.0, 0.5])
    with pytest.raises(ValueError):
        G.gauss_image_curvature("bogus", st_.shape, st_.obata, st_.conn, st_.aux, st_.riemann_I)


def test_scalar_formula_terms():
    sc, st_ = state("clifford_torus", [0.4, 0.5])
    t = G.gauss_image_scalar_formula(sc.model, st_.shape, st_.obata, st_.conn, st_.aux)
    assert t["k(n-1)sigma"] == pytest.approx(2.0)
    assert t["tr_III(A_H)"] == pytest.approx(0.0, abs=1e-12)
    assert t["total"] == pytest.approx(0.0, abs=1e-8)
    sc, st_ = state("round_sphere_r2", [1.0, 0.5])
    t = G.gauss_image_scalar_formula(sc.model, st_.shape, st_.obata, st_.conn, st_.aux)
    assert abs(t["tr_III(A_H)"]) == pytest.approx(4.0)
    assert t["total"] == pytest.approx(2.0, abs=1e-7)


def test_gauss_equation_examples():
    for name, u in [("round_sphere_r2", [1.0, 0.5]), ("clifford_torus", [0.3, 0.1]), ("equidistant_surface_h3", [0.2, -0.4])]:
        sc, st_ = state(name, u)
        assert G.gauss_equation_residual(st_.shape, st_.riemann_I, sc.model) <= 1e-12
