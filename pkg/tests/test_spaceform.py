import numpy as np
import pytest

from gaussimage import jet as J
from gaussimage.spaceform import (
    AmbientModel,
    OffModelError,
    ambient_inner,
    check_on_model,
    constraint_residual,
    spaceform_curvature,
    spaceform_curvature_tensor,
    tangent_project,
)


def test_model_dimensions_and_signatures():
    assert AmbientModel.euclidean(3).chart_dim == 3
    assert AmbientModel.sphere(3).chart_dim == 4
    h = AmbientModel.hyperbolic(3)
    assert h.chart_dim == 4
    assert h.signature.tolist() == [-1, 1, 1, 1]


@pytest.mark.parametrize(
    "kind,k", [("euclidean", 1.0), ("sphere", 0.0), ("sphere", -1.0), ("hyperbolic", 0.0), ("torus", 0.0)]
)
def test_invalid_models_rejected(kind, k):
    with pytest.raises(ValueError):
        AmbientModel(kind, k, 3)


def test_minkowski_inner_product():
    h = AmbientModel.hyperbolic(2)
    assert ambient_inner(h, [2.0, 1.0, 1.0], [2.0, 1.0, 1.0]) == -2.0


def test_constraint_residuals():
    s = AmbientModel.sphere(2, k=4.0)
    assert constraint_residual(s, [0.5, 0.0, 0.0]) == pytest.approx(0.0)
    h = AmbientModel.hyperbolic(2)
    x = np.array([np.cosh(0.7), np.sinh(0.7), 0.0])
    assert constraint_residual(h, x) < 1e-15
    check_on_model(h, x)
    with pytest.raises(OffModelError, match="lower sheet"):
        check_on_model(h, -x)
    with pytest.raises(OffModelError):
        check_on_model(AmbientModel.sphere(2), [1.0, 1.0, 0.0])


def test_tangent_projection():
    s = AmbientModel.sphere(2)
    x = np.array([0.0, 0.0, 1.0])
    np.testing.assert_allclose(tangent_project(s, x, [1.0, 2.0, 3.0]), [1.0, 2.0, 0.0])
    h = AmbientModel.hyperbolic(2)
    x = np.array([np.cosh(0.3), np.sinh(0.3), 0.0])
    v = tangent_project(h, x, [1.0, 0.5, 2.0])
    assert abs(ambient_inner(h, v, x)) < 1e-14


def test_curvature_of_space_forms():
    s = AmbientModel.sphere(2, k=2.0)
    g = np.eye(2)
    R = spaceform_curvature(s, g, [1, 0], [0, 1], [0, 1])
    np.testing.assert_allclose(R, [2.0, 0.0])  # k(<Y,Z>X - <X,Z>Y)
    S = spaceform_curvature_tensor(s, g)
    assert S[0, 1, 1, 0] == pytest.approx(2.0)  # sectional curvature k
    assert S[0, 1, 0, 1] == pytest.approx(-2.0)
    assert np.all(spaceform_curvature_tensor(AmbientModel.euclidean(3), np.eye(2)) == 0)


def test_inner_of_jets_is_outer_over_leading_axes():
    e = AmbientModel.euclidean(3)
    base = [0.2, 0.3]
    v = J.stack([J.Jet.variable(0, base, 2), J.Jet.variable(1, base, 2), J.Jet.constant(1.0, 2, 2)])
    w = J.stack([v, v * 2.0])
    out = ambient_inner(e, w, v)
    assert out.shape == (2,)
    assert out.value[1] == pytest.approx(2 * (0.04 + 0.09 + 1))
