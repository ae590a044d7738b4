import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gaussflow.errors import DimensionError, DomainError, StencilError
from gaussflow.graphgeom import (GraphPatch, ShapeTensor, first_derivatives, gauss_plane, induced_metric, interior_mask,
                                 jacobian, lambda_profile, laplace_beltrami, load_patch, mean_curvature, save_patch,
                                 shape_tensor)
from gaussflow.grassmann import jordan_spectrum, reference_plane, slope_v
from gaussflow.presets import (affine_patch, build_patch, circle_arc_patch, product_sine_patch, sine_cosine_patch,
                               sine_patch)


def test_patch_validation():
    with pytest.raises(DimensionError):
        GraphPatch(np.zeros((4, 2)), 0.0, 1.0)
    with pytest.raises(DimensionError):
        GraphPatch(np.zeros((8, 8, 1)), 0.0, 1.0)  # m < n
    with pytest.raises(DomainError):
        GraphPatch(np.zeros((8, 2)), 1.0, 0.0)
    with pytest.raises(DomainError):
        GraphPatch(np.zeros((8, 2)), 0.0, 1.0, boundary='neumann')
    with pytest.raises(DomainError):
        build_patch({'preset': 'torus'})


def test_spacing_per_boundary():
    periodic = GraphPatch(np.zeros((16, 1)), 0.0, 2 * np.pi, 'periodic')
    fixed = GraphPatch(np.zeros((17, 1)), -1.0, 1.0)
    assert periodic.spacing[0] == pytest.approx(2 * np.pi / 16)
    assert fixed.spacing[0] == pytest.approx(2 / 16)
    assert fixed.axes()[0][-1] == pytest.approx(1.0)


def test_affine_patch_is_flat():
    A = np.array([[0.5, 0.2], [-0.1, 0.3]])
    patch = affine_patch(A, b=[0.1, -0.2], points=9)
    geo = patch.geometry()
    expected_v = np.sqrt(np.linalg.det(np.eye(2) + A.T @ A))
    assert np.allclose(geo.v, expected_v, atol=1e-12)
    assert np.max(geo.B2) < 1e-20
    assert np.max(np.abs(geo.H)) < 1e-10
    assert np.allclose(jacobian(patch, (4, 4)), A, atol=1e-12)


def test_gauss_plane_matches_slope_field():
    patch = product_sine_patch(2, 3, 0.8, points=16)
    node = (3, 5)
    P = gauss_plane(patch, node)
    P0 = reference_plane(2, 3)
    assert slope_v(P, P0) == pytest.approx(patch.geometry().v[node], rel=1e-12)
    lambdas = np.sort(jordan_spectrum(P, P0).lambdas)
    assert np.allclose(lambdas, np.sort(lambda_profile(patch, node)), rtol=1e-9, atol=1e-12)


def test_circle_arc_curvature():
    patch = circle_arc_patch(2.0, m=2, half_width=1.0, points=129)
    geo = patch.geometry()
    mask = interior_mask(patch, 1)
    assert np.allclose(geo.B2[mask], 0.25, rtol=1e-3)
    assert np.allclose(np.linalg.norm(geo.H, axis=-1)[mask], 0.5, rtol=1e-3)


def test_sine_curve_curvature_converges():
    errors = []
    for points in [64, 128]:
        patch = sine_patch(1, 1, 0.7, points=points)
        x = patch.coordinates()[..., 0]
        kappa2 = (0.7 * np.sin(x)) ** 2 / (1 + (0.7 * np.cos(x)) ** 2) ** 3
        errors.append(np.max(np.abs(patch.geometry().B2 - kappa2)))
    assert errors[1] < errors[0] / 3


def test_frame_and_coordinate_curvature_agree():
    patch = product_sine_patch(2, 2, 1.1, points=24)
    geo = patch.geometry()
    assert np.allclose(geo.B2, geo.B2_coordinate, rtol=1e-9, atol=1e-12)
    aligned = patch.geometry(align=True)
    assert np.allclose(aligned.B2, geo.B2, rtol=1e-9, atol=1e-12)


def test_frames_are_orthonormal():
    patch = sine_cosine_patch(2, 3, 0.5, points=16)
    geo = patch.geometry()
    frame = np.concatenate([geo.tangent, geo.normal], axis=-1)
    gram = np.einsum('...ai,...aj->...ij', frame, frame)
    assert np.allclose(gram, np.eye(5), atol=1e-12)
    assert np.allclose(np.einsum('...ai,...a->...i', geo.tangent, geo.H), 0.0, atol=1e-12)


def test_shape_tensor_at_node():
    patch = product_sine_patch(2, 2, 0.6, points=16)
    node = (2, 7)
    tensor = shape_tensor(patch, node)
    assert isinstance(tensor, ShapeTensor)
    assert tensor.norm2() == pytest.approx(patch.geometry().B2[node], rel=1e-10)
    assert np.linalg.norm(tensor.coordinates()) ** 2 == pytest.approx(tensor.norm2(), rel=1e-12)
    packed = ShapeTensor.from_coordinates(tensor.coordinates(), 2, 2)
    assert np.allclose(packed.h, tensor.h, atol=1e-14)
    # trace of the shape tensor is the mean curvature in the normal frame
    H = mean_curvature(patch, node)
    trace = np.trace(tensor.h, axis1=1, axis2=2)
    assert np.allclose(tensor.frame['normal'] @ trace, H, atol=1e-10)


def test_boundary_nodes_are_rejected():
    patch = circle_arc_patch(2.0, points=17)
    with pytest.raises(StencilError):
        gauss_plane(patch, (0, ))
    with pytest.raises(StencilError):
        mean_curvature(patch, (17, ))
    with pytest.raises(StencilError):
        jacobian(patch, (1, ), order=4)
    assert jacobian(patch, (2, ), order=4).shape == (2, 1)


def test_fourth_order_stencil_is_more_accurate():
    patch = sine_patch(1, 1, 1.0, points=32)
    x = patch.coordinates()[..., 0]
    exact = np.cos(x)
    second = np.max(np.abs(first_derivatives(patch.values, patch, order=2)[..., 0, 0] - exact))
    fourth = np.max(np.abs(first_derivatives(patch.values, patch, order=4)[..., 0, 0] - exact))
    assert fourth < second / 10
    with pytest.raises(DomainError):
        first_derivatives(patch.values, patch, order=3)


def test_laplacian_of_graph_components_is_mean_curvature():
    patch = sine_cosine_patch(2, 2, 0.3, points=64)
    geo = patch.geometry()
    n = patch.n
    for a in range(patch.m):
        lap = laplace_beltrami(patch, patch.values[..., a])
        assert np.max(np.abs(lap - geo.H[..., n + a])) < 5e-3


def test_interior_mask():
    patch = circle_arc_patch(2.0, points=17)
    assert np.count_nonzero(interior_mask(patch, 1)) == 15
    assert np.count_nonzero(interior_mask(patch, 2)) == 13
    assert np.count_nonzero(interior_mask(patch, 1, lower=-0.5, upper=0.5)) == 9
    periodic = sine_patch(1, 1, 0.5, points=16)
    assert np.all(interior_mask(periodic, 2))


def test_checkpoint_roundtrip(tmp_path):
    patch = sine_cosine_patch(2, 2, 0.3, points=16)
    save_patch(patch, tmp_path / 'patch.npz')
    loaded = load_patch(tmp_path / 'patch.npz')
    assert loaded.grid == patch.grid and loaded.boundary == 'periodic'
    assert np.array_equal(loaded.values, patch.values)
    assert np.array_equal(loaded.upper, patch.upper)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([(1, 1), (1, 3), (2, 2), (2, 3), (3, 4)]).flatmap(
    lambda dims: arrays(np.float64, (dims[1], dims[0]), elements=st.floats(-3.0, 3.0, allow_nan=False))))
def test_metric_eigenvalues_follow_singular_values(Du):
    sigma = np.linalg.svd(Du, compute_uv=False)
    g = induced_metric(Du)
    assert np.allclose(np.linalg.eigvalsh(g), np.sort(1 + sigma ** 2), rtol=1e-10, atol=1e-12)
    assert np.linalg.det(g) == pytest.approx(np.prod(1 + sigma ** 2), rel=1e-9)


def test_jacobian_error_drops_fourfold():
    errors = []
    for points in [16, 32, 64]:
        patch = sine_patch(1, 1, 1.0, points=points)
        h = patch.spacing[0]
        Du = jacobian(patch, (0, ))
        # central difference of sin at 0
        assert Du[0, 0] == pytest.approx(np.sin(h) / h, abs=1e-14)
        errors.append(abs(Du[0, 0] - 1.0))
    assert 3.8 < errors[0] / errors[1] < 4.2
    assert 3.8 < errors[1] / errors[2] < 4.2


def _exact_product_sine_tensor(amplitude, x):
    exact = np.zeros((2, 2, 2))
    for a in range(2):
        exact[a, a, a] = -amplitude * np.sin(x[a]) / (1 + (amplitude * np.cos(x[a])) ** 2) ** 1.5
    return exact


def test_shape_tensor_converges_at_second_order():
    amplitude = 0.6
    exact = _exact_product_sine_tensor(amplitude, [np.pi / 8, 3 * np.pi / 8])
    errors = []
    for points in [32, 64, 128]:
        patch = product_sine_patch(2, 2, amplitude, points=points)
        tensor = shape_tensor(patch, (points // 16, 3 * points // 16))
        errors.append(np.max(np.abs(tensor.h - exact)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders > 1.7) & (orders < 2.3)), orders


def test_relabelling_axes_transposes_curvature():
    patch = sine_cosine_patch(2, 2, 0.3, points=16)
    swapped = patch.with_values(np.transpose(patch.values, (1, 0, 2)))
    geo, moved = patch.geometry(), swapped.geometry()
    assert np.allclose(moved.B2, geo.B2.T, rtol=1e-9, atol=1e-12)
    assert np.allclose(np.linalg.norm(moved.H, axis=-1), np.linalg.norm(geo.H, axis=-1).T, rtol=1e-9, atol=1e-12)
    assert np.allclose(moved.v, geo.v.T, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 2 * np.pi, allow_nan=False))
def test_normal_rotation_preserves_curvature(phi):
    patch = product_sine_patch(2, 2, 0.5, points=16)
    rotation = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    rotated = patch.with_values(patch.values @ rotation.T)
    geo, moved = patch.geometry(), rotated.geometry()
    assert np.allclose(moved.B2, geo.B2, rtol=1e-9, atol=1e-12)
    assert np.allclose(np.linalg.norm(moved.H, axis=-1), np.linalg.norm(geo.H, axis=-1), rtol=1e-9, atol=1e-12)
    assert np.allclose(moved.v, geo.v, rtol=1e-12)
