from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflab.curvature import (arc_derivative, cotan_laplacian, curvature_field, effective_radius,
                              gradient_pinch_bound, gradient_pinch_check, kato_check, mixed_voronoi_areas,
                              scalar_laplacian, tensor_norm_identity_check, vertex_normals)
from mcflab.geometry import build_perturbed_sphere, build_sphere, scale, total_area
from mcflab.mcflab_common import Backend, CurvatureError, traceless_norm_sq


@pytest.mark.parametrize("n, radius", [(2, 1.0), (2, 0.5), (3, 2.0), (4, 1.0)])
def test_profile_sphere_is_umbilic(n: int, radius: float) -> None:
    field = curvature_field(build_sphere(Backend.AXI, n, radius, 97), 2)
    np.testing.assert_allclose(field.mean_curvature, n / radius, rtol=1e-9)
    np.testing.assert_allclose(field.norm_A_sq, n / radius ** 2, rtol=1e-9)
    assert np.max(field.norm_tracelessA_sq) < 1e-12 * n / radius ** 2


def test_profile_normal_points_outward(perturbed_profile) -> None:
    field = curvature_field(perturbed_profile, 0)
    radial = perturbed_profile.nodes / np.linalg.norm(perturbed_profile.nodes, axis=1)[:, None]
    assert np.all(np.einsum("ij,ij->i", field.normal, radial) > 0.5)


def test_mesh_sphere_mean_curvature(mesh_sphere) -> None:
    field = curvature_field(mesh_sphere, 1)
    assert np.median(field.mean_curvature) == pytest.approx(2.0, rel=1e-2)
    assert np.max(np.abs(field.mean_curvature - 2.0)) < 0.3
    normals = vertex_normals(mesh_sphere)
    assert np.all(np.einsum("ij,ij->i", normals, mesh_sphere.vertices) > 0.99)


def test_mesh_traceless_part_is_small_on_a_sphere(mesh_sphere) -> None:
    field = curvature_field(mesh_sphere, 0)
    assert np.median(field.norm_tracelessA_sq) < 0.05 * np.median(field.norm_A_sq)


def test_mixed_areas_cover_the_mesh(mesh_sphere) -> None:
    assert np.sum(mixed_voronoi_areas(mesh_sphere)) == pytest.approx(total_area(mesh_sphere), rel=1e-10)


def test_cotan_laplacian_annihilates_constants(mesh_sphere) -> None:
    residual = cotan_laplacian(mesh_sphere) @ np.ones(mesh_sphere.num_nodes)
    assert np.max(np.abs(residual)) < 1e-10


def test_profile_laplacian_of_constant_vanishes(perturbed_profile) -> None:
    values = np.full(perturbed_profile.num_nodes, 3.0)
    assert np.max(np.abs(scalar_laplacian(perturbed_profile, values))) < 1e-9


def test_arc_derivative_on_uniform_grid() -> None:
    s = np.linspace(0.0, np.pi, 201)
    np.testing.assert_allclose(arc_derivative(np.sin(s), s), np.cos(s), atol=1e-3)


def test_tensor_norm_identity(perturbed_profile, mesh_sphere) -> None:
    assert tensor_norm_identity_check(curvature_field(perturbed_profile, 2)) < 1e-12
    assert tensor_norm_identity_check(curvature_field(mesh_sphere, 1)) < 1e-12


def test_pairwise_traceless_formula() -> None:
    kappa = np.array([[1.0, 2.0, 4.0]])
    expected = np.sum(kappa ** 2) - np.sum(kappa) ** 2 / 3.0
    assert traceless_norm_sq(kappa)[0] == pytest.approx(expected)


def test_derivative_orders_are_bounded(mesh_sphere, axi_sphere) -> None:
    with pytest.raises(CurvatureError):
        curvature_field(mesh_sphere, 2)
    with pytest.raises(CurvatureError):
        curvature_field(axi_sphere, 4)


def test_derivative_norms_are_present_up_to_order(perturbed_profile) -> None:
    field = curvature_field(perturbed_profile, 3)
    assert sorted(field.grad_A) == [1, 2, 3]
    assert all(np.all(np.isfinite(values)) for values in field.grad_A.values())


def test_kato_inequality_holds_on_perturbed_profile(perturbed_profile) -> None:
    field = curvature_field(perturbed_profile, 1)
    assert kato_check(perturbed_profile, field).ok


def test_kato_check_flags_injected_defect(perturbed_profile) -> None:
    field = curvature_field(perturbed_profile, 1)
    bumped = field.grad_abs_traceless.copy()
    bumped[len(bumped) // 3] += 10.0 * np.max(field.grad_traceless[1])
    report = kato_check(perturbed_profile, replace(field, grad_abs_traceless=bumped))
    assert not report.ok
    assert report.violations[0][0] == len(bumped) // 3


def test_gradient_pinch_bound_values() -> None:
    assert gradient_pinch_bound(2) == pytest.approx(4.0)
    assert gradient_pinch_bound(3) == pytest.approx(3.75)


def test_gradient_pinch_within_bound_on_profile(perturbed_profile) -> None:
    report = gradient_pinch_check(perturbed_profile, curvature_field(perturbed_profile, 1))
    assert not report.vacuous
    assert report.ok


def test_gradient_pinch_is_vacuous_on_sphere(axi_sphere) -> None:
    report = gradient_pinch_check(axi_sphere, curvature_field(axi_sphere, 1))
    assert report.vacuous
    assert report.ok


def test_checks_need_first_derivatives(perturbed_profile) -> None:
    with pytest.raises(CurvatureError):
        kato_check(perturbed_profile, curvature_field(perturbed_profile, 0))


def test_effective_radius_of_sphere(axi_sphere) -> None:
    assert effective_radius(axi_sphere) == pytest.approx(1.0, rel=1e-3)


@settings(max_examples=20, deadline=None)
@given(factor=st.floats(min_value=0.25, max_value=4.0))
def test_curvature_scales_inversely(factor: float) -> None:
    surface = build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.15, 65)
    base = curvature_field(surface, 1)
    scaled = curvature_field(scale(surface, factor), 1)
    np.testing.assert_allclose(scaled.mean_curvature, base.mean_curvature / factor, rtol=1e-8)
    np.testing.assert_allclose(scaled.norm_tracelessA_sq, base.norm_tracelessA_sq / factor ** 2,
                               rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(scaled.grad_A[1], base.grad_A[1] / factor ** 2, rtol=1e-7, atol=1e-12)


def test_profile_curvature_converges_under_refinement() -> None:
    def traceless_energy(resolution: int) -> float:
        surface = build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.1, resolution)
        return float(np.sum(surface.node_weights * curvature_field(surface, 0).norm_tracelessA_sq))

    reference = traceless_energy(8192)
    errors = [abs(traceless_energy(resolution) - reference) for resolution in (64, 128, 256)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-2 * reference


def test_mesh_mean_curvature_converges_under_refinement() -> None:
    def total_mean_curvature_error(resolution: int) -> float:
        sphere = build_sphere(Backend.MESH, 2, 1.0, resolution)
        H = curvature_field(sphere, 0).mean_curvature
        return abs(float(np.sum(sphere.node_weights * H)) - 8.0 * np.pi)

    assert total_mean_curvature_error(2562) < total_mean_curvature_error(162)
