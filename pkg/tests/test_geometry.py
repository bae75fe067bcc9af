import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mcflab.curvature import curvature_field
from mcflab.geometry import (AxiProfileSurface, TriMeshSurface, area_centroid, build_dumbbell, build_ellipsoid,
                             build_perturbed_sphere, build_sphere, encloses_origin, intrinsic_diameter, is_degenerate,
                             profile_weights, resample_polyline, rigid_motion, scale, total_area, translate, validate)
from mcflab.mcflab_common import Backend, GeometryError, sphere_area
from mcflab.singularity import detect_convex, detect_mean_convex


def _int_Ao2(surface) -> float:
    return float(np.sum(surface.node_weights * curvature_field(surface, 0).norm_tracelessA_sq))


def _rotation(angle: float) -> np.ndarray:
    return np.array([[np.cos(angle), -np.sin(angle), 0.0], [np.sin(angle), np.cos(angle), 0.0], [0.0, 0.0, 1.0]])


def test_axi_sphere_area_matches_closed_form(axi_sphere) -> None:
    assert total_area(axi_sphere) == pytest.approx(4.0 * np.pi, rel=1e-3)


def test_axi_sphere_area_in_higher_dimension() -> None:
    sphere = build_sphere(Backend.AXI, 3, 2.0, 257)
    assert total_area(sphere) == pytest.approx(sphere_area(3, 2.0), rel=1e-3)


def test_mesh_sphere_area_is_close_to_closed_form(mesh_sphere) -> None:
    assert total_area(mesh_sphere) == pytest.approx(4.0 * np.pi, rel=2e-2)


@pytest.mark.parametrize("backend", [Backend.AXI, Backend.MESH])
def test_standard_surfaces_validate(backend) -> None:
    resolution = 65 if backend == Backend.AXI else 162
    assert validate(build_sphere(backend, 2, 1.0, resolution)).ok
    assert validate(build_perturbed_sphere(backend, 2, 1.0, 2, 0.1, resolution)).ok


def test_dumbbell_and_ellipsoid_validate(dumbbell_profile) -> None:
    assert validate(dumbbell_profile).ok
    assert validate(build_ellipsoid(2.0, 1.0, 1.0, 642)).ok


def test_zero_amplitude_perturbation_is_the_sphere() -> None:
    for backend, resolution in ((Backend.AXI, 65), (Backend.MESH, 162)):
        sphere = build_sphere(backend, 2, 1.5, resolution)
        flat = build_perturbed_sphere(backend, 2, 1.5, 3, 0.0, resolution)
        np.testing.assert_allclose(flat.positions, sphere.positions, atol=1e-12)


@pytest.mark.parametrize("kwargs", [
    {"backend": Backend.MESH, "n": 3, "radius": 1.0, "resolution": 642},
    {"backend": Backend.AXI, "n": 2, "radius": 1.0, "resolution": 8},
    {"backend": Backend.AXI, "n": 2, "radius": 0.0, "resolution": 64},
    {"backend": Backend.AXI, "n": 1, "radius": 1.0, "resolution": 64},
])
def test_build_sphere_rejects_bad_arguments(kwargs) -> None:
    with pytest.raises(GeometryError):
        build_sphere(**kwargs)


def test_perturbation_preconditions() -> None:
    with pytest.raises(GeometryError, match="mode"):
        build_perturbed_sphere(Backend.AXI, 2, 1.0, 1, 0.1, 64)
    with pytest.raises(GeometryError, match="amplitude"):
        build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.5, 64)


def test_overlapping_bulbs_give_the_spheroid_hull() -> None:
    hull = build_dumbbell(2, 0.2, 1.0, 0.5, 64)
    x, r = hull.nodes[:, 0], hull.nodes[:, 1]
    assert x[0] == pytest.approx(-1.25)
    assert x[-1] == pytest.approx(1.25)
    assert r.max() == pytest.approx(1.0, rel=1e-3)


def test_dumbbell_neck_is_thinner_than_bulbs(dumbbell_profile) -> None:
    x, r = dumbbell_profile.nodes[:, 0], dumbbell_profile.nodes[:, 1]
    assert np.min(r[np.abs(x) < 0.2]) == pytest.approx(0.4, abs=1e-3)
    assert r.max() == pytest.approx(1.0, abs=1e-3)


def test_open_mesh_is_reported(mesh_sphere) -> None:
    holed = TriMeshSurface.from_arrays(mesh_sphere.vertices, mesh_sphere.triangles[1:])
    report = validate(holed)
    assert not report.ok
    assert "open edge" in report.kinds()


def test_flipped_face_is_reported(mesh_sphere) -> None:
    triangles = mesh_sphere.triangles.copy()
    triangles[0] = triangles[0, [0, 2, 1]]
    assert "inconsistent orientation" in validate(TriMeshSurface.from_arrays(mesh_sphere.vertices, triangles)).kinds()


def test_profile_pole_off_axis_is_reported(axi_sphere) -> None:
    nodes = axi_sphere.nodes.copy()
    nodes[0, 1] = 0.05
    broken = AxiProfileSurface(2, nodes, profile_weights(2, nodes))
    assert "pole off axis" in validate(broken).kinds()


def test_profile_spacing_ratio_is_reported() -> None:
    theta = np.concatenate([np.linspace(0.0, 0.1, 30), np.linspace(0.2, np.pi, 10)])
    nodes = np.column_stack([-np.cos(theta), np.sin(theta)])
    assert "spacing ratio" in validate(AxiProfileSurface.from_nodes(2, nodes)).kinds()


def test_profile_diameter_is_half_the_great_circle(axi_sphere) -> None:
    assert intrinsic_diameter(axi_sphere) == pytest.approx(np.pi, rel=1e-4)


def test_mesh_diameter_approximates_geodesic_distance() -> None:
    small = build_sphere(Backend.MESH, 2, 1.0, 162)
    assert intrinsic_diameter(small) == pytest.approx(np.pi, rel=0.1)


def test_origin_enclosure(axi_sphere, mesh_sphere) -> None:
    assert encloses_origin(axi_sphere)
    assert encloses_origin(mesh_sphere)
    assert not encloses_origin(translate(axi_sphere, np.array([2.0, 0.0])))
    assert not encloses_origin(translate(mesh_sphere, np.array([0.0, 3.0, 0.0])))


def test_centroid_of_translated_profile(axi_sphere) -> None:
    moved = translate(axi_sphere, np.array([0.7, 5.0]))
    np.testing.assert_allclose(area_centroid(moved), [0.7, 0.0], atol=1e-10)


def test_resample_keeps_poles_and_count(perturbed_profile) -> None:
    nodes = resample_polyline(perturbed_profile.nodes, 101)
    assert len(nodes) == 101
    np.testing.assert_array_equal(nodes[[0, -1]], perturbed_profile.nodes[[0, -1]])
    assert validate(AxiProfileSurface.from_nodes(2, nodes)).ok


@settings(max_examples=25, deadline=None)
@given(factor=st.floats(min_value=0.2, max_value=5.0), n=st.integers(min_value=2, max_value=4))
def test_area_scales_with_dimension(factor: float, n: int) -> None:
    surface = build_perturbed_sphere(Backend.AXI, n, 1.0, 2, 0.2, 65)
    assert total_area(scale(surface, factor)) == pytest.approx(factor ** n * total_area(surface), rel=1e-10)


def test_rigid_motion_keeps_area_and_validity(mesh_sphere) -> None:
    rotation = _rotation(0.7)
    moved = rigid_motion(mesh_sphere, rotation, np.array([0.5, -1.0, 2.0]))
    assert total_area(moved) == pytest.approx(total_area(mesh_sphere), rel=1e-12)
    assert validate(moved).ok
    expected = rotation @ area_centroid(mesh_sphere) + np.array([0.5, -1.0, 2.0])
    np.testing.assert_allclose(area_centroid(moved), expected, atol=1e-10)


def test_degenerate_surfaces_are_detected(axi_sphere, mesh_sphere) -> None:
    assert not is_degenerate(axi_sphere)
    assert not is_degenerate(mesh_sphere, reference=mesh_sphere)
    nodes = axi_sphere.nodes.copy()
    nodes[5, 1] = -0.01
    assert is_degenerate(axi_sphere.with_positions(nodes))
    vertices = mesh_sphere.vertices.copy()
    vertices[0] = np.nan
    assert is_degenerate(mesh_sphere.with_positions(vertices))


def test_perturbation_energy_matches_a_fine_quadrature() -> None:
    coarse = _int_Ao2(build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.05, 512))
    fine = _int_Ao2(build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.05, 8192))
    assert coarse == pytest.approx(fine, rel=1e-2)


def test_perturbation_energy_is_quadratic_in_amplitude() -> None:
    full = _int_Ao2(build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.02, 512))
    half = _int_Ao2(build_perturbed_sphere(Backend.AXI, 2, 1.0, 2, 0.01, 512))
    assert full / half == pytest.approx(4.0, rel=5e-2)


def test_prolate_ellipsoid_area() -> None:
    a, b = 2.0, 1.0
    # meridian x = a cos t, r = b sin t
    exact, _ = quad(lambda t: 2.0 * np.pi * b * np.sin(t) * np.hypot(a * np.sin(t), b * np.cos(t)), 0.0, np.pi)
    assert total_area(build_ellipsoid(a, b, b, 5000)) == pytest.approx(exact, rel=1e-2)


def test_prolate_ellipsoid_tip_is_umbilic() -> None:
    ellipsoid = build_ellipsoid(2.0, 1.0, 1.0, 5000)
    field = curvature_field(ellipsoid, 0)
    near_tip = np.linalg.norm(ellipsoid.vertices - np.array([2.0, 0.0, 0.0]), axis=1) < 0.1
    assert np.count_nonzero(near_tip) >= 3
    assert np.median(field.principal_curvatures[near_tip]) == pytest.approx(2.0, rel=3e-2)


def test_convexity_of_dumbbell_and_blob() -> None:
    dumbbell = curvature_field(build_dumbbell(2, 0.2, 1.0, 3.0, 1024), 0)
    blob = curvature_field(build_dumbbell(2, 0.9, 1.0, 0.5, 1024), 0)
    assert not detect_convex(dumbbell)
    assert detect_convex(blob)
    assert detect_mean_convex(blob)


def test_rigid_motion_keeps_curvature_and_diameter() -> None:
    surface = build_perturbed_sphere(Backend.MESH, 2, 1.0, 3, 0.1, 642, order=2)
    moved = rigid_motion(surface, _rotation(1.1), np.array([-0.3, 2.0, 0.5]))
    before, after = curvature_field(surface, 1), curvature_field(moved, 1)
    np.testing.assert_allclose(after.mean_curvature, before.mean_curvature, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(after.norm_tracelessA_sq, before.norm_tracelessA_sq, rtol=1e-8, atol=1e-10)
    assert intrinsic_diameter(moved) == pytest.approx(intrinsic_diameter(surface), rel=1e-10)
