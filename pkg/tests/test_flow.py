import numpy as np
import pytest

from mcflab.config import ChecksConfig, FlowConfig, RemeshPolicy, ScenarioSpec
from mcflab.curvature import curvature_field
from mcflab.diagnostics import monotonicity_monitor
from mcflab.flow import (FlowState, adaptive_dt, compute_h_tilde, neck_radius, normalized_velocity,
                         prepare_initial, remesh, remesh_needed, renormalize_area, resolve_method, run_flow,
                         step_mcf, step_normalized)
from mcflab.geometry import (AxiProfileSurface, build_dumbbell, build_perturbed_sphere, build_sphere,
                             total_area, translate, validate)
from mcflab.mcflab_common import (Backend, FlowError, FlowMode, Method, ScenarioKind, SingularMethod, StopCause,
                                  Verdict)
from mcflab.singularity import classify_blowup, estimate_singular_time, roundness_of_attractor


def _radius(surface) -> float:
    return float(np.mean(np.linalg.norm(surface.positions, axis=1)))


def test_auto_method_per_backend() -> None:
    assert resolve_method(Method.AUTO, Backend.AXI) == Method.EXPLICIT
    assert resolve_method(Method.AUTO, Backend.MESH) == Method.SEMI_IMPLICIT
    assert resolve_method(Method.EXPLICIT, Backend.MESH) == Method.EXPLICIT


@pytest.mark.parametrize("method", [Method.EXPLICIT, Method.SEMI_IMPLICIT])
def test_profile_sphere_shrinks_at_the_exact_rate(axi_sphere, method) -> None:
    state = FlowState.start(axi_sphere)
    dt = 1e-4
    for _ in range(50):
        state = step_mcf(state, dt, method)
    expected = np.sqrt(1.0 - 4.0 * state.t)
    assert state.t == pytest.approx(50 * dt)
    assert _radius(state.surface) == pytest.approx(expected, rel=1e-4)


def test_mesh_sphere_shrinks(mesh_sphere) -> None:
    state = FlowState.start(mesh_sphere)
    for _ in range(10):
        state = step_mcf(state, 1e-3)
    assert _radius(state.surface) == pytest.approx(np.sqrt(1.0 - 4.0 * state.t), rel=2e-2)
    assert validate(state.surface).ok


def test_negative_step_is_an_error(axi_sphere) -> None:
    with pytest.raises(FlowError):
        step_mcf(FlowState.start(axi_sphere), -1e-3)


def test_step_mode_mismatch(axi_sphere) -> None:
    with pytest.raises(FlowError):
        step_mcf(FlowState.start(axi_sphere, FlowMode.NORMALIZED), 1e-3)
    with pytest.raises(FlowError):
        step_normalized(FlowState.start(axi_sphere), 1e-3)


def test_round_sphere_is_fixed_by_the_normalized_velocity(axi_sphere) -> None:
    field = curvature_field(axi_sphere, 0)
    h_tilde = compute_h_tilde(axi_sphere, field)
    assert h_tilde == pytest.approx(4.0, rel=1e-9)
    speed = np.abs(np.einsum("ij,ij->i", normalized_velocity(axi_sphere, field, h_tilde), field.normal))
    assert np.max(speed) < 1e-8


def test_normalized_step_keeps_area_and_tracks_psi(perturbed_profile) -> None:
    state = FlowState.start(perturbed_profile, FlowMode.NORMALIZED)
    area = total_area(perturbed_profile)
    for _ in range(20):
        state = step_normalized(state, 1e-4)
    assert total_area(state.surface) == pytest.approx(area, rel=1e-12)
    assert state.t_tilde == pytest.approx(20e-4)
    assert state.psi > 1.0
    assert 0.0 < state.t < state.t_tilde


def test_normalized_step_leaves_a_round_sphere_in_place(axi_sphere) -> None:
    dt_tilde = 1e-3
    state = step_normalized(FlowState.start(axi_sphere, FlowMode.NORMALIZED), dt_tilde)
    displacement = np.max(np.linalg.norm(state.surface.positions - axi_sphere.positions, axis=1))
    assert displacement <= 1e-2 * dt_tilde * 2.0


def test_normalized_step_requires_enclosed_origin(axi_sphere) -> None:
    moved = translate(axi_sphere, np.array([3.0, 0.0]))
    with pytest.raises(FlowError, match="origin"):
        step_normalized(FlowState.start(moved, FlowMode.NORMALIZED), 1e-4)


def test_renormalize_area(perturbed_profile) -> None:
    surface, factor = renormalize_area(perturbed_profile, 2.0 * total_area(perturbed_profile))
    assert factor == pytest.approx(np.sqrt(2.0))
    assert total_area(surface) == pytest.approx(2.0 * total_area(perturbed_profile), rel=1e-12)


def test_adaptive_dt_is_clamped(axi_sphere) -> None:
    state = FlowState.start(axi_sphere)
    field = curvature_field(axi_sphere, 0)
    plain = FlowConfig(explicit_stability=False, cfl=0.1)
    assert adaptive_dt(state, plain, field) == pytest.approx(1e-2)
    assert adaptive_dt(state, FlowConfig(explicit_stability=False, dt_max=1.0), field) == pytest.approx(0.05)
    stable = adaptive_dt(state, FlowConfig(), field)
    assert stable == pytest.approx(0.4 * axi_sphere.min_spacing() ** 2 / 2)
    floor = FlowConfig(explicit_stability=False, dt_min=0.5, dt_max=1.0)
    assert adaptive_dt(state, floor, field) == pytest.approx(0.5)


def test_explicit_dt_without_the_stability_cap() -> None:
    # radius 0.1: max|A|² = 200
    small = build_sphere(Backend.AXI, 2, 0.1, 129)
    state = FlowState.start(small)
    field = curvature_field(small, 0)
    assert adaptive_dt(state, FlowConfig(explicit_stability=False), field) == pytest.approx(0.1 / 200.0)
    capped = adaptive_dt(state, FlowConfig(), field)
    assert capped == pytest.approx(min(0.1 / 200.0, 0.4 * small.min_spacing() ** 2 / 2))


def test_profile_remesh_concentrates_nodes_at_the_neck() -> None:
    surface = build_dumbbell(2, 0.3, 1.0, 3.0, 129)
    policy = RemeshPolicy()
    remeshed = remesh(surface, policy)
    assert validate(remeshed).ok
    assert remeshed.num_nodes == surface.num_nodes
    assert total_area(remeshed) == pytest.approx(total_area(surface), rel=1e-3)

    def neck_spacing(profile: AxiProfileSurface) -> float:
        mid = np.abs(profile.nodes[:-1, 0]) < 0.3
        return float(np.mean(profile.segment_lengths()[mid]))

    assert neck_spacing(remeshed) <= neck_spacing(surface)


def test_uniform_sphere_needs_no_remesh(axi_sphere) -> None:
    assert not remesh_needed(axi_sphere, RemeshPolicy(), curvature_field(axi_sphere, 0))


def test_mesh_remesh_keeps_a_closed_surface() -> None:
    surface = build_perturbed_sphere(Backend.MESH, 2, 1.0, 3, 0.2, 162)
    remeshed = remesh(surface, RemeshPolicy(target_edge=0.2))
    assert validate(remeshed).ok
    assert total_area(remeshed) == pytest.approx(total_area(surface), rel=5e-2)


def test_prepare_initial_recentres_for_normalized_runs() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.PERTURBED_SPHERE, amplitude=0.2, mode=3, resolution=65)
    surface = prepare_initial(spec, FlowConfig(mode=FlowMode.NORMALIZED))
    w = surface.node_weights
    assert np.sum(w * surface.nodes[:, 0]) / np.sum(w) == pytest.approx(0.0, abs=1e-12)


def test_neck_radius_of_dumbbell() -> None:
    assert neck_radius(build_dumbbell(2, 0.25, 1.0, 3.0, 257), 3.0) == pytest.approx(0.25, abs=1e-3)


def test_blow_up_cap_below_initial_curvature_stops_at_step_zero() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.SPHERE, resolution=32)
    result = run_flow(spec, FlowConfig(max_abs_A_stop=1.0))
    assert result.cause == StopCause.BLOW_UP
    assert result.final_state.step == 0
    assert len(result.records) == 1


def test_max_steps_stop_records_every_step() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.PERTURBED_SPHERE, amplitude=0.1, resolution=33)
    result = run_flow(spec, FlowConfig(max_steps=25))
    assert result.cause == StopCause.MAX_STEPS
    assert [rec.step for rec in result.records] == list(range(26))
    assert [snap.step for snap in result.snapshots] == [0, 25]


@pytest.mark.slow
def test_sphere_runs_to_extinction() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.SPHERE, resolution=64)
    result = run_flow(spec, FlowConfig())
    assert result.cause == StopCause.EXTINCTION
    assert result.final_state.t == pytest.approx(0.25 * (1.0 - 0.01), rel=2e-2)


@pytest.mark.slow
def test_normalized_sphere_is_steady() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.SPHERE, resolution=64)
    result = run_flow(spec, FlowConfig(mode=FlowMode.NORMALIZED))
    assert result.cause == StopCause.STEADY
    assert result.final_state.psi > 1.0
    assert result.records[-1].area == pytest.approx(result.records[0].area, rel=1e-10)


@pytest.mark.slow
def test_dumbbell_neck_pinches() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.DUMBBELL, neck_radius=0.3, bulb_radius=1.0, bulb_separation=3.0,
                        resolution=128)
    result = run_flow(spec, FlowConfig())
    assert result.cause == StopCause.BLOW_UP
    assert neck_radius(result.final_state.surface, 3.0) < 0.3


def test_traceless_energy_decreases_on_a_perturbed_sphere() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.PERTURBED_SPHERE, amplitude=0.1, resolution=65)
    result = run_flow(spec, FlowConfig(max_steps=300))
    assert result.records[-1].int_Ao2 < result.records[0].int_Ao2
    assert monotonicity_monitor(result.records, "int_Ao2", ChecksConfig().slack_policy()) is None


@pytest.mark.slow
def test_three_sphere_extinction_time() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.SPHERE, n=3, resolution=64)
    result = run_flow(spec, FlowConfig())
    assert result.cause == StopCause.EXTINCTION
    singular = estimate_singular_time(result.records, SingularMethod.EXTINCTION)
    assert singular.T_est == pytest.approx(1.0 / 6.0, rel=2e-2)


@pytest.mark.slow
def test_normalized_perturbed_sphere_converges_exponentially() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.PERTURBED_SPHERE, amplitude=0.05, mode=2, resolution=128)
    result = run_flow(spec, FlowConfig(mode=FlowMode.NORMALIZED))
    assert result.cause == StopCause.STEADY
    assert roundness_of_attractor(result.final_state.surface).radius_spread <= 1e-2
    assert result.records[-1].area == pytest.approx(result.records[0].area, rel=1e-8)
    decaying = [rec for rec in result.records if rec.int_Ao2 > 0]
    t_tilde = np.array([rec.t_tilde for rec in decaying])
    log_energy = np.log([rec.int_Ao2 for rec in decaying])
    slope = np.polyfit(t_tilde, log_energy, 1)[0]
    assert slope < 0
    assert abs(np.corrcoef(t_tilde, log_energy)[0, 1]) >= 0.99


@pytest.mark.slow
def test_dumbbell_neckpinch_is_type_one() -> None:
    spec = ScenarioSpec(kind=ScenarioKind.DUMBBELL, neck_radius=0.2, bulb_radius=1.0, bulb_separation=3.0)
    result = run_flow(spec, FlowConfig())
    assert result.cause == StopCause.BLOW_UP
    singular = estimate_singular_time(result.records, SingularMethod.BLOWUP_RATE)
    assert singular.slope == pytest.approx(-2.0, rel=0.1)
    fit = classify_blowup(result.records, singular.T_est)
    assert fit.typeI_verdict == Verdict.TYPE_I
    assert 0.3 <= fit.typeI_stat <= 3.0
