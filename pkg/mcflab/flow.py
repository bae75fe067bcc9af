"""
Time stepping for mean curvature flow ∂F/∂t = -Hν and its area-normalized
variant ∂F̃/∂t̃ = -H̃ν̃ + (h̃/n)F̃, with adaptive steps and remeshing.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.sparse.linalg import spsolve

from mcflab import diagnostics
from mcflab.config import ChecksConfig, FlowConfig, RemeshPolicy, ScenarioSpec
from mcflab.curvature import (CurvatureField, cotan_laplacian, curvature_field, mixed_voronoi_areas,
                              profile_frame, rotation_coefficient, vertex_normals, _fd_weights)
from mcflab.geometry import (AxiProfileSurface, Hypersurface, TriMeshSurface, area_centroid, encloses_origin,
                             is_degenerate, resample_polyline, total_area, translate, validate)
from mcflab.mcflab_common import (Backend, FlowError, FlowMode, GeometryError, Method, StepRejected, StopCause)

PROFILE_DENSITY_SPREAD = 3.0
AREA_DRIFT_LIMIT = 1e-3
ENERGY_DRIFT_LIMIT = 5e-3


@dataclass(frozen=True, eq=False)
class FlowState:
    """One time level of a run."""
    surface: Hypersurface
    mode: FlowMode = FlowMode.UNNORMALIZED
    t: float = 0.0
    t_tilde: float = 0.0
    psi: float = 1.0
    step: int = 0
    dt_last: float = 0.0
    target_area: Optional[float] = None

    @classmethod
    def start(cls, surface: Hypersurface, mode: FlowMode = FlowMode.UNNORMALIZED) -> FlowState:
        target = total_area(surface) if mode == FlowMode.NORMALIZED else None
        return cls(surface=surface, mode=mode, target_area=target)


@dataclass(frozen=True, eq=False)
class Snapshot:
    step: int
    t: float
    t_tilde: float
    psi: float
    surface: Hypersurface


@dataclass(frozen=True)
class RemeshEvent:
    step: int
    area_drift: float
    energy_drift: float


@dataclass(eq=False)
class RunResult:
    """Time series, snapshots and the reason the run stopped."""
    records: list
    snapshots: list[Snapshot]
    cause: StopCause
    final_state: FlowState
    remesh_events: list[RemeshEvent] = field(default_factory=list)
    initial_max_A: float = 0.0
    message: str = ""


def resolve_method(method: Method, backend: Backend) -> Method:
    """Explicit stepping for profiles and semi-implicit for meshes unless chosen explicitly."""
    if method != Method.AUTO:
        return method
    return Method.EXPLICIT if backend == Backend.AXI else Method.SEMI_IMPLICIT


def compute_h_tilde(surface: Hypersurface, field: Optional[CurvatureField] = None) -> float:
    """Weighted mean of H² over the surface."""
    field = field or curvature_field(surface, 0)
    w = surface.node_weights
    return float(np.sum(w * field.mean_curvature ** 2) / np.sum(w))


def normalized_velocity(surface: Hypersurface, field: CurvatureField, h_tilde: float) -> np.ndarray:
    """-Hν + (h̃/n)F at every node."""
    return -field.mean_curvature[:, None] * field.normal + (h_tilde / surface.n) * surface.positions


# ---------------------------------------------------------------------------
# linearly implicit operators


def _profile_operators(surface: AxiProfileSurface) -> tuple[sparse.csc_matrix, sparse.csc_matrix]:
    """
    Laplace-Beltrami of the x and r coordinates on the old profile metric.

    Both coordinates see f'' + (n-1)(r'/r) f'; r also picks up -(n-1) r / r²
    from the rotational directions. Pole rows use the even reflection for x
    and keep r = 0.
    """
    n, size = surface.n, surface.num_nodes
    tangent, _ = profile_frame(surface)
    g = rotation_coefficient(surface, tangent)
    r = surface.nodes[:, 1]
    h = np.diff(surface.arc_coordinate())
    (d1m, d10, d1p), (d2m, d20, d2p) = _fd_weights(h[:-1], h[1:])
    gi = (n - 1) * g[1:-1]
    lower = np.zeros(size - 1)
    main = np.zeros(size)
    upper = np.zeros(size - 1)
    lower[:-1] = d2m + gi * d1m
    main[1:-1] = d20 + gi * d10
    upper[1:] = d2p + gi * d1p
    main_x = main.copy()
    main_x[0] = -2.0 * n / h[0] ** 2
    upper_x = upper.copy()
    upper_x[0] = 2.0 * n / h[0] ** 2
    main_x[-1] = -2.0 * n / h[-1] ** 2
    lower_x = lower.copy()
    lower_x[-1] = 2.0 * n / h[-1] ** 2
    lap_x = sparse.diags([lower_x, main_x, upper_x], [-1, 0, 1], format="csc")
    main_r = main.copy()
    main_r[1:-1] -= (n - 1) / r[1:-1] ** 2
    lap_r = sparse.diags([lower, main_r, upper], [-1, 0, 1], format="csc")
    return lap_x, lap_r


def _semi_implicit_positions(surface: Hypersurface, dt: float, source: float) -> np.ndarray:
    """Solve (I - dt Δ) X_new = (1 + dt·source) X_old on the old metric."""
    old = surface.positions
    rhs = (1.0 + dt * source) * old
    if surface.backend == Backend.MESH:
        mass = sparse.diags(mixed_voronoi_areas(surface))
        system = (mass - dt * cotan_laplacian(surface)).tocsc()
        new = spsolve(system, mass @ rhs)
    else:
        lap_x, lap_r = _profile_operators(surface)
        eye = sparse.identity(surface.num_nodes, format="csc")
        new = np.column_stack([spsolve((eye - dt * lap_x).tocsc(), rhs[:, 0]),
                               spsolve((eye - dt * lap_r).tocsc(), rhs[:, 1])])
        new[[0, -1], 1] = 0.0
    new = np.asarray(new, dtype=float).reshape(old.shape)
    if not np.all(np.isfinite(new)):
        raise StepRejected(f"Linear solve failed at dt={dt:.3e}")
    return new


def _advance_positions(surface: Hypersurface, field: CurvatureField, dt: float, method: Method,
                       h_tilde: float = 0.0) -> Hypersurface:
    if dt < 0:
        raise FlowError(f"Negative time step {dt}")
    source = h_tilde / surface.n
    if resolve_method(method, surface.backend) == Method.EXPLICIT:
        velocity = -field.mean_curvature[:, None] * field.normal + source * surface.positions
        positions = surface.positions + dt * velocity
    else:
        positions = _semi_implicit_positions(surface, dt, source)
    candidate = surface.with_positions(positions)
    if is_degenerate(candidate, reference=surface):
        raise StepRejected(f"Degenerate surface after a step of dt={dt:.3e}")
    return candidate


def step_mcf(state: FlowState, dt: float, method: Method = Method.AUTO,
             field: Optional[CurvatureField] = None) -> FlowState:
    """
    One step of ∂F/∂t = -Hν.

    Explicit: nodes move by -Hν·dt. Semi-implicit: new = old + dt·Δ_old(new).

    Raises:
        StepRejected: the step produced a degenerate surface or the solve failed
    """
    if state.mode != FlowMode.UNNORMALIZED:
        raise FlowError("step_mcf needs an unnormalized state")
    field = field or curvature_field(state.surface, 0)
    surface = _advance_positions(state.surface, field, dt, method)
    return replace(state, surface=surface, t=state.t + dt, step=state.step + 1, dt_last=dt)


def renormalize_area(surface: Hypersurface, target_area: float) -> tuple[Hypersurface, float]:
    """Dilate about the origin so the area equals ``target_area``; returns the surface and the scale."""
    if not target_area > 0:
        raise FlowError(f"Target area must be positive, got {target_area}")
    try:
        area = total_area(surface)
    except GeometryError as e:
        raise FlowError(f"Cannot renormalize a degenerate surface: {e}") from e
    factor = (target_area / area) ** (1.0 / surface.n)
    return surface.with_positions(surface.positions * factor), float(factor)


def step_normalized(state: FlowState, dt_tilde: float, method: Method = Method.AUTO,
                    field: Optional[CurvatureField] = None) -> FlowState:
    """
    One step of the normalized flow followed by the area projection.

    The h̃F̃ term is explicit in both methods. ψ is multiplied by the step's
    total dilation and t advances by dt̃/ψ.

    Raises:
        FlowError: the origin left the enclosed region
        StepRejected: degenerate surface or failed solve
    """
    if state.mode != FlowMode.NORMALIZED:
        raise FlowError("step_normalized needs a normalized state")
    if not encloses_origin(state.surface):
        raise FlowError(f"The origin is not enclosed by the surface at step {state.step}")
    field = field or curvature_field(state.surface, 0)
    h_tilde = compute_h_tilde(state.surface, field)
    candidate = _advance_positions(state.surface, field, dt_tilde, method, h_tilde)
    projected, factor = renormalize_area(candidate, state.target_area)
    dilation = (1.0 + dt_tilde * h_tilde / state.surface.n) * factor
    return replace(state, surface=projected, t=state.t + dt_tilde / state.psi, t_tilde=state.t_tilde + dt_tilde,
                   psi=state.psi * dilation, step=state.step + 1, dt_last=dt_tilde)


def adaptive_dt(state: FlowState, config: FlowConfig, field: CurvatureField) -> float:
    """
    Explicit: cfl / max|A|², also capped by stability_factor·h_min²/n when
    ``explicit_stability`` is set. Semi-implicit: cfl·h / max|A| with h the mean spacing.
    Both are clamped to [dt_min, dt_max].
    """
    surface = state.surface
    max_A_sq = float(np.max(field.norm_A_sq))
    if resolve_method(config.method, surface.backend) == Method.EXPLICIT:
        dt = config.cfl / max_A_sq if max_A_sq > 0 else config.dt_max
        if config.explicit_stability:
            dt = min(dt, config.stability_factor * surface.min_spacing() ** 2 / surface.n)
    else:
        dt = config.cfl * surface.mean_spacing() / np.sqrt(max_A_sq) if max_A_sq > 0 else config.dt_max
    return float(np.clip(dt, config.dt_min, config.dt_max))


# ---------------------------------------------------------------------------
# remeshing


def _profile_density(surface: AxiProfileSurface, policy: RemeshPolicy, abs_A: np.ndarray) -> np.ndarray:
    density = 1.0 + policy.density_gain * surface.mean_spacing() * abs_A
    return np.minimum(density, PROFILE_DENSITY_SPREAD * density.min())


def _mesh_targets(surface: TriMeshSurface, policy: RemeshPolicy, abs_A: np.ndarray) -> np.ndarray:
    h0 = policy.target_edge or surface.mean_spacing()
    gain = policy.density_gain * h0
    return h0 * (1.0 + gain * np.mean(abs_A)) / (1.0 + gain * abs_A)


def remesh_needed(surface: Hypersurface, policy: RemeshPolicy, field: CurvatureField) -> bool:
    """True when the node distribution has drifted away from the policy's target."""
    abs_A = field.norm_A
    if surface.backend == Backend.AXI:
        density = _profile_density(surface, policy, abs_A)
        ds = surface.segment_lengths()
        relative = ds * 0.5 * (density[1:] + density[:-1])
        spread = float(relative.max() / relative.min())
        turn = float(np.max(ds * 0.5 * (abs_A[1:] + abs_A[:-1])))
        return spread > policy.spacing_ratio or (turn > policy.max_turn and spread > 1.25)
    targets = _mesh_targets(surface, policy, abs_A)
    edges = surface.edges()
    ratio = surface.edge_lengths() / (0.5 * (targets[edges[:, 0]] + targets[edges[:, 1]]))
    return bool(ratio.max() > 2.0 or ratio.min() < 0.5)


def _edge_faces(faces: list[list[int]]) -> dict[tuple[int, int], list[int]]:
    table: dict[tuple[int, int], list[int]] = {}
    for f, tri in enumerate(faces):
        if tri is None:
            continue
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            table.setdefault((min(a, b), max(a, b)), []).append(f)
    return table


def _orient(tri: list[int], a: int, b: int) -> tuple[int, int, int]:
    """Rotate a face so its first directed edge joins a and b; returns (i, j, opposite)."""
    for k in range(3):
        i, j = tri[k], tri[(k + 1) % 3]
        if {i, j} == {a, b}:
            return i, j, tri[(k + 2) % 3]
    raise FlowError(f"Edge ({a}, {b}) is not on face {tri}")


def _face_normal(points: np.ndarray, tri) -> np.ndarray:
    p = points[list(tri)]
    return np.cross(p[1] - p[0], p[2] - p[0])


def _split_pass(points: list, targets: list, faces: list) -> int:
    v = np.asarray(points)
    surface = TriMeshSurface.from_arrays(v, np.asarray([f for f in faces if f is not None]))
    with np.errstate(invalid="ignore", divide="ignore"):
        normals = vertex_normals(surface)  # collapsed vertices are orphaned until compaction
    table = _edge_faces(faces)
    long_edges = []
    for (a, b), fs in table.items():
        length = float(np.linalg.norm(v[a] - v[b]))
        if len(fs) == 2 and length > 2.0 * 0.5 * (targets[a] + targets[b]):
            long_edges.append((length, a, b))
    touched: set[int] = set()
    count = 0
    for length, a, b in sorted(long_edges, reverse=True):
        fs = table[(a, b)]
        if any(f in touched for f in fs):
            continue
        edge = v[b] - v[a]
        normal = normals[a] + normals[b]
        normal /= np.linalg.norm(normal)
        # lift the midpoint by the sagitta of the normal section
        bend = float(np.dot(normals[b] - normals[a], edge)) / length ** 2
        m = len(points)
        points.append(0.5 * (v[a] + v[b]) + bend * length ** 2 / 8.0 * normal)
        targets.append(0.5 * (targets[a] + targets[b]))
        for f in fs:
            i, j, o = _orient(faces[f], a, b)
            faces[f] = [i, m, o]
            faces.append([m, j, o])
            touched.add(f)
            touched.add(len(faces) - 1)
        count += 1
    return count


def _vertex_links(faces: list) -> dict[int, set[int]]:
    links: dict[int, set[int]] = {}
    for tri in faces:
        if tri is None:
            continue
        for k in range(3):
            links.setdefault(tri[k], set()).update((tri[(k + 1) % 3], tri[(k + 2) % 3]))
    return links


def _vertex_faces(faces: list) -> dict[int, list[int]]:
    incident: dict[int, list[int]] = {}
    for f, tri in enumerate(faces):
        if tri is None:
            continue
        for vertex in tri:
            incident.setdefault(vertex, []).append(f)
    return incident


def _collapse_pass(points: list, targets: list, faces: list) -> int:
    v = np.asarray(points)
    table = _edge_faces(faces)
    links = _vertex_links(faces)
    incident = _vertex_faces(faces)
    short_edges = []
    for (a, b), fs in table.items():
        length = float(np.linalg.norm(v[a] - v[b]))
        if len(fs) == 2 and length < 0.5 * 0.5 * (targets[a] + targets[b]):
            short_edges.append((length, a, b))
    locked: set[int] = set()
    count = 0
    for _, a, b in sorted(short_edges):
        if a in locked or b in locked:
            continue
        fs = table[(a, b)]
        opposite = {_orient(faces[f], a, b)[2] for f in fs}
        if links[a] & links[b] != opposite or any(len(links[o]) <= 3 for o in opposite):
            continue
        p = 0.5 * (v[a] + v[b])
        limit = 1.5 * 2.0 * min(targets[a], targets[b])
        moved = v.copy()
        moved[a] = p
        ok = True
        for f in set(incident[a]) | set(incident[b]):
            if f in fs:
                continue
            tri = [a if vertex == b else vertex for vertex in faces[f]]
            before = _face_normal(v, faces[f])
            after = _face_normal(moved, tri)
            if np.dot(before, after) <= 0.2 * np.linalg.norm(before) * np.linalg.norm(after):
                ok = False
                break
            if max(np.linalg.norm(moved[tri[k]] - moved[tri[(k + 1) % 3]]) for k in range(3)) > limit:
                ok = False
                break
        if not ok:
            continue
        for f in fs:
            faces[f] = None
        for f in incident[b]:
            if faces[f] is not None:
                faces[f] = [a if vertex == b else vertex for vertex in faces[f]]
        points[a] = p
        targets[a] = min(targets[a], targets[b])
        locked.update(links[a] | links[b] | {a, b})
        count += 1
    return count


def _flip_pass(points: list, faces: list) -> int:
    v = np.asarray(points)
    table = _edge_faces(faces)
    links = _vertex_links(faces)
    touched: set[int] = set()
    count = 0
    for (a, b), fs in list(table.items()):
        if len(fs) != 2 or fs[0] in touched or fs[1] in touched:
            continue
        i, j, k = _orient(faces[fs[0]], a, b)
        _, _, l = _orient(faces[fs[1]], a, b)
        if k == l or (min(k, l), max(k, l)) in table or len(links[i]) <= 3 or len(links[j]) <= 3:
            continue
        n1, n2 = _face_normal(v, (i, j, k)), _face_normal(v, (j, i, l))
        if np.dot(n1, n2) < 0.95 * np.linalg.norm(n1) * np.linalg.norm(n2):
            continue

        def cot(apex, p, q):
            e1, e2 = v[p] - v[apex], v[q] - v[apex]
            return np.dot(e1, e2) / np.linalg.norm(np.cross(e1, e2))

        if cot(k, i, j) + cot(l, i, j) >= -1e-3:
            continue
        new1, new2 = (i, l, k), (l, j, k)
        reference = n1 + n2
        if min(np.dot(_face_normal(v, new1), reference), np.dot(_face_normal(v, new2), reference)) <= 0:
            continue
        faces[fs[0]] = list(new1)
        faces[fs[1]] = list(new2)
        table[(min(k, l), max(k, l))] = [fs[0], fs[1]]
        links[i].discard(j)
        links[j].discard(i)
        links[k].add(l)
        links[l].add(k)
        touched.update(fs)
        count += 1
    return count


def _remesh_triangles(surface: TriMeshSurface, policy: RemeshPolicy, abs_A: np.ndarray) -> TriMeshSurface:
    points = list(surface.vertices.copy())
    targets = list(_mesh_targets(surface, policy, abs_A))
    faces: list = surface.triangles.tolist()
    for sweep in range(policy.max_passes):
        splits = _split_pass(points, targets, faces)
        collapses = _collapse_pass(points, targets, faces)
        flips = _flip_pass(points, faces)
        logger.debug(f"Remesh pass {sweep}: {splits} splits, {collapses} collapses, {flips} flips")
        if splits + collapses + flips == 0:
            break
    kept = np.asarray([f for f in faces if f is not None], dtype=np.int64)
    used = np.unique(kept)
    index = np.full(len(points), -1, dtype=np.int64)
    index[used] = np.arange(len(used))
    candidate = TriMeshSurface.from_arrays(np.asarray(points)[used], index[kept])
    report = validate(candidate)
    if not report.ok:
        raise FlowError(f"Remesh would violate closedness: {', '.join(sorted(report.kinds()))}")
    return candidate


def remesh(surface: Hypersurface, policy: RemeshPolicy, field: Optional[CurvatureField] = None) -> Hypersurface:
    """
    Redistribute nodes according to ``policy``.

    Profiles are resampled with density ∝ 1 + gain·h₀·|A|. Meshes get edge
    splits, collapses and Delaunay flips until edge lengths sit in [0.5, 2]
    times the local target.

    Raises:
        FlowError: the remeshed surface is not a valid closed surface
    """
    field = field or curvature_field(surface, 0)
    if surface.backend == Backend.AXI:
        density = _profile_density(surface, policy, field.norm_A)
        candidate = AxiProfileSurface.from_nodes(surface.n,
                                                 resample_polyline(surface.nodes, surface.num_nodes, density))
        report = validate(candidate)
        if not report.ok:
            raise FlowError(f"Profile resampling produced an invalid surface: {', '.join(sorted(report.kinds()))}")
        return candidate
    return _remesh_triangles(surface, policy, field.norm_A)


def _relative_change(before: float, after: float) -> float:
    return (after - before) / before if before > 0 else 0.0


def _weighted_integral(surface: Hypersurface, values: np.ndarray) -> float:
    return float(np.sum(surface.node_weights * values))


# ---------------------------------------------------------------------------
# driver


def _advance(state: FlowState, dt: float, method: Method, field: CurvatureField, config: FlowConfig) -> FlowState:
    """Take one step, halving dt on rejection down to dt_min."""
    while True:
        try:
            if state.mode == FlowMode.NORMALIZED:
                return step_normalized(state, dt, method, field)
            return step_mcf(state, dt, method, field)
        except StepRejected as e:
            if dt <= config.dt_min:
                raise
            logger.debug(f"Step {state.step} rejected ({e}); halving dt")
            dt = max(0.5 * dt, config.dt_min)


def prepare_initial(scenario: ScenarioSpec, config: FlowConfig) -> Hypersurface:
    """Build, validate and (normalized mode) recenter the initial surface."""
    surface = scenario.build_surface()
    report = validate(surface)
    if not report.ok:
        raise FlowError(f"Initial surface is invalid: {', '.join(sorted(report.kinds()))}")
    if config.mode == FlowMode.NORMALIZED:
        surface = translate(surface, -area_centroid(surface))
        if not encloses_origin(surface):
            raise FlowError("The origin is not enclosed by the recentred initial surface")
    return surface


def run_flow(scenario: ScenarioSpec, config: FlowConfig, checks: Optional[ChecksConfig] = None,
             progress: Optional[Callable[[FlowState], None]] = None) -> RunResult:
    """
    Evolve the scenario's surface until a stop condition holds.

    Each iteration computes curvature, records diagnostics, tests the stop
    conditions (extinction, blow-up, steady, max_steps), chooses dt, steps,
    remeshes when the policy asks for it, and in normalized mode keeps the
    area fixed through the projection inside ``step_normalized``.
    """
    checks = checks or ChecksConfig()
    surface = prepare_initial(scenario, config)
    backend = surface.backend
    m_max = config.resolved_m_max(backend)
    method = resolve_method(config.method, backend)
    policy = config.remesh_policy()
    state = FlowState.start(surface, config.mode)
    initial_area = total_area(surface)
    field = curvature_field(surface, m_max)
    initial_max_A = float(np.max(field.norm_A))
    cap = config.max_abs_A_stop or 1000.0 * initial_max_A
    logger.info(f"Starting {config.mode.value} {method.value} run on {backend.value} "
                f"({surface.num_nodes} nodes, area {initial_area:.6g}, max|A| {initial_max_A:.6g})")

    records: list = []
    snapshots = [Snapshot(0, 0.0, 0.0, 1.0, surface)]
    events: list[RemeshEvent] = []
    drift: dict[str, float] = {}
    steady_count = 0
    last_remesh = 0
    message = ""
    while True:
        if state.step % config.diagnostics_every == 0:
            records.append(diagnostics.record(state, field, checks,
                                              with_diameter=state.step % config.diameter_every == 0,
                                              remesh_drift=drift))
            drift = {}
        if progress is not None:
            progress(state)
        sup_A = float(np.max(field.norm_A))
        if config.mode == FlowMode.UNNORMALIZED and total_area(state.surface) < config.area_stop_fraction * initial_area:
            cause = StopCause.EXTINCTION
            break
        if sup_A > cap:
            cause = StopCause.BLOW_UP
            message = f"max|A| = {sup_A:.4g} exceeded the cap {cap:.4g}"
            break
        if config.mode == FlowMode.NORMALIZED:
            h_tilde = compute_h_tilde(state.surface, field)
            speed = np.abs(np.einsum("ij,ij->i", normalized_velocity(state.surface, field, h_tilde), field.normal))
            steady_count = steady_count + 1 if speed.max() < config.steady_tol * np.max(np.abs(field.mean_curvature)) \
                else 0
            if steady_count >= config.steady_steps:
                cause = StopCause.STEADY
                break
        if state.step >= config.max_steps:
            cause = StopCause.MAX_STEPS
            break

        dt = adaptive_dt(state, config, field)
        try:
            state = _advance(state, dt, method, field, config)
        except StepRejected as e:
            cause = StopCause.BLOW_UP
            message = f"step rejected at dt_min ({e})"
            logger.error(f"Run stopped at step {state.step}: {message}")
            break
        field = curvature_field(state.surface, m_max)

        if config.remesh_enabled and state.step - last_remesh >= policy.cooldown and (
                (policy.every and state.step % policy.every == 0) or remesh_needed(state.surface, policy, field)):
            last_remesh = state.step
            try:
                candidate = remesh(state.surface, policy, field)
            except FlowError as e:
                logger.warning(f"Remesh at step {state.step} rejected: {e}")
                candidate = None
            if candidate is not None:
                new_field = curvature_field(candidate, m_max)
                old_area, new_area = total_area(state.surface), total_area(candidate)
                drift = {"area": _relative_change(old_area, new_area),
                         "int_Ao2": _relative_change(_weighted_integral(state.surface, field.norm_tracelessA_sq),
                                                     _weighted_integral(candidate, new_field.norm_tracelessA_sq))}
                for m, values in field.grad_A.items():
                    drift[f"int_grad{m}A2"] = _relative_change(_weighted_integral(state.surface, values ** 2),
                                                               _weighted_integral(candidate, new_field.grad_A[m] ** 2))
                events.append(RemeshEvent(state.step, drift["area"], drift["int_Ao2"]))
                logger.info(f"Remesh at step {state.step}: area drift {drift['area']:.2e}, "
                            f"∫|Å|² drift {drift['int_Ao2']:.2e}")
                if abs(drift["area"]) > AREA_DRIFT_LIMIT or abs(drift["int_Ao2"]) > ENERGY_DRIFT_LIMIT:
                    logger.warning(f"Remesh drift above tolerance at step {state.step}")
                if state.mode == FlowMode.NORMALIZED:
                    candidate, _ = renormalize_area(candidate, state.target_area)
                    new_field = curvature_field(candidate, m_max)
                state = replace(state, surface=candidate)
                field = new_field

        if config.snapshot_every and state.step % config.snapshot_every == 0:
            snapshots.append(Snapshot(state.step, state.t, state.t_tilde, state.psi, state.surface))

    if not records or records[-1].step != state.step:
        records.append(diagnostics.record(state, field, checks, with_diameter=True, remesh_drift=drift))
    if snapshots[-1].step != state.step:
        snapshots.append(Snapshot(state.step, state.t, state.t_tilde, state.psi, state.surface))
    logger.info(f"Run finished after {state.step} steps at t={state.t:.6g}: {cause.value}"
                + (f" ({message})" if message else ""))
    return RunResult(records, snapshots, cause, state, events, initial_max_A, message)


def neck_radius(surface: AxiProfileSurface, bulb_separation: float) -> float:
    """Minimum r over nodes lying between the bulb centres."""
    x, r = surface.nodes[:, 0], surface.nodes[:, 1]
    between = np.abs(x) <= 0.5 * bulb_separation
    return float(np.min(r[between])) if np.any(between) else float("nan")

