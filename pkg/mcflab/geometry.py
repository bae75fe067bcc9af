"""
Discrete closed hypersurfaces.

Two representations share one interface:

* ``TriMeshSurface``: an oriented closed triangle mesh in R^3 (n = 2) with
  barycentric lumped vertex weights.
* ``AxiProfileSurface``: the profile curve (x, r) of a surface of revolution
  about the x-axis in R^{n+1}, with r = 0 exactly at both poles.

Constructors for the standard initial surfaces, the total area, the intrinsic
diameter and the structural validator live here as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import networkx as nx
import numpy as np
from loguru import logger
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull
from scipy.special import eval_legendre, lpmv

from mcflab.mcflab_common import Backend, GeometryError, unit_sphere_area

MESH_MIN_RESOLUTION = 12
AXI_MIN_RESOLUTION = 16
MAX_SPACING_RATIO = 4.0
ALL_PAIRS_LIMIT = 400
DEGENERATE_AREA_FRACTION = 1e-12
# generic direction, avoids rays through mesh edges of symmetric meshes
RAY_DIRECTION = np.array([0.5897, 0.5702, 0.5720]) / np.linalg.norm([0.5897, 0.5702, 0.5720])


@dataclass(frozen=True, eq=False)
class TriMeshSurface:
    """Closed oriented triangle mesh with outward (counter-clockwise) faces."""
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_weights: np.ndarray

    @property
    def backend(self) -> Backend:
        return Backend.MESH

    @property
    def n(self) -> int:
        return 2

    @property
    def num_nodes(self) -> int:
        return len(self.vertices)

    @property
    def positions(self) -> np.ndarray:
        return self.vertices

    @property
    def node_weights(self) -> np.ndarray:
        return self.vertex_weights

    @classmethod
    def from_arrays(cls, vertices: np.ndarray, triangles: np.ndarray) -> TriMeshSurface:
        """Build a mesh and its lumped weights from vertex and triangle arrays."""
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        return cls(vertices, triangles, barycentric_weights(vertices, triangles))

    def with_positions(self, vertices: np.ndarray) -> TriMeshSurface:
        return TriMeshSurface.from_arrays(vertices, self.triangles)

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_cross(self) -> np.ndarray:
        """Unnormalized face normals (twice the area vector)."""
        v = self.vertices
        t = self.triangles
        return np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) array."""
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(directed, axis=1), axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def mean_spacing(self) -> float:
        return float(np.mean(self.edge_lengths()))

    def min_spacing(self) -> float:
        return float(np.min(self.edge_lengths()))


@dataclass(frozen=True, eq=False)
class AxiProfileSurface:
    """
    Profile of a surface of revolution in R^{n+1}.

    ``nodes`` has shape (N, 2) with columns (x, r). Nodes run from the left pole
    to the right pole so the outward normal is (-r', x') / |γ'|.
    """
    n: int
    nodes: np.ndarray
    node_weights: np.ndarray = field(repr=False)

    @property
    def backend(self) -> Backend:
        return Backend.AXI

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return self.nodes

    @classmethod
    def from_nodes(cls, n: int, nodes: np.ndarray) -> AxiProfileSurface:
        """Build a profile and its rotational node weights. Pole radii are snapped to zero."""
        nodes = np.array(nodes, dtype=float)
        nodes[0, 1] = 0.0
        nodes[-1, 1] = 0.0
        return cls(n, nodes, profile_weights(n, nodes))

    def with_positions(self, nodes: np.ndarray) -> AxiProfileSurface:
        return AxiProfileSurface.from_nodes(self.n, nodes)

    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)

    def arc_coordinate(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths())])

    def mean_spacing(self) -> float:
        return float(np.mean(self.segment_lengths()))

    def min_spacing(self) -> float:
        return float(np.min(self.segment_lengths()))

    def spacing_ratio(self) -> float:
        ds = self.segment_lengths()
        return float(np.max(ds) / np.min(ds)) if np.min(ds) > 0 else float("inf")


Hypersurface = Union[TriMeshSurface, AxiProfileSurface]


@dataclass(frozen=True)
class Violation:
    """One broken structural invariant."""
    kind: str
    message: str
    indices: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def barycentric_weights(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Lumped vertex areas: one third of every incident triangle."""
    cross = np.cross(vertices[triangles[:, 1]] - vertices[triangles[:, 0]],
                     vertices[triangles[:, 2]] - vertices[triangles[:, 0]])
    third = np.linalg.norm(cross, axis=1) / 6.0
    return np.bincount(triangles.ravel(), weights=np.repeat(third, 3), minlength=len(vertices))


def profile_weights(n: int, nodes: np.ndarray) -> np.ndarray:
    """
    Rotational node weights ω_{n-1} r^{n-1} (ds_{i-1/2} + ds_{i+1/2}) / 2.

    The weights are zero at the poles where r = 0.
    """
    ds = np.linalg.norm(np.diff(nodes, axis=0), axis=1)
    half = np.zeros(len(nodes))
    half[:-1] += 0.5 * ds
    half[1:] += 0.5 * ds
    r = np.clip(nodes[:, 1], 0.0, None)
    return unit_sphere_area(n - 1) * r ** (n - 1) * half


def total_area(surface: Hypersurface) -> float:
    """Area of the surface as the sum of its node weights."""
    area = float(np.sum(surface.node_weights))
    if not area > 0.0:
        raise GeometryError(f"Surface has non-positive area {area}")
    return area


def area_centroid(surface: Hypersurface) -> np.ndarray:
    """Weighted centroid of the nodes. For profiles the r-coordinate is 0 by symmetry."""
    w = surface.node_weights
    c = (w[:, None] * surface.positions).sum(axis=0) / w.sum()
    if surface.backend == Backend.AXI:
        c[1] = 0.0
    return c


def translate(surface: Hypersurface, offset: np.ndarray) -> Hypersurface:
    """Translate a mesh, or slide a profile along its axis."""
    offset = np.asarray(offset, dtype=float).copy()
    if surface.backend == Backend.AXI:
        offset[1] = 0.0
    return surface.with_positions(surface.positions + offset)


def rigid_motion(surface: TriMeshSurface, rotation: np.ndarray, translation: np.ndarray) -> TriMeshSurface:
    """Apply x -> R x + b to a mesh."""
    return surface.with_positions(surface.vertices @ np.asarray(rotation).T + np.asarray(translation))


def scale(surface: Hypersurface, factor: float) -> Hypersurface:
    """Dilate about the origin."""
    return surface.with_positions(surface.positions * factor)


def _fibonacci_sphere(count: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit sphere mesh from a Fibonacci lattice and its convex hull, oriented outward."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    rho = np.sqrt(1.0 - z * z)
    points = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    hull = ConvexHull(points)
    triangles = hull.simplices.copy()
    v = points[triangles]
    normal = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    inward = np.einsum("ij,ij->i", normal, v.sum(axis=1)) < 0
    triangles[inward] = triangles[inward][:, [0, 2, 1]]
    return points, triangles


def _axis_angles(resolution: int) -> np.ndarray:
    return np.linspace(0.0, np.pi, resolution)


def _check_resolution(backend: Backend, resolution: int) -> None:
    minimum = MESH_MIN_RESOLUTION if backend == Backend.MESH else AXI_MIN_RESOLUTION
    if resolution < minimum:
        raise GeometryError(f"Resolution {resolution} below the {backend.value} minimum {minimum}")


def build_sphere(backend: Backend, n: int, radius: float, resolution: int) -> Hypersurface:
    """
    Round sphere of the given radius centred at the origin.

    Args:
        backend: mesh (n must be 2) or axi
        n: surface dimension
        radius: sphere radius, > 0
        resolution: vertex count (mesh) or profile node count (axi)
    """
    _check_dimension(backend, n)
    _check_resolution(backend, resolution)
    if not radius > 0:
        raise GeometryError(f"Sphere radius must be positive, got {radius}")
    if backend == Backend.MESH:
        points, triangles = _fibonacci_sphere(resolution)
        return TriMeshSurface.from_arrays(radius * points, triangles)
    theta = _axis_angles(resolution)
    nodes = np.column_stack([-radius * np.cos(theta), radius * np.sin(theta)])
    return AxiProfileSurface.from_nodes(n, nodes)


def _check_dimension(backend: Backend, n: int) -> None:
    if n < 2:
        raise GeometryError(f"Surface dimension must be at least 2, got {n}")
    if backend == Backend.MESH and n != 2:
        raise GeometryError("The mesh backend only supports n = 2")


def _real_harmonic(order_l: int, order_m: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Real spherical harmonic of degree l and order m, scaled to sup-norm 1 on the grid."""
    values = lpmv(abs(order_m), order_l, np.cos(theta))
    if order_m > 0:
        values = values * np.cos(order_m * phi)
    elif order_m < 0:
        values = values * np.sin(-order_m * phi)
    peak = np.max(np.abs(values))
    return values / peak if peak > 0 else values


def build_perturbed_sphere(backend: Backend, n: int, radius: float, mode: int, amplitude: float,
                           resolution: int, order: int = 0, noise: float = 0.0,
                           seed: int = 0) -> Hypersurface:
    """
    Radial graph ρ = R (1 + δ Y) over the round sphere.

    For profiles Y is the Legendre polynomial P_l(cos θ); for meshes a real
    spherical harmonic of degree l and order ``order`` scaled to sup-norm 1.
    With amplitude 0 the nodes coincide with ``build_sphere``.
    ``noise`` adds seeded uniform radial jitter of that relative size.
    """
    _check_dimension(backend, n)
    _check_resolution(backend, resolution)
    if not isinstance(mode, (int, np.integer)) or mode < 2:
        raise GeometryError(f"Unsupported perturbation mode {mode}; need an integer l >= 2")
    if abs(amplitude) >= 0.5:
        raise GeometryError(f"Perturbation amplitude {amplitude} must satisfy |δ| < 0.5")
    if abs(order) > mode:
        raise GeometryError(f"Harmonic order {order} exceeds degree {mode}")
    rng = np.random.default_rng(seed)
    if backend == Backend.MESH:
        points, triangles = _fibonacci_sphere(resolution)
        theta = np.arccos(np.clip(points[:, 2], -1.0, 1.0))
        phi = np.arctan2(points[:, 1], points[:, 0])
        rho = radius * (1.0 + amplitude * _real_harmonic(mode, order, theta, phi))
        if noise:
            rho = rho * (1.0 + noise * rng.uniform(-1.0, 1.0, len(rho)))
        return TriMeshSurface.from_arrays(rho[:, None] * points, triangles)
    theta = _axis_angles(resolution)
    rho = radius * (1.0 + amplitude * eval_legendre(mode, np.cos(theta)))
    if noise:
        rho = rho * (1.0 + noise * rng.uniform(-1.0, 1.0, len(rho)))
    nodes = np.column_stack([-rho * np.cos(theta), rho * np.sin(theta)])
    return AxiProfileSurface.from_nodes(n, nodes)


def build_ellipsoid(a: float, b: float, c: float, resolution: int) -> TriMeshSurface:
    """Mesh of the ellipsoid with semi-axes (a, b, c) along (x, y, z)."""
    _check_resolution(Backend.MESH, resolution)
    if min(a, b, c) <= 0:
        raise GeometryError(f"Ellipsoid semi-axes must be positive, got {(a, b, c)}")
    points, triangles = _fibonacci_sphere(resolution)
    return TriMeshSurface.from_arrays(points * np.array([a, b, c]), triangles)


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 on u <= 0 to 1 on u >= 1."""
    u = np.clip(u, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        f0 = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        f1 = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return f0 / (f0 + f1)


def build_dumbbell(n: int, neck_radius: float, bulb_radius: float, bulb_separation: float,
                   resolution: int) -> AxiProfileSurface:
    """
    Two spherical bulbs joined by a cylindrical neck, smoothly blended.

    Bulbs of radius b sit at x = ±c with c = separation / 2. The neck r = a
    spans |x| <= x0 = c - sqrt(b² - a²) and blends into the bulbs on [x0, c].
    If the bulbs overlap so much that no neck fits (x0 <= 0), the convex hull is
    returned instead: the spheroid with semi-axes (c + b, b).
    """
    _check_resolution(Backend.AXI, resolution)
    _check_dimension(Backend.AXI, n)
    a, b, c = neck_radius, bulb_radius, bulb_separation / 2.0
    if not (0 < a < b):
        raise GeometryError(f"Dumbbell needs 0 < neck_radius < bulb_radius, got {a}, {b}")
    if not c > 0:
        raise GeometryError(f"Dumbbell bulb separation must be positive, got {bulb_separation}")
    x0 = c - np.sqrt(b * b - a * a)
    if x0 <= 0:
        logger.info(f"Bulbs overlap (a={a}, b={b}, c={c}); building the spheroid hull")
        theta = _axis_angles(resolution)
        nodes = np.column_stack([-(c + b) * np.cos(theta), b * np.sin(theta)])
        return AxiProfileSurface.from_nodes(n, nodes)

    dense = 40 * resolution
    alpha = np.linspace(0.0, np.pi / 2.0, dense)
    left_cap = np.column_stack([-c - b * np.cos(alpha), b * np.sin(alpha)])
    x = np.linspace(-c, c, 2 * dense)[1:-1]
    bulb = np.sqrt(np.clip(b * b - (np.abs(x) - c) ** 2, 0.0, None))
    blend = _smooth_step((np.abs(x) - x0) / (c - x0))
    middle = np.column_stack([x, a + blend * (bulb - a)])
    right_cap = np.column_stack([c + b * np.cos(alpha[::-1]), b * np.sin(alpha[::-1])])
    polyline = np.vstack([left_cap, middle, right_cap])
    nodes = resample_polyline(polyline, resolution)
    return AxiProfileSurface.from_nodes(n, nodes)


def _with_mirror_ghosts(nodes: np.ndarray, count: int) -> tuple[np.ndarray, int]:
    """Extend a profile by reflecting ``count`` nodes through each pole (r -> -r)."""
    count = min(count, len(nodes) - 1)
    left = nodes[1:count + 1][::-1] * np.array([1.0, -1.0])
    right = nodes[-count - 1:-1][::-1] * np.array([1.0, -1.0])
    return np.vstack([left, nodes, right]), count


def resample_polyline(points: np.ndarray, num_nodes: int,
                      density: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Resample a pole-to-pole profile to ``num_nodes`` nodes.

    A cubic spline in chord length (with mirrored ghost nodes so the poles stay
    smooth) is evaluated at points equidistributing ``density`` (per input
    point, uniform when None). The end nodes are the original poles.
    """
    points = np.asarray(points, dtype=float)
    keep = np.concatenate([[True], np.linalg.norm(np.diff(points, axis=0), axis=1) > 0])
    points = points[keep]
    if density is not None:
        density = np.asarray(density, dtype=float)[keep]
    extended, ghosts = _with_mirror_ghosts(points, 3)
    s_ext = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(extended, axis=0), axis=1))])
    s = s_ext[ghosts:ghosts + len(points)]
    spline = CubicSpline(s_ext, extended, axis=0)
    if density is None:
        targets = np.linspace(s[0], s[-1], num_nodes)
    else:
        mass = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(s))])
        targets = np.interp(np.linspace(0.0, mass[-1], num_nodes), mass, s)
    nodes = spline(targets)
    nodes[0] = points[0]
    nodes[-1] = points[-1]
    nodes[[0, -1], 1] = 0.0
    return nodes


def _mesh_graph(surface: TriMeshSurface) -> nx.Graph:
    """Edge graph plus the diagonals across each pair of adjacent triangles."""
    v = surface.vertices
    graph = nx.Graph()
    graph.add_nodes_from(range(surface.num_nodes))
    edges = surface.edges()
    lengths = np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1)
    graph.add_weighted_edges_from(zip(edges[:, 0].tolist(), edges[:, 1].tolist(), lengths.tolist()))
    opposite: dict[tuple[int, int], list[int]] = {}
    for tri in surface.triangles.tolist():
        for k in range(3):
            i, j, o = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            opposite.setdefault((min(i, j), max(i, j)), []).append(o)
    for pair in opposite.values():
        if len(pair) == 2 and pair[0] != pair[1] and not graph.has_edge(*pair):
            graph.add_edge(pair[0], pair[1], weight=float(np.linalg.norm(v[pair[0]] - v[pair[1]])))
    return graph


def intrinsic_diameter(surface: Hypersurface) -> float:
    """
    Maximum geodesic distance between two points of the surface.

    Profiles: the meridian from pole to pole realizes it (the profile length).
    Meshes: shortest paths on the edge graph with flap diagonals; all pairs up to
    ``ALL_PAIRS_LIMIT`` vertices, an iterated farthest-point sweep above that.
    """
    if surface.backend == Backend.AXI:
        return float(np.sum(surface.segment_lengths()))
    graph = _mesh_graph(surface)
    if not nx.is_connected(graph):
        raise GeometryError("Mesh is disconnected; the intrinsic diameter is undefined")
    if surface.num_nodes <= ALL_PAIRS_LIMIT:
        return float(max(max(lengths.values())
                         for _, lengths in nx.all_pairs_dijkstra_path_length(graph)))
    source, best = 0, 0.0
    for _ in range(4):
        lengths = nx.single_source_dijkstra_path_length(graph, source)
        far, dist = max(lengths.items(), key=lambda item: item[1])
        if dist <= best:
            break
        best, source = dist, far
    return float(best)


def _validate_mesh(surface: TriMeshSurface) -> list[Violation]:
    violations = []
    v, t = surface.vertices, surface.triangles
    if not np.all(np.isfinite(v)):
        violations.append(Violation("non-finite", "Non-finite vertex coordinates"))
        return violations
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    undirected, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
    open_edges = undirected[counts == 1]
    if len(open_edges):
        violations.append(Violation("open edge", f"{len(open_edges)} edges have a single triangle",
                                    tuple(map(tuple, open_edges.tolist()))))
    non_manifold = undirected[counts > 2]
    if len(non_manifold):
        violations.append(Violation("non-manifold edge", f"{len(non_manifold)} edges have more than two triangles",
                                    tuple(map(tuple, non_manifold.tolist()))))
    unique_directed, directed_counts = np.unique(directed, axis=0, return_counts=True)
    flipped = unique_directed[directed_counts > 1]
    if len(flipped):
        violations.append(Violation("inconsistent orientation",
                                    f"{len(flipped)} directed edges appear twice",
                                    tuple(map(tuple, flipped.tolist()))))
    areas = surface.triangle_areas()
    degenerate = np.flatnonzero(areas <= DEGENERATE_AREA_FRACTION * np.mean(areas))
    if len(degenerate):
        violations.append(Violation("degenerate triangle", f"{len(degenerate)} triangles have ~zero area",
                                    tuple(degenerate.tolist())))
    w = surface.vertex_weights
    bad_weights = np.flatnonzero(~(w > 0))
    if len(bad_weights):
        violations.append(Violation("non-positive weight", f"{len(bad_weights)} vertices have weight <= 0",
                                    tuple(bad_weights.tolist())))
    expected = barycentric_weights(v, t).sum()
    if not np.isclose(w.sum(), expected, rtol=1e-9):
        violations.append(Violation("weight sum", f"Weights sum to {w.sum()} but the area is {expected}"))
    return violations


def _validate_profile(surface: AxiProfileSurface) -> list[Violation]:
    violations = []
    nodes = surface.nodes
    if surface.n < 2:
        violations.append(Violation("dimension", f"Surface dimension {surface.n} < 2"))
    if len(nodes) < 3:
        violations.append(Violation("too few nodes", f"Profile has {len(nodes)} nodes"))
        return violations
    if not np.all(np.isfinite(nodes)):
        violations.append(Violation("non-finite", "Non-finite profile coordinates"))
        return violations
    if nodes[0, 1] != 0.0 or nodes[-1, 1] != 0.0:
        violations.append(Violation("pole off axis", "End nodes must have r = 0", (0, len(nodes) - 1)))
    interior = np.flatnonzero(nodes[1:-1, 1] <= 0.0) + 1
    if len(interior):
        violations.append(Violation("interior pole", f"{len(interior)} interior nodes have r <= 0",
                                    tuple(interior.tolist())))
    ds = surface.segment_lengths()
    if np.any(ds <= 0):
        violations.append(Violation("coincident nodes", "Zero-length profile segment",
                                    tuple(np.flatnonzero(ds <= 0).tolist())))
    elif np.max(ds) / np.min(ds) > MAX_SPACING_RATIO:
        violations.append(Violation("spacing ratio", f"Spacing ratio {np.max(ds) / np.min(ds):.2f} "
                                                     f"exceeds {MAX_SPACING_RATIO}"))
    w = surface.node_weights
    bad_weights = np.flatnonzero(~(w[1:-1] > 0)) + 1
    if len(bad_weights):
        violations.append(Violation("non-positive weight", f"{len(bad_weights)} interior weights <= 0",
                                    tuple(bad_weights.tolist())))
    expected = profile_weights(surface.n, nodes).sum()
    if not np.isclose(w.sum(), expected, rtol=1e-9):
        violations.append(Violation("weight sum", f"Weights sum to {w.sum()} but the area is {expected}"))
    return violations


def validate(surface: Hypersurface) -> ValidationReport:
    """Check the structural invariants of a surface; returns every violation found."""
    if surface.backend == Backend.MESH:
        violations = _validate_mesh(surface)
    else:
        violations = _validate_profile(surface)
    for violation in violations:
        logger.debug(f"Validation: {violation.kind}: {violation.message}")
    return ValidationReport(violations)


def is_degenerate(surface: Hypersurface, reference: Optional[Hypersurface] = None) -> bool:
    """
    Cheap post-step sanity test.

    True for non-finite positions, collapsed triangles or segments, interior
    profile nodes on the axis, or faces whose orientation flipped with respect
    to ``reference``.
    """
    positions = surface.positions
    if not np.all(np.isfinite(positions)):
        return True
    if surface.backend == Backend.AXI:
        return bool(np.any(positions[1:-1, 1] <= 0.0) or np.any(surface.segment_lengths() <= 0.0))
    cross = surface.face_cross()
    areas = np.linalg.norm(cross, axis=1)
    if np.any(areas <= DEGENERATE_AREA_FRACTION * np.mean(areas)):
        return True
    if reference is not None:
        return bool(np.any(np.einsum("ij,ij->i", cross, reference.face_cross()) <= 0.0))
    return False


def _ray_hits(origin: np.ndarray, direction: np.ndarray, v0: np.ndarray, v1: np.ndarray,
              v2: np.ndarray) -> np.ndarray:
    """Möller-Trumbore ray/triangle test, vectorized over triangles; hits with t > 0."""
    e1, e2 = v1 - v0, v2 - v0
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - v0
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    w = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    return ok & (u >= 0) & (w >= 0) & (u + w <= 1) & (t > 0)


def encloses_origin(surface: Hypersurface) -> bool:
    """True when the origin lies strictly inside the region bounded by the surface."""
    if surface.backend == Backend.AXI:
        x = surface.nodes[:, 0]
        # the profile meets the axis only at the poles
        return bool(x[0] < 0.0 < x[-1])
    v = surface.vertices[surface.triangles]
    hits = _ray_hits(np.zeros(3), RAY_DIRECTION, v[:, 0], v[:, 1], v[:, 2])
    return bool(np.count_nonzero(hits) % 2 == 1)
