"""
Per-node curvature data on both backends.

Sign convention: ν points outward and H = Σκ_i, so a round sphere of radius R
has H = n/R > 0 and shrinks under ∂F/∂t = -Hν.

Profiles use the circle through each node and its two neighbours for the
normal and the profile curvature (exact on discrete circles), κ_rot = ν_r / r
with multiplicity n - 1, and full covariant derivative tensors of A in the
orthonormal frame (profile direction, rotational directions) built from
arc-length finite differences. Meshes use the cotangent operator for H, a
cubic jet fit over the 2-ring for the traceless part and per-edge least
squares for first derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from loguru import logger
from scipy import sparse

from mcflab.geometry import AxiProfileSurface, Hypersurface, TriMeshSurface, total_area
from mcflab.mcflab_common import Backend, CurvatureError, traceless_norm_sq, unit_sphere_area

AXI_MAX_ORDER = 3
MESH_MAX_ORDER = 1
ZERO_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Curvature of one surface, one entry per node."""
    n: int
    normal: np.ndarray
    mean_curvature: np.ndarray
    principal_curvatures: np.ndarray
    norm_A_sq: np.ndarray
    norm_tracelessA_sq: np.ndarray
    m_max: int
    grad_A: dict[int, np.ndarray] = field(default_factory=dict)  # m -> |∇^m A|
    grad_traceless: dict[int, np.ndarray] = field(default_factory=dict)  # m -> |∇^m Å|
    grad_H: Optional[np.ndarray] = None
    grad_abs_traceless: Optional[np.ndarray] = None  # |∇|Å||
    tangent: Optional[np.ndarray] = None  # profile tangent (axi only)

    @property
    def num_nodes(self) -> int:
        return len(self.mean_curvature)

    @property
    def norm_A(self) -> np.ndarray:
        return np.sqrt(self.norm_A_sq)

    @property
    def norm_traceless(self) -> np.ndarray:
        return np.sqrt(self.norm_tracelessA_sq)

    def with_traceless(self, values: np.ndarray) -> CurvatureField:
        """Copy with |Å|² replaced, used to inject defects in checks."""
        return replace(self, norm_tracelessA_sq=np.asarray(values, dtype=float))


def curvature_field(surface: Hypersurface, m_max: int = 1) -> CurvatureField:
    """
    Compute ν, H, κ_i, |A|², |Å|² and derivative norms up to order ``m_max``.

    Raises:
        CurvatureError: when m_max exceeds the backend capability (3 on profiles, 1 on meshes).
    """
    limit = AXI_MAX_ORDER if surface.backend == Backend.AXI else MESH_MAX_ORDER
    if not 0 <= m_max <= limit:
        raise CurvatureError(f"m_max={m_max} is not supported on the {surface.backend.value} backend "
                             f"(0..{limit})")
    if surface.backend == Backend.AXI:
        return _profile_field(surface, m_max)
    return _mesh_field(surface, m_max)


# ---------------------------------------------------------------------------
# profiles


def _circle_frame(nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Unit tangent, outward unit normal and signed curvature from the circle
    through each node and its neighbours. Pole neighbours are mirrored through the axis.
    """
    mirror = np.array([1.0, -1.0])
    ext = np.vstack([nodes[1] * mirror, nodes, nodes[-2] * mirror])
    a = ext[1:-1] - ext[:-2]
    b = ext[2:] - ext[1:-1]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(ext[2:] - ext[:-2], axis=1)
    # tangent of the circumscribed circle at the middle node
    tangent = a * (lb / la)[:, None] + b * (la / lb)[:, None]
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    kappa = -2.0 * cross / (la * lb * lc)
    return tangent, normal, kappa


def profile_frame(surface: AxiProfileSurface) -> tuple[np.ndarray, np.ndarray]:
    """Tangent and outward normal of the profile at every node."""
    tangent, normal, _ = _circle_frame(surface.nodes)
    return tangent, normal


def _fd_weights(h1: np.ndarray, h2: np.ndarray) -> tuple[tuple, tuple]:
    """Three-point first and second derivative weights on a nonuniform grid."""
    first = (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
    second = (2.0 / (h1 * (h1 + h2)), -2.0 / (h1 * h2), 2.0 / (h2 * (h1 + h2)))
    return first, second


def _bcast(w: np.ndarray, like: np.ndarray) -> np.ndarray:
    return w.reshape(w.shape + (1,) * (like.ndim - 1))


def arc_derivative(values: np.ndarray, s: np.ndarray, even: bool = False) -> np.ndarray:
    """
    d/ds of a nodal field (any trailing shape) on the arc coordinate ``s``.

    With ``even`` the field is treated as even through the poles, so the
    derivative vanishes there; otherwise one-sided second order stencils are used.
    """
    h = np.diff(s)
    out = np.empty_like(values, dtype=float)
    (wm, w0, wp), _ = _fd_weights(h[:-1], h[1:])
    out[1:-1] = (_bcast(wm, values[1:-1]) * values[:-2] + _bcast(w0, values[1:-1]) * values[1:-1]
                 + _bcast(wp, values[1:-1]) * values[2:])
    if even:
        out[0] = 0.0
        out[-1] = 0.0
        return out
    h1, h2 = h[0], h[1]
    out[0] = (-(2 * h1 + h2) / (h1 * (h1 + h2)) * values[0] + (h1 + h2) / (h1 * h2) * values[1]
              - h1 / (h2 * (h1 + h2)) * values[2])
    h1, h2 = h[-1], h[-2]
    out[-1] = ((2 * h1 + h2) / (h1 * (h1 + h2)) * values[-1] - (h1 + h2) / (h1 * h2) * values[-2]
               + h1 / (h2 * (h1 + h2)) * values[-3])
    return out


def arc_second_derivative(values: np.ndarray, s: np.ndarray) -> np.ndarray:
    """d²/ds² of a scalar field that is even through both poles."""
    h = np.diff(s)
    out = np.empty_like(values, dtype=float)
    _, (wm, w0, wp) = _fd_weights(h[:-1], h[1:])
    out[1:-1] = wm * values[:-2] + w0 * values[1:-1] + wp * values[2:]
    out[0] = 2.0 * (values[1] - values[0]) / h[0] ** 2
    out[-1] = 2.0 * (values[-2] - values[-1]) / h[-1] ** 2
    return out


def rotation_coefficient(surface: AxiProfileSurface, tangent: np.ndarray) -> np.ndarray:
    """r'/r along the profile; pole values copied from their neighbours."""
    r = surface.nodes[:, 1]
    g = np.empty(len(r))
    g[1:-1] = tangent[1:-1, 1] / r[1:-1]
    g[0] = g[1]
    g[-1] = g[-2]
    return g


def covariant_derivative(tensor: np.ndarray, s: np.ndarray, g: np.ndarray) -> np.ndarray:
    """
    ∇T for an O(n-1)-invariant tensor on a surface of revolution.

    ``tensor`` has shape (N, n, ..., n) in the orthonormal frame
    (e_0 = profile direction, e_a = rotational directions). The result gains a
    leading derivative index: (∇T)_{c i..} = δ_{c0} ∂_s T_{i..} - Σ T(.., ∇_{e_c} e_{i_j}, ..)
    with ∇_{e_a} e_a = -g e_0 and ∇_{e_a} e_0 = g e_a for a >= 1, g = r'/r.
    """
    num, n = tensor.shape[0], tensor.shape[1]
    rank = tensor.ndim - 1
    out = np.zeros((num, n) + tensor.shape[1:])
    out[:, 0] = arc_derivative(tensor, s)
    for slot in range(rank):
        t_slot = np.moveaxis(tensor, 1 + slot, 1)
        o_slot = np.moveaxis(out, 2 + slot, 2)
        gb = g.reshape((num,) + (1,) * (t_slot.ndim - 2))
        for a in range(1, n):
            o_slot[:, a, a] += gb * t_slot[:, 0]
            o_slot[:, a, 0] -= gb * t_slot[:, a]
    return out


def _fill_poles(values: np.ndarray, depth: int) -> np.ndarray:
    """Overwrite the ``depth`` nodes next to each pole with the first resolved interior value."""
    if depth <= 0 or 2 * depth >= len(values):
        return values
    values[:depth] = values[depth]
    values[-depth:] = values[-depth - 1]
    return values


def _tensor_norm(tensor: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(tensor.reshape(tensor.shape[0], -1) ** 2, axis=1))


def _profile_field(surface: AxiProfileSurface, m_max: int) -> CurvatureField:
    n = surface.n
    r = surface.nodes[:, 1]
    tangent, normal, kappa_p = _circle_frame(surface.nodes)
    kappa_rot = np.empty_like(kappa_p)
    kappa_rot[1:-1] = normal[1:-1, 1] / r[1:-1]
    kappa_rot[[0, -1]] = kappa_p[[0, -1]]
    kappa = np.column_stack([kappa_p] + [kappa_rot] * (n - 1))
    H = kappa.sum(axis=1)
    norm_A_sq = np.sum(kappa ** 2, axis=1)
    norm_Ao_sq = traceless_norm_sq(kappa)

    grad_A, grad_Ao = {}, {}
    grad_H = grad_abs_Ao = None
    if m_max >= 1:
        s = surface.arc_coordinate()
        g = rotation_coefficient(surface, tangent)
        diag = np.arange(n)
        A = np.zeros((len(r), n, n))
        A[:, diag, diag] = kappa
        Ao = A.copy()
        Ao[:, diag, diag] -= (H / n)[:, None]
        for m in range(1, m_max + 1):
            A = _fill_poles(covariant_derivative(A, s, g), m)
            Ao = _fill_poles(covariant_derivative(Ao, s, g), m)
            grad_A[m] = _tensor_norm(A)
            grad_Ao[m] = _tensor_norm(Ao)
        grad_H = np.abs(arc_derivative(H, s, even=True))
        grad_abs_Ao = np.abs(arc_derivative(np.sqrt(norm_Ao_sq), s, even=True))
    return CurvatureField(n=n, normal=normal, mean_curvature=H, principal_curvatures=kappa,
                          norm_A_sq=norm_A_sq, norm_tracelessA_sq=norm_Ao_sq, m_max=m_max,
                          grad_A=grad_A, grad_traceless=grad_Ao, grad_H=grad_H,
                          grad_abs_traceless=grad_abs_Ao, tangent=tangent)


# ---------------------------------------------------------------------------
# meshes


def cotan_weights(surface: TriMeshSurface) -> sparse.csr_matrix:
    """Symmetric matrix of edge weights (cot α + cot β) / 2."""
    v, t = surface.vertices, surface.triangles
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = t[:, k], t[:, (k + 1) % 3], t[:, (k + 2) % 3]
        e1, e2 = v[i] - v[o], v[j] - v[o]
        cot = np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)
        rows += [i, j]
        cols += [j, i]
        vals += [0.5 * cot, 0.5 * cot]
    size = surface.num_nodes
    return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(size, size)).tocsr()


def cotan_laplacian(surface: TriMeshSurface) -> sparse.csr_matrix:
    """Stiffness form of the Laplace-Beltrami operator: (L f)_i = Σ_j w_ij (f_j - f_i)."""
    w = cotan_weights(surface)
    return (w - sparse.diags(np.asarray(w.sum(axis=1)).ravel())).tocsr()


def mixed_voronoi_areas(surface: TriMeshSurface) -> np.ndarray:
    """Voronoi vertex areas, falling back to area fractions on obtuse triangles."""
    v, t = surface.vertices, surface.triangles
    p = v[t]
    areas = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    out = np.zeros(surface.num_nodes)
    cots, dots = [], []
    for k in range(3):
        e1 = p[:, (k + 1) % 3] - p[:, k]
        e2 = p[:, (k + 2) % 3] - p[:, k]
        dot = np.einsum("ij,ij->i", e1, e2)
        dots.append(dot)
        cots.append(dot / (2.0 * areas))
    obtuse = np.column_stack(dots) < 0
    any_obtuse = obtuse.any(axis=1)
    for k in range(3):
        j, o = (k + 1) % 3, (k + 2) % 3
        len_kj = np.sum((p[:, j] - p[:, k]) ** 2, axis=1)
        len_ko = np.sum((p[:, o] - p[:, k]) ** 2, axis=1)
        voronoi = (len_kj * cots[o] + len_ko * cots[j]) / 8.0
        share = np.where(any_obtuse, np.where(obtuse[:, k], areas / 2.0, areas / 4.0), voronoi)
        out += np.bincount(t[:, k], weights=share, minlength=surface.num_nodes)
    return out


def vertex_normals(surface: TriMeshSurface) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    cross = surface.face_cross()
    acc = np.zeros((surface.num_nodes, 3))
    for k in range(3):
        np.add.at(acc, surface.triangles[:, k], cross)
    return acc / np.linalg.norm(acc, axis=1)[:, None]


def _tangent_frames(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.tile([1.0, 0.0, 0.0], (len(normal), 1))
    helper[np.abs(normal[:, 0]) > 0.9] = [0.0, 1.0, 0.0]
    t1 = np.cross(normal, helper)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    return t1, np.cross(normal, t1)


def _adjacency(surface: TriMeshSurface) -> sparse.csr_matrix:
    e = surface.edges()
    size = surface.num_nodes
    ones = np.ones(2 * len(e))
    return sparse.coo_matrix((ones, (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
                             shape=(size, size)).tocsr()


def _padded_rows(matrix: sparse.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Column indices of each row padded to equal width, with a validity mask."""
    counts = np.diff(matrix.indptr)
    width = counts.max()
    row = np.repeat(np.arange(matrix.shape[0]), counts)
    col = np.arange(matrix.nnz) - matrix.indptr[row]
    index = np.zeros((matrix.shape[0], width), dtype=np.int64)
    mask = np.zeros((matrix.shape[0], width), dtype=bool)
    index[row, col] = matrix.indices
    mask[row, col] = True
    return index, mask


def _ring_neighbours(surface: TriMeshSurface, rings: int) -> tuple[np.ndarray, np.ndarray]:
    adj = _adjacency(surface)
    reach = adj.copy()
    for _ in range(rings - 1):
        reach = reach + reach @ adj
    reach = reach.tolil()
    reach.setdiag(0)
    reach = reach.tocsr()
    reach.eliminate_zeros()
    reach.sort_indices()
    return _padded_rows(reach)


def _jet_shape_operator(surface: TriMeshSurface, normal: np.ndarray, t1: np.ndarray,
                        t2: np.ndarray) -> np.ndarray:
    """
    Shape operator of a cubic height-function fit over the 2-ring, as a 2x2
    matrix in each vertex frame (t1, t2). Positive eigenvalues on convex regions.
    """
    index, mask = _ring_neighbours(surface, 2)
    d = surface.vertices[index] - surface.vertices[:, None, :]
    u = np.einsum("nkj,nj->nk", d, t1)
    v = np.einsum("nkj,nj->nk", d, t2)
    w = np.einsum("nkj,nj->nk", d, normal) * mask
    hs = np.sqrt(np.sum((u * u + v * v) * mask, axis=1) / mask.sum(axis=1))
    us, vs = u / hs[:, None], v / hs[:, None]
    design = np.stack([us, vs, us * us, us * vs, vs * vs,
                       us ** 3, us * us * vs, us * vs * vs, vs ** 3], axis=2) * mask[:, :, None]
    normal_matrix = np.einsum("nki,nkj->nij", design, design)
    scale = np.trace(normal_matrix, axis1=1, axis2=2) / 9.0
    ridge = np.zeros((len(hs), 9))
    ridge[:] = 1e-10 * scale[:, None]
    sparse_rows = mask.sum(axis=1) < 12
    ridge[sparse_rows, 5:] += scale[sparse_rows, None]
    normal_matrix[:, np.arange(9), np.arange(9)] += ridge
    rhs = np.einsum("nki,nk->ni", design, w)
    c = np.linalg.solve(normal_matrix, rhs[:, :, None])[:, :, 0]
    fu, fv = c[:, 0] / hs, c[:, 1] / hs
    fuu, fuv, fvv = 2.0 * c[:, 2] / hs ** 2, c[:, 3] / hs ** 2, 2.0 * c[:, 4] / hs ** 2
    first = np.stack([np.stack([1 + fu * fu, fu * fv], 1), np.stack([fu * fv, 1 + fv * fv], 1)], 1)
    root = np.sqrt(1.0 + fu * fu + fv * fv)
    second = np.stack([np.stack([fuu, fuv], 1), np.stack([fuv, fvv], 1)], 1) / root[:, None, None]
    # the surface bends away from the outward normal on convex regions
    return -np.linalg.solve(first, second)


def _least_squares_gradient(edge_uv: np.ndarray, mask: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    """Per-vertex gradient G solving min Σ_k |U_k G - D_k|² over masked neighbours."""
    U = edge_uv * mask[:, :, None]
    D = diffs * mask.reshape(mask.shape + (1,) * (diffs.ndim - 2))
    D = D.reshape(D.shape[0], D.shape[1], -1)
    gram = np.einsum("nki,nkj->nij", U, U)
    rhs = np.einsum("nki,nkc->nic", U, D)
    return np.linalg.solve(gram, rhs)


def _mesh_field(surface: TriMeshSurface, m_max: int) -> CurvatureField:
    normal = vertex_normals(surface)
    laplacian = cotan_laplacian(surface)
    areas = mixed_voronoi_areas(surface)
    mean_curvature_vector = (laplacian @ surface.vertices) / areas[:, None]
    H = -np.einsum("ij,ij->i", mean_curvature_vector, normal)

    t1, t2 = _tangent_frames(normal)
    shape = _jet_shape_operator(surface, normal, t1, t2)
    sym = 0.5 * (shape + np.transpose(shape, (0, 2, 1)))
    trace = shape[:, 0, 0] + shape[:, 1, 1]
    det = shape[:, 0, 0] * shape[:, 1, 1] - shape[:, 0, 1] * shape[:, 1, 0]
    half_gap = np.sqrt(np.clip(0.25 * trace ** 2 - det, 0.0, None))
    kappa = np.column_stack([0.5 * H + half_gap, 0.5 * H - half_gap])
    norm_A_sq = np.sum(kappa ** 2, axis=1)
    norm_Ao_sq = traceless_norm_sq(kappa)

    grad_A, grad_Ao = {}, {}
    grad_H = grad_abs_Ao = None
    if m_max >= 1:
        frame = np.stack([t1, t2], axis=2)  # (N, 3, 2)
        traceless = sym - 0.5 * (sym[:, 0, 0] + sym[:, 1, 1])[:, None, None] * np.eye(2)
        size = np.sqrt(np.sum(traceless ** 2, axis=(1, 2)))
        unit = np.where(size[:, None, None] > 0, traceless / np.where(size > 0, size, 1.0)[:, None, None], 0.0)
        # rescale so the frame tensor carries exactly the principal curvatures above
        Ao_frame = unit * (np.sqrt(2.0) * half_gap)[:, None, None]
        Ao_ambient = np.einsum("nia,nab,njb->nij", frame, Ao_frame, frame)
        P = np.einsum("nia,nja->nij", frame, frame)
        A_ambient = Ao_ambient + 0.5 * H[:, None, None] * P

        index, mask = _ring_neighbours(surface, 1)
        d = surface.vertices[index] - surface.vertices[:, None, :]
        edge_uv = np.stack([np.einsum("nkj,nj->nk", d, t1), np.einsum("nkj,nj->nk", d, t2)], axis=2)

        def tensor_gradient_norm(ambient: np.ndarray) -> np.ndarray:
            own = np.einsum("nia,nij,njb->nab", frame, ambient, frame)
            nbr = np.einsum("nia,nkij,njb->nkab", frame, ambient[index], frame)
            diffs = (nbr - own[:, None]).reshape(len(own), index.shape[1], 4)[:, :, [0, 1, 3]]
            grad = _least_squares_gradient(edge_uv, mask, diffs)
            return np.sqrt(np.sum(grad[:, :, [0, 2]] ** 2, axis=(1, 2)) + 2.0 * np.sum(grad[:, :, 1] ** 2, axis=1))

        def scalar_gradient_norm(values: np.ndarray) -> np.ndarray:
            grad = _least_squares_gradient(edge_uv, mask, (values[index] - values[:, None])[:, :, None])
            return np.linalg.norm(grad[:, :, 0], axis=1)

        grad_A[1] = tensor_gradient_norm(A_ambient)
        grad_Ao[1] = tensor_gradient_norm(Ao_ambient)
        grad_H = scalar_gradient_norm(H)
        grad_abs_Ao = scalar_gradient_norm(np.sqrt(norm_Ao_sq))
    return CurvatureField(n=2, normal=normal, mean_curvature=H, principal_curvatures=kappa,
                          norm_A_sq=norm_A_sq, norm_tracelessA_sq=norm_Ao_sq, m_max=m_max,
                          grad_A=grad_A, grad_traceless=grad_Ao, grad_H=grad_H,
                          grad_abs_traceless=grad_abs_Ao)


# ---------------------------------------------------------------------------
# operators and pointwise checks


def scalar_laplacian(surface: Hypersurface, values: np.ndarray, field: Optional[CurvatureField] = None) -> np.ndarray:
    """
    Laplace-Beltrami of a nodal scalar.

    Profiles: f'' + (n-1)(r'/r) f' in the interior and n f'' at the poles.
    Meshes: cotangent stiffness over mixed Voronoi areas.
    """
    if surface.backend == Backend.MESH:
        return (cotan_laplacian(surface) @ values) / mixed_voronoi_areas(surface)
    tangent = field.tangent if field is not None and field.tangent is not None else profile_frame(surface)[0]
    s = surface.arc_coordinate()
    first = arc_derivative(values, s, even=True)
    second = arc_second_derivative(values, s)
    out = second + (surface.n - 1) * rotation_coefficient(surface, tangent) * first
    out[[0, -1]] = surface.n * second[[0, -1]]
    return out


def tensor_norm_identity_check(field: CurvatureField) -> float:
    """Max over nodes of | |Å|² - (|A|² - H²/n) |."""
    residual = field.norm_tracelessA_sq - (field.norm_A_sq - field.mean_curvature ** 2 / field.n)
    return float(np.max(np.abs(residual)))


def effective_radius(surface: Hypersurface) -> float:
    """Radius of the round sphere with the same area."""
    return (total_area(surface) / unit_sphere_area(surface.n)) ** (1.0 / surface.n)


def _require_first_order(field: CurvatureField, check: str) -> None:
    if field.m_max < 1 or field.grad_abs_traceless is None:
        raise CurvatureError(f"{check} needs first derivative data (m_max >= 1)")


@dataclass(frozen=True)
class KatoReport:
    """Nodes where |∇|Å|| exceeds |∇Å| by more than the slack."""
    violations: list[tuple[int, float]]
    slack: float
    max_margin: float

    @property
    def ok(self) -> bool:
        return not self.violations


def kato_check(surface: Hypersurface, field: CurvatureField, slack_coeff: float = 10.0,
               slack_power: float = 2.0) -> KatoReport:
    """
    Pointwise |∇|Å|| <= |∇Å|.

    The slack is slack_coeff·(h/R)^slack_power·max|∇Å| with h the mean node
    spacing and R the area radius, plus a roundoff floor of 1e-9·max|A|².
    """
    _require_first_order(field, "kato_check")
    margin = field.grad_abs_traceless - field.grad_traceless[1]
    h = surface.mean_spacing() / effective_radius(surface)
    slack = slack_coeff * h ** slack_power * float(np.max(field.grad_traceless[1])) \
        + 1e-9 * float(np.max(field.norm_A_sq))
    weighted = surface.node_weights > 0
    nodes = np.flatnonzero((margin > slack) & weighted)
    violations = [(int(i), float(margin[i])) for i in nodes]
    if violations:
        logger.warning(f"Kato check: {len(violations)} nodes exceed slack {slack:.3e}")
    return KatoReport(violations, slack, float(np.max(margin[weighted])))


@dataclass(frozen=True)
class GradientPinchReport:
    """max |∇H|²/|∇Å|² against the bound n(n+2)/(2(n-1))."""
    ratio: Optional[float]
    bound: float
    slack: float
    qualifying_nodes: int

    @property
    def vacuous(self) -> bool:
        return self.ratio is None

    @property
    def ok(self) -> bool:
        return self.vacuous or self.ratio <= self.bound + self.slack


def gradient_pinch_bound(n: int) -> float:
    return n * (n + 2) / (2.0 * (n - 1))


def gradient_pinch_check(surface: Hypersurface, field: CurvatureField, threshold: float = ZERO_THRESHOLD,
                         slack: float = 0.1) -> GradientPinchReport:
    """
    Max over nodes of |∇H|²/|∇Å|², skipping nodes where |∇Å| < threshold·max|∇Å|
    or the measure weight vanishes. Reports "vacuous" when no node qualifies.
    """
    _require_first_order(field, "gradient_pinch_check")
    grad_ao = field.grad_traceless[1]
    peak = float(np.max(grad_ao))
    bound = gradient_pinch_bound(field.n)
    floor = max(threshold * peak, 1e-10 * float(np.max(field.norm_A_sq)))
    qualifying = (grad_ao > floor) & (surface.node_weights > 0)
    if not np.any(qualifying):
        logger.debug("Gradient pinch check is vacuous: |∇Å| vanishes")
        return GradientPinchReport(None, bound, slack, 0)
    ratio = float(np.max(field.grad_H[qualifying] ** 2 / grad_ao[qualifying] ** 2))
    if ratio > bound + slack:
        logger.warning(f"Gradient pinch ratio {ratio:.4f} exceeds {bound:.4f} + {slack}")
    return GradientPinchReport(ratio, bound, slack, int(np.count_nonzero(qualifying)))
