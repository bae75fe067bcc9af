"""Snapshot and curvature file formats: OBJ meshes, profile CSV and curvature CSV."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import trimesh
from loguru import logger

from mcflab.curvature import CurvatureField, curvature_field
from mcflab.geometry import AxiProfileSurface, Hypersurface, TriMeshSurface
from mcflab.mcflab_common import Backend, ExportFormat, McfLabError

ANGULAR_SAMPLES = 64
OBJ_DIGITS = 17
PROFILE_COLUMNS = ["s", "x", "r"]


def revolve_profile(surface: AxiProfileSurface, samples: int = ANGULAR_SAMPLES) -> TriMeshSurface:
    """
    Tessellate a surface of revolution in R^3 (the first rotational direction
    when n > 2) with ``samples`` points per parallel and one vertex per pole.
    """
    x, r = surface.nodes[:, 0], surface.nodes[:, 1]
    phi = 2.0 * np.pi * np.arange(samples) / samples
    rings = np.arange(1, surface.num_nodes - 1)
    ring_points = np.column_stack([np.repeat(x[rings], samples),
                                   np.outer(r[rings], np.cos(phi)).ravel(),
                                   np.outer(r[rings], np.sin(phi)).ravel()])
    left = np.array([[x[0], 0.0, 0.0]])
    right = np.array([[x[-1], 0.0, 0.0]])
    vertices = np.vstack([left, ring_points, right])
    last = len(vertices) - 1

    def ring(k: int, j: np.ndarray) -> np.ndarray:
        return 1 + k * samples + (j % samples)

    j = np.arange(samples)
    faces = [np.column_stack([np.zeros(samples, dtype=np.int64), ring(0, j + 1), ring(0, j)])]
    for k in range(len(rings) - 1):
        faces.append(np.column_stack([ring(k, j), ring(k, j + 1), ring(k + 1, j + 1)]))
        faces.append(np.column_stack([ring(k, j), ring(k + 1, j + 1), ring(k + 1, j)]))
    k = len(rings) - 1
    faces.append(np.column_stack([ring(k, j), ring(k, j + 1), np.full(samples, last)]))
    triangles = np.vstack(faces)
    mesh = TriMeshSurface.from_arrays(vertices, triangles)
    # orientation follows the winding of φ; flip when the signed volume is negative
    v = mesh.vertices[mesh.triangles]
    if np.einsum("ij,ij->", v[:, 0], np.cross(v[:, 1], v[:, 2])) < 0:
        mesh = TriMeshSurface.from_arrays(vertices, triangles[:, [0, 2, 1]])
    return mesh


def write_obj(surface: Hypersurface, path: Path, samples: int = ANGULAR_SAMPLES) -> Path:
    """OBJ with "v x y z" and 1-based "f i j k" lines; profiles are revolved first."""
    mesh = surface if surface.backend == Backend.MESH else revolve_profile(surface, samples)
    text = trimesh.exchange.obj.export_obj(trimesh.Trimesh(vertices=mesh.vertices, faces=mesh.triangles,
                                                           process=False),
                                           include_normals=False, include_color=False, include_texture=False,
                                           digits=OBJ_DIGITS)
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def read_obj(path: Path) -> TriMeshSurface:
    mesh = trimesh.load_mesh(Path(path), file_type="obj", process=False, maintain_order=True)
    return TriMeshSurface.from_arrays(np.asarray(mesh.vertices), np.asarray(mesh.faces))


def write_profile_csv(surface: AxiProfileSurface, path: Path) -> Path:
    if surface.backend != Backend.AXI:
        raise McfLabError("Profile CSV export needs an axi surface")
    frame = pd.DataFrame({"s": surface.arc_coordinate(), "x": surface.nodes[:, 0], "r": surface.nodes[:, 1]})
    frame.to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def read_profile_csv(path: Path, n: int) -> AxiProfileSurface:
    frame = pd.read_csv(path)
    if list(frame.columns) != PROFILE_COLUMNS:
        raise McfLabError(f"{path} is not a profile CSV (header {','.join(frame.columns)})")
    return AxiProfileSurface.from_nodes(n, frame[["x", "r"]].to_numpy())


def curvature_frame(field: CurvatureField) -> pd.DataFrame:
    """One row per node: node,H,k1..kn,normA2,normAo2,gradA,grad2A,grad3A (absent orders empty)."""
    data = {"node": np.arange(field.num_nodes), "H": field.mean_curvature}
    for i in range(field.n):
        data[f"k{i + 1}"] = field.principal_curvatures[:, i]
    data["normA2"] = field.norm_A_sq
    data["normAo2"] = field.norm_tracelessA_sq
    for m, column in ((1, "gradA"), (2, "grad2A"), (3, "grad3A")):
        data[column] = field.grad_A[m] if m in field.grad_A else np.full(field.num_nodes, np.nan)
    return pd.DataFrame(data)


def write_curvature_csv(field: CurvatureField, path: Path) -> Path:
    curvature_frame(field).to_csv(path, index=False, na_rep="", float_format="%.17g")
    return Path(path)


def write_snapshot(surface: Hypersurface, path_stem: Path) -> Path:
    """Native snapshot file: OBJ for meshes, profile CSV for profiles."""
    path_stem = Path(path_stem)
    if surface.backend == Backend.MESH:
        return write_obj(surface, path_stem.with_suffix(".obj"))
    return write_profile_csv(surface, path_stem.with_suffix(".csv"))


def read_snapshot(path: Path, backend: Backend, n: int) -> Hypersurface:
    if backend == Backend.MESH:
        return read_obj(path)
    return read_profile_csv(path, n)


def export_surface(surface: Hypersurface, fmt: ExportFormat, path_stem: Path,
                   m_max: Optional[int] = None) -> Path:
    """Write one surface in the requested format; the suffix is chosen from the format."""
    path_stem = Path(path_stem)
    if fmt == ExportFormat.OBJ:
        path = write_obj(surface, path_stem.with_suffix(".obj"))
    elif fmt == ExportFormat.PROFILE_CSV:
        if surface.backend != Backend.AXI:
            raise McfLabError("profile-csv export needs an axi run")
        path = write_profile_csv(surface, path_stem.with_suffix(".csv"))
    else:
        order = m_max if m_max is not None else (2 if surface.backend == Backend.AXI else 1)
        path = write_curvature_csv(curvature_field(surface, order), path_stem.with_suffix(".csv"))
    logger.debug(f"Exported {fmt.value} to {path}")
    return path
