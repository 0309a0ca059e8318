"""Per-vertex compatibility forms and the global constraint matrix.

For each vertex star, the forms are an orthonormal basis of the left null
space of the local map from P1 displacements of the star to the star's edge
DOFs.  A DOF vector is compatible (the strain of some continuous P1 field
on a simply connected mesh) iff every form vanishes on it.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import MeshError, TetMesh, VertexPatch, vertex_patch
from .strain_space import p1_strain_operator

logger = logging.getLogger(__name__)


class ConstraintCountError(MeshError):
    """Null space dimension of a star differs from its Euler count."""


@dataclass
class PatchConstraintSet:
    center: int
    m: int
    edges: np.ndarray  # global edge indices of the star
    rows: np.ndarray  # (m, len(edges)), orthonormal


@dataclass
class ConstraintMatrix:
    matrix: sp.csr_matrix  # (sum m_a, n_edges)
    row_vertex: np.ndarray  # owning vertex of each row
    patches: list

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, d):
        return self.matrix @ d


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("STRAINFEM_THREADS", "1")))
    except ValueError:
        return 1


def patch_null_space(mesh: TetMesh, patch: VertexPatch, strain_op=None) -> tuple[np.ndarray, int]:
    """Orthonormal left null space of the star's P1-to-edge-DOF map, and its rank.

    Singular values below ``max(shape) * eps * s_max`` count as zero.
    """
    if strain_op is None:
        strain_op = p1_strain_operator(mesh)
    cols = (3 * patch.vertices[:, None] + np.arange(3)).ravel()
    local = strain_op[patch.edges][:, cols].toarray()
    u, s, _ = np.linalg.svd(local, full_matrices=True)
    tol = max(local.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    rank = int(np.count_nonzero(s > tol))
    return np.ascontiguousarray(u[:, rank:].T), rank


def patch_constraints(mesh: TetMesh, patch: VertexPatch, strain_op=None) -> PatchConstraintSet:
    """Compatibility forms of one vertex star, computed by SVD.

    The null space dimension must equal ``patch.expected_constraints`` and
    the rank must be ``3N - 6``; otherwise :class:`ConstraintCountError`.
    """
    if patch.A < 3 * patch.N - 6:
        raise ConstraintCountError(f"vertex {patch.center}: too few edges in star")
    rows, rank = patch_null_space(mesh, patch, strain_op)
    m = len(rows)
    if m != patch.expected_constraints or rank != 3 * patch.N - 6:
        raise ConstraintCountError(
            f"vertex {patch.center}: null space dimension {m} (rank {rank}) "
            f"but Euler count gives {patch.expected_constraints}"
        )
    return PatchConstraintSet(patch.center, m, patch.edges, rows)


def assemble_constraints(mesh: TetMesh, threads: int | None = None) -> ConstraintMatrix:
    """Stack the forms of every vertex star into one sparse matrix.

    Rows are ordered by vertex.  Rows from overlapping stars may be linearly
    dependent; nothing is removed.
    """
    strain_op = p1_strain_operator(mesh).tocsr()
    threads = thread_count() if threads is None else threads

    def one(a):
        return patch_constraints(mesh, vertex_patch(mesh, a), strain_op)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            patches = list(pool.map(one, range(mesh.n_vertices)))
    else:
        patches = [one(a) for a in range(mesh.n_vertices)]

    rows, cols, vals, owner = [], [], [], []
    r0 = 0
    for pc in patches:
        if pc.m == 0:
            continue
        rr = np.repeat(np.arange(r0, r0 + pc.m), len(pc.edges))
        rows.append(rr)
        cols.append(np.tile(pc.edges, pc.m))
        vals.append(pc.rows.ravel())
        owner.append(np.full(pc.m, pc.center))
        r0 += pc.m
    if r0:
        mat = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(r0, mesh.n_edges)
        )
        row_vertex = np.concatenate(owner)
    else:
        mat = sp.csr_matrix((0, mesh.n_edges))
        row_vertex = np.zeros(0, dtype=np.intp)
    logger.debug("assembled %d constraint rows over %d edges", r0, mesh.n_edges)
    return ConstraintMatrix(mat, row_vertex, patches)


def membership_residual(C: ConstraintMatrix, d) -> float:
    """``||C d|| / max(1, ||d||)``."""
    d = np.asarray(d, dtype=float)
    if C.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(C.matrix @ d) / max(1.0, np.linalg.norm(d)))


@dataclass(frozen=True)
class RankCheck:
    kernel_dim: int
    expected: int
    rank: int

    @property
    def passed(self) -> bool:
        return self.kernel_dim == self.expected


def global_rank_check(mesh: TetMesh, C: ConstraintMatrix) -> RankCheck:
    """Dense rank of ``C`` compared with ``3 * n_vertices - 6``.

    The mesh is assumed simply connected; on such meshes the kernel of ``C``
    is exactly the set of strains of P1 fields.
    """
    expected = 3 * mesh.n_vertices - 6
    if C.shape[0] == 0:
        rank = 0
    else:
        s = np.linalg.svd(C.matrix.toarray(), compute_uv=False)
        tol = max(C.shape) * np.finfo(float).eps * s[0]
        rank = int(np.count_nonzero(s > tol))
    return RankCheck(mesh.n_edges - rank, expected, rank)
