"""Piecewise-constant symmetric tensor fields with edge degrees of freedom.

Symmetric tensors are stored as arrays whose last axis holds the six
components ``(e11, e22, e33, e12, e13, e23)``.  A field over a mesh is an
edge DOF vector with one entry per global edge: the line integral of
``tau . e tau`` along that edge.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh import TetMesh

#: weights turning the 6-vector dot product into the Frobenius product
FROBENIUS_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])

_SYM_INDEX = np.array([[0, 3, 4], [3, 1, 5], [4, 5, 2]])


def to_matrix(e) -> np.ndarray:
    """Expand (..., 6) components to (..., 3, 3) symmetric matrices."""
    e = np.asarray(e, dtype=float)
    return e[..., _SYM_INDEX]


def from_matrix(m) -> np.ndarray:
    """Collect (..., 3, 3) matrices into (..., 6) components, symmetrizing."""
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.stack([m[..., 0, 0], m[..., 1, 1], m[..., 2, 2], m[..., 0, 1], m[..., 0, 2], m[..., 1, 2]], axis=-1)


def trace(e) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    return e[..., 0] + e[..., 1] + e[..., 2]


def frobenius(a, b) -> np.ndarray:
    return np.sum(np.asarray(a) * np.asarray(b) * FROBENIUS_WEIGHTS, axis=-1)


def edge_dof(start, end, e) -> float:
    """DOF of a constant tensor ``e`` on the segment ``start -> end``.

    Returns ``L * tau.e tau`` with ``L`` the segment length and ``tau`` its
    unit direction.  The sign of ``tau`` does not matter.
    """
    t = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
    length = float(np.linalg.norm(t))
    if length == 0.0:
        raise ValueError("zero-length edge")
    return float(t @ to_matrix(e) @ t) / length


def local_dof_matrix(tet_vertices) -> np.ndarray:
    """6x6 map from tensor components to the six local edge DOFs of one tet."""
    x = np.ascontiguousarray(tet_vertices, dtype=float)
    return kernels.dof_maps(x, np.arange(4, dtype=np.intp)[None, :])[0]


def tensor_from_dofs(tet_vertices, d) -> np.ndarray:
    """Recover the constant tensor on a tet from its six edge DOFs.

    ``d`` is ordered by local edges (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
    """
    m = local_dof_matrix(tet_vertices)
    try:
        return np.linalg.solve(m, np.asarray(d, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular local DOF map (degenerate tet)") from exc


class LocalMaps:
    """Per-tet DOF maps of a mesh and their inverses, computed once.

    ``dof[t]`` takes tensor components to local DOFs, ``inv[t]`` takes local
    DOFs back to the tensor.
    """

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        self.dof = kernels.dof_maps(mesh.vertices, mesh.tets)
        self.inv = kernels.invert_blocks(self.dof)
        self.condition = np.linalg.cond(self.dof)

    def tet_tensors(self, d) -> np.ndarray:
        """Per-tet tensors (nt, 6) of an edge DOF vector."""
        d = np.asarray(d, dtype=float)
        return np.einsum("tij,tj->ti", self.inv, d[self.mesh.tet_edges])

    def tet_dofs(self, tensors) -> np.ndarray:
        """Local DOFs (nt, 6) of per-tet tensors."""
        return np.einsum("tij,tj->ti", self.dof, np.asarray(tensors, dtype=float))


def gauss_points(order: int):
    """Gauss-Legendre nodes on [0, 1] with weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def interpolate(mesh: TetMesh, e_fn, order: int = 2) -> np.ndarray:
    """Edge DOFs of an analytic tensor field by Gauss quadrature along each edge.

    ``e_fn`` maps an (n, 3) array of points to (n, 6) tensor components.
    The default two-point rule is exact when the integrand is cubic along
    the edge.
    """
    s, w = gauss_points(order)
    a = mesh.vertices[mesh.edges[:, 0]]
    t = mesh.edge_vectors()
    length = np.linalg.norm(t, axis=1)
    tau = t / length[:, None]
    proj = from_matrix(tau[:, :, None] * tau[:, None, :]) * FROBENIUS_WEIGHTS
    d = np.zeros(mesh.n_edges)
    for sq, wq in zip(s, w):
        vals = np.asarray(e_fn(a + sq * t), dtype=float)
        d += wq * np.sum(vals * proj, axis=1)
    return d * length


def p1_strain_operator(mesh: TetMesh) -> sp.csr_matrix:
    """Sparse map from nodal P1 displacements to edge DOFs of their strain.

    For a P1 field the DOF on edge ``p -> q`` is ``(x_q - x_p).(v_q - v_p) / L``,
    so the operator has six entries per row.  Nodal values are ordered
    ``(v0x, v0y, v0z, v1x, ...)``.
    """
    t = mesh.edge_vectors()
    tau = t / np.linalg.norm(t, axis=1)[:, None]
    ne = mesh.n_edges
    rows = np.repeat(np.arange(ne), 6)
    p, q = mesh.edges[:, 0], mesh.edges[:, 1]
    cols = np.concatenate([3 * q[:, None] + np.arange(3), 3 * p[:, None] + np.arange(3)], axis=1).ravel()
    vals = np.concatenate([tau, -tau], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, 3 * mesh.n_vertices))


def tet_strains_of_p1(mesh: TetMesh, v) -> np.ndarray:
    """Per-tet symmetrized gradient (nt, 6) of the P1 field with nodal values ``v``."""
    v = np.asarray(v, dtype=float).reshape(mesh.n_vertices, 3)
    ops = kernels.sym_grad_operators(mesh.vertices, mesh.tets)
    return np.einsum("tij,tj->ti", ops, v[mesh.tets].reshape(mesh.n_tets, 12))


def strain_of_p1(mesh: TetMesh, v) -> tuple[np.ndarray, np.ndarray]:
    """Edge DOFs and per-tet strains of a P1 displacement field.

    Returns ``(d, tensors)``; ``d`` is single-valued by construction.
    """
    v = np.asarray(v, dtype=float).reshape(mesh.n_vertices, 3)
    tensors = tet_strains_of_p1(mesh, v)
    d = p1_strain_operator(mesh) @ v.ravel()
    return d, tensors


def local_dof_discrepancy(mesh: TetMesh, tensors) -> float:
    """Largest disagreement between incident tets on a shared edge DOF.

    Zero (up to rounding) exactly when the per-tet tensors define a
    single-valued edge DOF vector.
    """
    local = kernels.dof_maps(mesh.vertices, mesh.tets)
    vals = np.einsum("tij,tj->ti", local, np.asarray(tensors, dtype=float)).ravel()
    idx = mesh.tet_edges.ravel()
    hi = np.full(mesh.n_edges, -np.inf)
    lo = np.full(mesh.n_edges, np.inf)
    np.maximum.at(hi, idx, vals)
    np.minimum.at(lo, idx, vals)
    return float((hi - lo).max())

