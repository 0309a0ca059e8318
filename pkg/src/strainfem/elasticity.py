"""Material law, energy form, loads and the strain-to-displacement reconstruction."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .mesh import TetMesh
from .quadrature import TET_BARY, TRI_BARY, boundary_points, tet_points
from .strain_space import FROBENIUS_WEIGHTS, LocalMaps, trace


class IncompatibleLoadError(ValueError):
    """Loads have a nonzero component along a rigid motion."""


@dataclass(frozen=True)
class Material:
    """Isotropic material given by its Lame constants."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError(f"Lame constants must be positive, got lambda={self.lam}, mu={self.mu}")

    @classmethod
    def unchecked(cls, lam, mu):
        """Build without the positivity check (for probing limiting cases)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "lam", float(lam))
        object.__setattr__(obj, "mu", float(mu))
        return obj

    def form(self) -> np.ndarray:
        """6x6 matrix ``Q`` with ``e.Q.e == A e : e`` in component storage."""
        q = 2.0 * self.mu * np.diag(FROBENIUS_WEIGHTS)
        q[:3, :3] += self.lam
        return q


def apply_material(mat: Material, e) -> np.ndarray:
    """Stress ``lambda tr(e) I + 2 mu e`` for (..., 6) strain components."""
    e = np.asarray(e, dtype=float)
    out = 2.0 * mat.mu * e
    out[..., :3] += mat.lam * trace(e)[..., None]
    return out


def _scatter(blocks, row_dofs, col_dofs, shape):
    r = np.broadcast_to(row_dofs[:, :, None], blocks.shape).ravel()
    c = np.broadcast_to(col_dofs[:, None, :], blocks.shape).ravel()
    return sp.csr_matrix((blocks.ravel(), (r, c)), shape=shape)


def node_dofs(mesh: TetMesh) -> np.ndarray:
    """(nt, 12) global displacement DOF indices of each tet, vertex-major."""
    return (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(mesh.n_tets, 12)


def assemble_energy(mesh: TetMesh, mat: Material, maps: Optional[LocalMaps] = None) -> sp.csr_matrix:
    """Energy matrix over edge DOFs: ``d.M.d = sum_T |T| A e_T : e_T``."""
    maps = LocalMaps(mesh) if maps is None else maps
    blocks = kernels.weighted_blocks(maps.inv, mesh.volumes, mat.form())
    n = mesh.n_edges
    return _scatter(blocks, mesh.tet_edges, mesh.tet_edges, (n, n))


def assemble_stiffness(mesh: TetMesh, form) -> sp.csr_matrix:
    """P1 stiffness ``sum_T |T| S_T^T form S_T`` over nodal displacements."""
    ops = kernels.sym_grad_operators(mesh.vertices, mesh.tets)
    blocks = kernels.weighted_blocks(ops, mesh.volumes, form)
    dofs = node_dofs(mesh)
    n = 3 * mesh.n_vertices
    return _scatter(blocks, dofs, dofs, (n, n))


def rigid_modes(points, center) -> np.ndarray:
    """Rigid motions sampled at ``points``: shape (npts, 3, 6).

    Modes 0-2 are translations, 3-5 infinitesimal rotations about ``center``.
    """
    r = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    out = np.zeros(r.shape[:-1] + (3, 6))
    out[..., 0, 0] = out[..., 1, 1] = out[..., 2, 2] = 1.0
    # e_k x r
    out[..., 1, 3], out[..., 2, 3] = -r[..., 2], r[..., 1]
    out[..., 0, 4], out[..., 2, 4] = r[..., 2], -r[..., 0]
    out[..., 0, 5], out[..., 1, 5] = -r[..., 1], r[..., 0]
    return out


def nodal_rigid_modes(mesh: TetMesh, center=None) -> np.ndarray:
    """(3 nv, 6) nodal values of the rigid motions."""
    center = mesh.vertices.mean(axis=0) if center is None else center
    return rigid_modes(mesh.vertices, center).reshape(-1, 6)


VectorField = Callable[[np.ndarray], np.ndarray]
TractionField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LoadData:
    """Body force ``f(x)`` and boundary traction ``g(x, n)``.

    Both callables take (n, 3) arrays and return (n, 3) arrays; ``g`` also
    receives the outward unit normals.  ``rigid_correction`` holds the
    coefficients of an extra body force ``-sum_k c_k r_k(x)`` added by
    :func:`project_loads`, with rotations about ``correction_center``.
    Solves refuse loads whose rigid residuals exceed ``tol``.
    """

    f: Optional[VectorField] = None
    g: Optional[TractionField] = None
    rigid_correction: Optional[np.ndarray] = None
    correction_center: Optional[np.ndarray] = None
    tol: float = 1e-9

    def body_force(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x) if self.f is None else np.asarray(self.f(x), dtype=float).reshape(x.shape)
        if self.rigid_correction is not None:
            out = out - rigid_modes(x, self.correction_center) @ self.rigid_correction
        return out

    def traction(self, x, n):
        x = np.asarray(x, dtype=float)
        if self.g is None:
            return np.zeros_like(x)
        return np.asarray(self.g(x, n), dtype=float).reshape(x.shape)


def zero_loads() -> LoadData:
    return LoadData()


def constant_body_force(vec) -> LoadData:
    vec = np.asarray(vec, dtype=float)
    return LoadData(f=lambda x: np.broadcast_to(vec, x.shape).copy())


def nodal_load_vector(mesh: TetMesh, loads: LoadData) -> np.ndarray:
    """``F`` with ``F . v = L(v_h)`` for every P1 field ``v_h`` (quadrature)."""
    F = np.zeros((mesh.n_vertices, 3))
    pts, w = tet_points(mesh)
    fv = loads.body_force(pts.reshape(-1, 3)).reshape(pts.shape)
    contrib = np.einsum("tq,qa,tqi->tai", w, TET_BARY, fv)
    np.add.at(F, mesh.tets, contrib)
    if len(mesh.boundary_faces) and loads.g is not None:
        bpts, bw, normals = boundary_points(mesh)
        nq = np.repeat(normals[:, None, :], bpts.shape[1], axis=1)
        gv = loads.traction(bpts.reshape(-1, 3), nq.reshape(-1, 3)).reshape(bpts.shape)
        bcontrib = np.einsum("fq,qa,fqi->fai", bw, TRI_BARY, gv)
        np.add.at(F, mesh.boundary_faces, bcontrib)
    return F.ravel()


def compatibility_residuals(mesh: TetMesh, loads: LoadData) -> np.ndarray:
    """``L(r_k)`` for the three translations and three rotations about the centroid."""
    R = rigid_modes(mesh.vertices, mesh.centroid()).reshape(-1, 6)
    return nodal_load_vector(mesh, loads) @ R


def check_compatible(mesh: TetMesh, loads: LoadData) -> np.ndarray:
    res = compatibility_residuals(mesh, loads)
    if np.max(np.abs(res)) > loads.tol:
        raise IncompatibleLoadError(
            "incompatible loads: rigid-motion residuals "
            + ", ".join(f"{r:.3e}" for r in res)
            + f" exceed tolerance {loads.tol:.1e}; use project_loads"
        )
    return res


def rigid_gram(mesh: TetMesh, center) -> np.ndarray:
    """``G[j, k] = int r_j . r_k dx`` (exact: the integrand is quadratic)."""
    pts, w = tet_points(mesh)
    r = rigid_modes(pts.reshape(-1, 3), center)
    return np.einsum("q,qij,qik->jk", w.ravel(), r, r)


def project_loads(mesh: TetMesh, loads: LoadData) -> LoadData:
    """Remove the rigid component of the discrete loads.

    Adds a body force ``-sum_k c_k r_k`` with ``c`` chosen so that every
    rigid residual vanishes; ``c`` solves the Gram system of the rigid modes
    in ``L^2`` (consistent mass) so the correction is the smallest such
    body force.
    """
    center = mesh.centroid()
    # an earlier correction is discarded and recomputed for this mesh
    loads = replace(loads, rigid_correction=None, correction_center=None)
    base = compatibility_residuals(mesh, loads)
    c = np.linalg.solve(rigid_gram(mesh, center), base)
    return replace(loads, rigid_correction=c, correction_center=center)


@dataclass
class P1Field:
    """Nodal displacement values (nv, 3) with the gauge that fixed the rigid part."""

    values: np.ndarray
    gauge: str = "vertex-sum"

    def gauge_residual(self, mesh: TetMesh) -> float:
        """Size of ``sum v`` and ``sum (x - c) x v`` relative to ``|v|``."""
        r = nodal_rigid_modes(mesh).T @ self.values.ravel()
        return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(self.values)))


def sparse_lu(A):
    """SuperLU factorization tuned for symmetric positive definite matrices."""
    return spla.splu(
        sp.csc_matrix(A),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )


class GaugedSolver:
    """Solve ``K v = P b`` with ``v`` orthogonal to the rigid motions.

    ``K`` must be symmetric positive semidefinite with kernel exactly the
    nodal rigid modes ``R``; ``P`` projects out the rigid part of ``b``.
    This is the displacement block of the bordered system
    ``[[K, R], [R^T, 0]]``: six DOFs of one tet are pinned so the reduced
    matrix is SPD and sparse, then the rigid part of the result is removed.
    Solutions satisfy ``sum v = 0`` and ``sum (x - c) x v = 0`` over vertices.
    """

    def __init__(self, mesh: TetMesh, K: sp.spmatrix):
        self.n = K.shape[0]
        self.basis, _ = np.linalg.qr(nodal_rigid_modes(mesh))
        dofs = node_dofs(mesh)[0]
        _, _, piv = scipy.linalg.qr(self.basis[dofs].T, pivoting=True)
        self.pinned = np.sort(dofs[piv[:6]])
        self.free = np.setdiff1d(np.arange(self.n), self.pinned)
        K = sp.csr_matrix(K)
        self.lu = sparse_lu(K[self.free][:, self.free])

    def project(self, v) -> np.ndarray:
        return v - self.basis @ (self.basis.T @ v)

    def solve(self, rhs) -> np.ndarray:
        b = self.project(np.asarray(rhs, dtype=float))
        v = np.zeros(self.n)
        v[self.free] = self.lu.solve(b[self.free])
        return self.project(v)


class Reconstructor:
    """Least-squares P1 displacement from a strain given by edge DOFs.

    Minimizes ``||grad_s v - e||_{L^2}`` over gauge-fixed P1 fields ``v``.
    The normal equations are ``K_w v = H d`` where ``K_w`` is the P1
    stiffness for the Frobenius form and ``H`` couples edge DOFs to nodes.
    """

    def __init__(self, mesh: TetMesh, maps: Optional[LocalMaps] = None):
        self.mesh = mesh
        self.maps = LocalMaps(mesh) if maps is None else maps
        w = np.diag(FROBENIUS_WEIGHTS)
        self.ops = kernels.sym_grad_operators(mesh.vertices, mesh.tets)
        self.solver = GaugedSolver(mesh, assemble_stiffness(mesh, w))
        coupling = np.einsum("t,tki,kl,tlj->tij", mesh.volumes, self.ops, w, self.maps.inv)
        self.H = _scatter(coupling, node_dofs(mesh), mesh.tet_edges, (3 * mesh.n_vertices, mesh.n_edges))

    def __call__(self, d) -> tuple[P1Field, float]:
        d = np.asarray(d, dtype=float)
        v = self.solver.solve(self.H @ d)
        return P1Field(v.reshape(-1, 3)), self.residual(v, d)

    def residual(self, v, d) -> float:
        target = self.maps.tet_tensors(d)
        strain = np.einsum("tij,tj->ti", self.ops, v.reshape(-1, 3)[self.mesh.tets].reshape(-1, 12))
        diff = strain - target
        return float(np.sqrt(np.sum(self.mesh.volumes * np.sum(diff * diff * FROBENIUS_WEIGHTS, axis=1))))

    def adjoint(self, F) -> np.ndarray:
        """Linear form ``l`` over edge DOFs with ``l . d = F . v(d)``."""
        return self.H.T @ self.solver.solve(F)


def reconstruct_displacement(mesh: TetMesh, d) -> tuple[P1Field, float]:
    """Gauge-fixed P1 field whose strain best matches ``d``, plus the ``L^2`` misfit."""
    return Reconstructor(mesh)(d)


def load_vector(mesh: TetMesh, loads: LoadData, reconstructor: Optional[Reconstructor] = None) -> np.ndarray:
    """Load form ``l`` over edge DOFs: ``l . d = L(reconstruction of d)``.

    Raises :class:`IncompatibleLoadError` when the loads have a rigid
    component above ``loads.tol``.
    """
    check_compatible(mesh, loads)
    rec = Reconstructor(mesh) if reconstructor is None else reconstructor
    return rec.adjoint(nodal_load_vector(mesh, loads))


def evaluate_j(M, l, d) -> float:
    """``0.5 d.M.d - l.d``."""
    d = np.asarray(d, dtype=float)
    return float(0.5 * d @ (M @ d) - np.asarray(l) @ d)
