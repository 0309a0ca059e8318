"""Constrained strain solve and the classical P1 displacement solve."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import ConstraintMatrix, assemble_constraints
from .elasticity import (
    GaugedSolver,
    LoadData,
    Material,
    P1Field,
    Reconstructor,
    assemble_energy,
    assemble_stiffness,
    check_compatible,
    evaluate_j,
    nodal_load_vector,
    sparse_lu,
)
from .mesh import TetMesh
from .strain_space import FROBENIUS_WEIGHTS, LocalMaps, tet_strains_of_p1

logger = logging.getLogger(__name__)

#: above this many unknowns the dense KKT path is refused
DENSE_LIMIT = 4000


class SolverError(RuntimeError):
    pass


@dataclass
class SolveReport:
    mesh: TetMesh
    d: np.ndarray
    tensors: np.ndarray  # per-tet strain (nt, 6)
    objective: float
    constraint_residual: float
    multipliers: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class StrainProblem:
    """Assembled pieces of the constrained minimization on one mesh."""

    mesh: TetMesh
    maps: LocalMaps
    M: sp.csr_matrix
    C: ConstraintMatrix
    l: np.ndarray

    @classmethod
    def build(cls, mesh: TetMesh, mat: Material, loads: LoadData, constraints: Optional[ConstraintMatrix] = None):
        check_compatible(mesh, loads)
        maps = LocalMaps(mesh)
        M = assemble_energy(mesh, mat, maps)
        C = assemble_constraints(mesh) if constraints is None else constraints
        rec = Reconstructor(mesh, maps)
        l = rec.adjoint(nodal_load_vector(mesh, loads))
        return cls(mesh, maps, M, C, l)


def _augmented_lagrangian(M, C, l, mu0, rho_scale, tol, max_iter):
    # M is SPD on all edge DOFs, so K = M + rho C^T C is SPD for every rho and
    # is factored once.  Eliminating d = K^-1 (l - C^T mu) leaves the SPSD
    # system C K^-1 C^T mu = C K^-1 l, solved by conjugate gradients; its
    # residual is exactly C d.  From mu = 0 the iterates stay in range(C), so
    # redundant rows get the minimum-norm multipliers.
    ctc = (C.T @ C).tocsc()
    dm = float(M.diagonal().mean())
    dc = float(ctc.diagonal().mean()) or 1.0
    rho = rho_scale * dm / dc
    lu = sparse_lu(M + rho * ctc)
    mu = np.zeros(C.shape[0]) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    d = lu.solve(l - C.T @ mu)
    r = C @ d
    p = r.copy()
    rr = float(r @ r)
    res = float(np.linalg.norm(r)) / max(1.0, np.linalg.norm(d))
    history = [res]
    best = (res, d, mu)
    stalled = 0
    it = 0
    while res > tol and it < max_iter:
        it += 1
        w = lu.solve(C.T @ p)
        cw = C @ w
        curv = float(p @ cw)
        if curv <= 0.0:
            break
        alpha = rr / curv
        mu = mu + alpha * p
        d = d - alpha * w
        r = r - alpha * cw
        res = float(np.linalg.norm(C @ d)) / max(1.0, np.linalg.norm(d))
        history.append(res)
        if res < 0.5 * best[0]:
            stalled = 0
        else:
            stalled += 1
        if res < best[0]:
            best = (res, d, mu)
        # within contract and rounding has stopped further progress
        if stalled >= 10 and best[0] <= 1e-10:
            break
        rn = float(r @ r)
        p = r + (rn / rr) * p
        rr = rn
    res, d, mu = best
    if res > 1e-10:
        raise SolverError(f"augmented Lagrangian did not converge in {it} iterations (residual {res:.2e})")
    return d, mu, {"method": "augmented", "rho": rho, "iterations": it, "residual_history": history}


def _dense_kkt(M, C, l):
    n, m = M.shape[0], C.shape[0]
    if n + m > DENSE_LIMIT:
        raise SolverError(f"dense KKT path limited to {DENSE_LIMIT} unknowns, got {n + m}")
    K = np.zeros((n + m, n + m))
    K[:n, :n] = M.toarray()
    K[:n, n:] = C.T.toarray()
    K[n:, :n] = C.toarray()
    rhs = np.concatenate([l, np.zeros(m)])
    # lstsq returns the minimum-norm solution of the singular, consistent system
    sol, _, rank, _ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:n], sol[n:], {"method": "dense", "kkt_rank": int(rank), "kkt_size": n + m}


def solve_direct(
    mesh: TetMesh,
    mat: Material,
    loads: LoadData,
    *,
    method: str = "augmented",
    constraints: Optional[ConstraintMatrix] = None,
    multiplier_init=None,
    rho_scale: float = 10.0,
    tol: float = 1e-13,
    max_iter: int = 500,
    problem: Optional[StrainProblem] = None,
) -> SolveReport:
    """Minimize ``0.5 d.M.d - l.d`` subject to ``C d = 0`` over edge DOFs.

    Parameters
    ----------
    method : {"augmented", "dense"}
        ``"augmented"`` factors the SPD matrix ``M + rho C^T C`` once and
        solves for the multipliers by conjugate gradients; ``"dense"`` solves the full KKT system
        by minimum-norm least squares (small meshes only).
    multiplier_init : array_like, optional
        Starting multipliers for the augmented path.  The primal answer
        does not depend on it.

    Raises
    ------
    IncompatibleLoadError
        Loads with a rigid component above tolerance.
    SolverError
        Non-convergence or a constraint residual above ``1e-10 max(1, |d|)``.
    """
    t0 = time.perf_counter()
    prob = StrainProblem.build(mesh, mat, loads, constraints) if problem is None else problem
    C = prob.C.matrix
    if C.shape[0] == 0:
        d = spla.spsolve(prob.M.tocsc(), prob.l)
        mu, diag = np.zeros(0), {"method": "unconstrained"}
    elif method == "augmented":
        d, mu, diag = _augmented_lagrangian(prob.M, C, prob.l, multiplier_init, rho_scale, tol, max_iter)
    elif method == "dense":
        d, mu, diag = _dense_kkt(prob.M, C, prob.l)
    else:
        raise ValueError(f"unknown method {method!r}")
    d = np.atleast_1d(np.asarray(d, dtype=float))
    res = float(np.linalg.norm(C @ d)) if C.shape[0] else 0.0
    if res > 1e-10 * max(1.0, np.linalg.norm(d)):
        raise SolverError(f"constraint residual {res:.3e} above tolerance")
    diag["local_condition_max"] = float(prob.maps.condition.max())
    report = SolveReport(
        mesh=mesh,
        d=d,
        tensors=prob.maps.tet_tensors(d),
        objective=evaluate_j(prob.M, prob.l, d),
        constraint_residual=res,
        multipliers=mu,
        diagnostics=diag,
    )
    report.seconds = time.perf_counter() - t0
    logger.info("direct solve: %d edges, %s, %.3fs", mesh.n_edges, diag.get("method"), report.seconds)
    return report


def solve_classical(mesh: TetMesh, mat: Material, loads: LoadData) -> P1Field:
    """Gauge-fixed P1 minimizer of ``0.5 int A grad_s v : grad_s v - L(v)``."""
    check_compatible(mesh, loads)
    K = assemble_stiffness(mesh, mat.form())
    v = GaugedSolver(mesh, K).solve(nodal_load_vector(mesh, loads))
    return P1Field(v.reshape(-1, 3))


def l2_norm(mesh: TetMesh, tensors) -> float:
    """``L^2`` norm of a piecewise-constant tensor field."""
    t = np.asarray(tensors, dtype=float)
    return float(np.sqrt(np.sum(mesh.volumes * np.sum(t * t * FROBENIUS_WEIGHTS, axis=1))))


def compare_to_oracle(report: SolveReport, oracle: P1Field) -> float:
    """Relative ``L^2`` gap between the strain solution and the oracle's strain.

    Falls back to the absolute norm of the strain solution when the oracle
    strain vanishes.
    """
    mesh = report.mesh
    ref = tet_strains_of_p1(mesh, oracle.values)
    gap = l2_norm(mesh, report.tensors - ref)
    den = l2_norm(mesh, ref)
    if den == 0.0:
        return l2_norm(mesh, report.tensors)
    return gap / den
