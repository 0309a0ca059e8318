"""Manufactured solutions, strain error norms, convergence studies and file export."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .elasticity import LoadData, Material, P1Field, apply_material, project_loads
from .mesh import TetMesh, generate_cube_mesh
from .quadrature import tet_points
from .solvers import compare_to_oracle, solve_classical, solve_direct
from .strain_space import FROBENIUS_WEIGHTS, from_matrix, to_matrix

CASES = ("affine", "poly2", "trig")


@dataclass
class ManufacturedCase:
    """Exact displacement with the loads it induces for a given material.

    ``grad`` returns Jacobians ``J[..., i, j] = d u_i / d x_j`` and ``hess``
    returns ``H[..., i, j, k] = d^2 u_i / dx_j dx_k``.
    """

    name: str
    material: Material
    u: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    smoothness: str

    def grad_s_u(self, x) -> np.ndarray:
        return from_matrix(self.grad(np.asarray(x, dtype=float)))

    def stress(self, x) -> np.ndarray:
        return apply_material(self.material, self.grad_s_u(x))

    def f(self, x) -> np.ndarray:
        # -div sigma = -[(lam + mu) grad(div u) + mu lap u]
        h = self.hess(np.asarray(x, dtype=float))
        grad_div = np.einsum("...jji->...i", h)
        lap = np.einsum("...ijj->...i", h)
        lam, mu = self.material.lam, self.material.mu
        return -((lam + mu) * grad_div + mu * lap)

    def g(self, x, n) -> np.ndarray:
        return np.einsum("...ij,...j->...i", to_matrix(self.stress(x)), np.asarray(n, dtype=float))

    def loads(self, **kw) -> LoadData:
        return LoadData(f=self.f, g=self.g, **kw)


_AFFINE_B = np.diag([1.0, -1.0, 0.0])

# u_i = b_i . x + 0.5 x^T Q_i x
_POLY_Q = np.array(
    [
        [[2.0, 0.0, 0.0], [0.0, 0.0, 2.0], [0.0, 2.0, 0.0]],
        [[0.0, 1.0, -1.0], [1.0, 2.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, 1.0, 0.0], [1.0, -2.0, 0.0], [0.0, 0.0, 2.0]],
    ]
)
_POLY_B = np.array([[0.5, 0.0, -0.25], [0.0, 0.0, 1.0], [0.0, 0.25, 0.0]])


def _affine():
    def u(x):
        return x @ _AFFINE_B.T

    def grad(x):
        return np.broadcast_to(_AFFINE_B, x.shape[:-1] + (3, 3)).copy()

    def hess(x):
        return np.zeros(x.shape[:-1] + (3, 3, 3))

    return u, grad, hess, "affine"


def _poly2():
    def u(x):
        return x @ _POLY_B.T + 0.5 * np.einsum("...j,ijk,...k->...i", x, _POLY_Q, x)

    def grad(x):
        return _POLY_B + np.einsum("ijk,...k->...ij", _POLY_Q, x)

    def hess(x):
        return np.broadcast_to(_POLY_Q, x.shape[:-1] + (3, 3, 3)).copy()

    return u, grad, hess, "polynomial"


def _trig():
    pi = math.pi

    def u(x):
        phi = np.prod(np.sin(pi * x), axis=-1)
        return np.repeat(phi[..., None], 3, axis=-1)

    def grad(x):
        s, c = np.sin(pi * x), np.cos(pi * x)
        dphi = pi * np.stack([c[..., 0] * s[..., 1] * s[..., 2], s[..., 0] * c[..., 1] * s[..., 2], s[..., 0] * s[..., 1] * c[..., 2]], axis=-1)
        return np.repeat(dphi[..., None, :], 3, axis=-2)

    def hess(x):
        s, c = np.sin(pi * x), np.cos(pi * x)
        h = np.empty(x.shape[:-1] + (3, 3))
        phi = np.prod(s, axis=-1)
        for j in range(3):
            for k in range(3):
                if j == k:
                    h[..., j, k] = -(pi**2) * phi
                else:
                    m = 3 - j - k
                    h[..., j, k] = pi**2 * c[..., j] * c[..., k] * s[..., m]
        return np.repeat(h[..., None, :, :], 3, axis=-3)

    return u, grad, hess, "trigonometric"


def make_case(name: str, material: Optional[Material] = None) -> ManufacturedCase:
    """One of the built-in manufactured solutions: ``affine``, ``poly2`` or ``trig``."""
    builders = {"affine": _affine, "poly2": _poly2, "trig": _trig}
    if name not in builders:
        raise ValueError(f"unknown case {name!r}; choose from {', '.join(CASES)}")
    material = Material(1.0, 1.0) if material is None else material
    u, grad, hess, tag = builders[name]()
    return ManufacturedCase(name, material, u, grad, hess, tag)


def l2_strain_error(mesh: TetMesh, tensors, case: ManufacturedCase) -> float:
    """``(sum_T int_T |eps(x) - eps_T|^2 dx)^(1/2)`` with the 4-point tet rule."""
    pts, w = tet_points(mesh)
    exact = case.grad_s_u(pts.reshape(-1, 3)).reshape(pts.shape[:2] + (6,))
    diff = exact - np.asarray(tensors, dtype=float)[:, None, :]
    return float(np.sqrt(np.sum(w * np.sum(diff * diff * FROBENIUS_WEIGHTS, axis=-1))))


@dataclass
class ConvergenceRow:
    n: int
    h: float
    err: float
    rate: Optional[float]
    oracle_gap: float
    seconds: float


@dataclass
class ConvergenceTable:
    case: str
    rows: list = field(default_factory=list)

    def fitted_rate(self) -> Optional[float]:
        """Least-squares slope of log(err) against log(h)."""
        if len(self.rows) < 2:
            return None
        h = np.log([r.h for r in self.rows])
        e = np.log([r.err for r in self.rows])
        return float(np.polyfit(h, e, 1)[0])


def convergence_study(case: ManufacturedCase | str, n_list, material: Optional[Material] = None) -> ConvergenceTable:
    """Solve the case on Kuhn cube meshes of the given resolutions.

    Each row holds the ``L^2`` strain error, the observed rate against the
    previous row and the gap to the classical P1 solve on the same mesh.
    Loads are projected onto the rigid-free complement first, since their
    quadrature carries a small rigid component.
    """
    if isinstance(case, str):
        case = make_case(case, material)
    table = ConvergenceTable(case.name)
    prev = None
    for n in n_list:
        t0 = time.perf_counter()
        mesh = generate_cube_mesh(int(n))
        loads = project_loads(mesh, case.loads())
        report = solve_direct(mesh, case.material, loads)
        err = l2_strain_error(mesh, report.tensors, case)
        seconds = time.perf_counter() - t0
        gap = compare_to_oracle(report, solve_classical(mesh, case.material, loads))
        h = mesh.max_diameter()
        rate = None
        if prev is not None and err > 0 and prev.err > 0:
            rate = math.log(prev.err / err) / math.log(prev.h / h)
        row = ConvergenceRow(int(n), h, err, rate, gap, seconds)
        table.rows.append(row)
        prev = row
    return table


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


CSV_HEADER = ("n", "h", "err", "rate", "oracle_gap", "seconds")


def export_csv(table: ConvergenceTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in table.rows:
            w.writerow([_fmt(r.n), _fmt(r.h), _fmt(r.err), _fmt(r.rate), _fmt(r.oracle_gap), _fmt(r.seconds)])


def read_csv(path) -> ConvergenceTable:
    table = ConvergenceTable(case="")
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            table.rows.append(
                ConvergenceRow(
                    n=int(rec["n"]),
                    h=float(rec["h"]),
                    err=float(rec["err"]),
                    rate=float(rec["rate"]) if rec["rate"] else None,
                    oracle_gap=float(rec["oracle_gap"]),
                    seconds=float(rec["seconds"]),
                )
            )
    return table


def export_vtk(mesh: TetMesh, strain, stress, displacement: Optional[P1Field], path, title="strainfem") -> None:
    """Write a legacy ASCII VTK unstructured grid.

    Strain and stress go out as 6-component cell field arrays in the order
    (xx, yy, zz, xy, xz, yz); the displacement as point vectors.
    """
    strain = np.asarray(strain, dtype=float).reshape(mesh.n_tets, 6)
    stress = np.asarray(stress, dtype=float).reshape(mesh.n_tets, 6)
    disp = np.zeros((mesh.n_vertices, 3)) if displacement is None else np.asarray(displacement.values, dtype=float)
    if disp.shape != (mesh.n_vertices, 3):
        raise ValueError("displacement must have one 3-vector per vertex")

    def rows(a):
        return "\n".join(" ".join(_fmt(v) for v in row) for row in a)

    nt = mesh.n_tets
    parts = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
        rows(mesh.vertices),
        f"CELLS {nt} {5 * nt}",
        "\n".join("4 " + " ".join(str(int(i)) for i in t) for t in mesh.tets),
        f"CELL_TYPES {nt}",
        "\n".join(["10"] * nt),
        f"CELL_DATA {nt}",
        "FIELD FieldData 2",
        f"strain 6 {nt} double",
        rows(strain),
        f"stress 6 {nt} double",
        rows(stress),
        f"POINT_DATA {mesh.n_vertices}",
        "VECTORS displacement double",
        rows(disp),
    ]
    Path(path).write_text("\n".join(parts) + "\n")
