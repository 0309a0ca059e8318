"""Command line entry point: ``strainfem <subcommand> ...``.

Every subcommand exits with status 0 iff its internal checks pass.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .constraints import patch_null_space
from .elasticity import LoadData, Material, apply_material, project_loads
from .harness import CASES, convergence_study, export_csv, export_vtk, l2_strain_error, make_case
from .mesh import MeshError, euler_check, generate_cube_mesh, read_mesh, vertex_patch, write_mesh
from .solvers import compare_to_oracle, solve_classical, solve_direct
from .strain_space import p1_strain_operator, tet_strains_of_p1

ORACLE_TOL = 1e-9

logger = logging.getLogger("strainfem")


def polynomial_field(components):
    """Vector field from per-component monomial lists ``[[coef, p1, p2, p3], ...]``."""
    if len(components) != 3:
        raise ValueError("polynomial field needs exactly three components")
    terms = [np.asarray(c, dtype=float).reshape(-1, 4) for c in components]

    def field(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for i, t in enumerate(terms):
            for coef, p1, p2, p3 in t:
                out[:, i] += coef * x[:, 0] ** p1 * x[:, 1] ** p2 * x[:, 2] ** p3
        return out

    return field


def read_config(path) -> dict:
    """JSON config with keys ``lambda``, ``mu`` and either ``case`` or ``f``/``g`` polynomials."""
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _material(args, cfg) -> Material:
    lam = args.lam if args.lam is not None else cfg.get("lambda", 1.0)
    mu = args.mu if args.mu is not None else cfg.get("mu", 1.0)
    return Material(float(lam), float(mu))


def _loads(args, cfg, mat, mesh):
    """Return (loads, case or None); manufactured loads are projected unless disabled."""
    case_name = args.case or cfg.get("case")
    if case_name is None and ("f" in cfg or "g" in cfg):
        f = polynomial_field(cfg["f"]) if "f" in cfg else None
        gpoly = polynomial_field(cfg["g"]) if "g" in cfg else None
        g = (lambda x, n: gpoly(x)) if gpoly is not None else None
        loads, case = LoadData(f=f, g=g), None
    else:
        case = make_case(case_name or "affine", mat)
        loads = case.loads()
    if not args.no_project:
        loads = project_loads(mesh, loads)
    return loads, case


def cmd_mesh_gen(args) -> int:
    mesh = generate_cube_mesh(args.n)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_tets} tets, {mesh.n_edges} edges")
    return 0


def cmd_check_topology(args) -> int:
    mesh = read_mesh(args.mesh)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    ok = True
    try:
        w = csv.writer(out, lineterminator="\n")
        if args.constraints:
            w.writerow(["vertex", "class", "m", "null_dim", "pass"])
            op = p1_strain_operator(mesh).tocsr()
        else:
            w.writerow(["vertex", "class", "N", "A", "Nb", "Nib", "residual"])
        for a in range(mesh.n_vertices):
            patch = vertex_patch(mesh, a)
            cls = "boundary" if patch.boundary_center else "interior"
            if args.constraints:
                rows, _ = patch_null_space(mesh, patch, op)
                passed = len(rows) == patch.expected_constraints
                w.writerow([a, cls, patch.expected_constraints, len(rows), "pass" if passed else "fail"])
            else:
                chk = euler_check(patch)
                passed = chk.passed
                w.writerow([a, cls, patch.N, patch.A, patch.n_boundary, patch.n_inner_boundary, chk.residual])
            ok &= passed
    finally:
        if out is not sys.stdout:
            out.close()
    return 0 if ok else 1


def cmd_solve(args) -> int:
    cfg = read_config(args.config)
    mesh = read_mesh(args.mesh)
    mat = _material(args, cfg)
    loads, case = _loads(args, cfg, mat, mesh)
    summary = {"method": args.method, "lambda": mat.lam, "mu": mat.mu, "n_edges": mesh.n_edges}
    if args.method == "direct":
        report = solve_direct(mesh, mat, loads)
        strain = report.tensors
        disp = None
        summary.update(objective=report.objective, constraint_residual=report.constraint_residual)
        summary["iterations"] = report.diagnostics.get("iterations")
    else:
        disp = solve_classical(mesh, mat, loads)
        strain = tet_strains_of_p1(mesh, disp.values)
    if case is not None:
        summary["case"] = case.name
        summary["l2_strain_error"] = l2_strain_error(mesh, strain, case)
    if args.out:
        export_vtk(mesh, strain, apply_material(mat, strain), disp, f"{args.out}.vtk")
        Path(f"{args.out}.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_compare(args) -> int:
    cfg = read_config(args.config)
    mesh = read_mesh(args.mesh)
    mat = _material(args, cfg)
    loads, _ = _loads(args, cfg, mat, mesh)
    report = solve_direct(mesh, mat, loads)
    gap = compare_to_oracle(report, solve_classical(mesh, mat, loads))
    print(f"oracle gap (relative L2 strain): {gap:.3e}")
    return 0 if gap < ORACLE_TOL else 1


def cmd_convergence(args) -> int:
    mat = Material(args.lam if args.lam is not None else 1.0, args.mu if args.mu is not None else 1.0)
    levels = [int(s) for s in args.levels.split(",") if s.strip()]
    table = convergence_study(make_case(args.case, mat), levels)
    print(f"{'n':>4} {'h':>10} {'err':>12} {'rate':>7} {'oracle_gap':>11} {'seconds':>8}")
    for r in table.rows:
        rate = "" if r.rate is None else f"{r.rate:.3f}"
        print(f"{r.n:>4} {r.h:>10.4g} {r.err:>12.5e} {rate:>7} {r.oracle_gap:>11.2e} {r.seconds:>8.2f}")
    fitted = table.fitted_rate()
    if fitted is not None:
        print(f"least-squares rate: {fitted:.3f}")
    if args.out:
        export_csv(table, f"{args.out}.csv")
    errs = [r.err for r in table.rows]
    ok = all(r.oracle_gap < ORACLE_TOL for r in table.rows)
    if args.case != "affine":
        ok &= all(b < a for a, b in zip(errs, errs[1:]))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="strainfem", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mesh-gen", help="write a Kuhn-subdivided unit cube mesh")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mesh_gen)

    s = sub.add_parser("check-topology", help="per-vertex Euler residuals or constraint counts as CSV")
    s.add_argument("--mesh", required=True)
    s.add_argument("--constraints", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_check_topology)

    def solve_args(s):
        s.add_argument("--mesh", required=True)
        s.add_argument("--lambda", dest="lam", type=float)
        s.add_argument("--mu", type=float)
        s.add_argument("--case", choices=CASES)
        s.add_argument("--config")
        s.add_argument("--no-project", action="store_true", help="refuse loads with a rigid component")

    s = sub.add_parser("solve", help="solve one problem")
    solve_args(s)
    s.add_argument("--method", choices=("direct", "classical"), default="direct")
    s.add_argument("--out", help="output prefix for .vtk and .json")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("compare", help="strain solve against the classical P1 solve")
    solve_args(s)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("convergence", help="convergence study on cube meshes")
    s.add_argument("--case", choices=CASES, required=True)
    s.add_argument("--levels", default="2,4,8")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--out", help="output prefix for .csv")
    s.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (MeshError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
