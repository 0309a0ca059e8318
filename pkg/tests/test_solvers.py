import numpy as np
import pytest
import scipy.linalg

from strainfem.constraints import assemble_constraints
from strainfem.elasticity import (
    IncompatibleLoadError,
    LoadData,
    Material,
    apply_material,
    assemble_energy,
    constant_body_force,
    evaluate_j,
    nodal_rigid_modes,
    project_loads,
    zero_loads,
)
from strainfem.harness import l2_strain_error, make_case
from strainfem.mesh import generate_cube_mesh
from strainfem.solvers import (
    SolverError,
    StrainProblem,
    compare_to_oracle,
    l2_norm,
    solve_classical,
    solve_direct,
)
from strainfem.strain_space import interpolate, strain_of_p1, tet_strains_of_p1, trace

AFFINE = np.array([1.0, -1.0, 0, 0, 0, 0])


def rigid_free(mesh, v):
    q, _ = np.linalg.qr(nodal_rigid_modes(mesh))
    v = np.asarray(v, dtype=float).ravel()
    return v - q @ (q.T @ v)


@pytest.fixture(scope="module")
def trig_problem():
    mesh = generate_cube_mesh(2)
    case = make_case("trig", Material(2.0, 0.5))
    loads = project_loads(mesh, case.loads())
    return mesh, case, loads, StrainProblem.build(mesh, case.material, loads)


def feasible_directions(mesh, rng, k):
    return [strain_of_p1(mesh, rng.normal(size=(mesh.n_vertices, 3)))[0] for _ in range(k)]


class TestDirect:
    def test_zero_loads(self, cube2, unit_material):
        r = solve_direct(cube2, unit_material, zero_loads())
        assert np.abs(r.d).max() == 0.0
        assert r.objective == 0.0
        gap = compare_to_oracle(r, solve_classical(cube2, unit_material, zero_loads()))
        assert gap < 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_patch_test(self, cube_meshes, n, steel_like):
        m = cube_meshes[n]
        case = make_case("affine", steel_like)
        r = solve_direct(m, steel_like, case.loads())
        exact = interpolate(m, lambda x: np.tile(AFFINE, (len(x), 1)))
        np.testing.assert_allclose(r.d, exact, atol=1e-10)

    def test_report_fields(self, trig_problem):
        mesh, case, loads, prob = trig_problem
        r = solve_direct(mesh, case.material, loads, problem=prob)
        assert r.constraint_residual < 1e-10 * max(1.0, np.linalg.norm(r.d))
        assert r.diagnostics["method"] == "augmented"
        assert r.diagnostics["iterations"] >= 1
        assert r.seconds > 0
        assert r.tensors.shape == (mesh.n_tets, 6)

    def test_feasible_probe(self, trig_problem, rng):
        mesh, case, loads, prob = trig_problem
        r = solve_direct(mesh, case.material, loads, problem=prob)
        for d in feasible_directions(mesh, rng, 20):
            assert r.objective <= evaluate_j(prob.M, prob.l, d) + 1e-12

    def test_local_minimality(self, trig_problem, rng):
        mesh, case, loads, prob = trig_problem
        r = solve_direct(mesh, case.material, loads, problem=prob)
        for delta in feasible_directions(mesh, rng, 20):
            for t in (1e-3, -1e-3):
                assert r.objective <= evaluate_j(prob.M, prob.l, r.d + t * delta) + 1e-14

    def test_objective_identity(self, trig_problem):
        mesh, case, loads, prob = trig_problem
        r = solve_direct(mesh, case.material, loads, problem=prob)
        assert r.objective == pytest.approx(-0.5 * prob.l @ r.d, rel=1e-10)

    def test_multiplier_init_irrelevant(self, trig_problem, rng):
        mesh, case, loads, prob = trig_problem
        a = solve_direct(mesh, case.material, loads, problem=prob)
        b = solve_direct(mesh, case.material, loads, problem=prob, multiplier_init=rng.normal(size=prob.C.shape[0]))
        assert np.linalg.norm(a.d - b.d) < 1e-12 * np.linalg.norm(a.d)

    def test_dense_path_agrees(self, trig_problem):
        mesh, case, loads, prob = trig_problem
        a = solve_direct(mesh, case.material, loads, problem=prob)
        b = solve_direct(mesh, case.material, loads, problem=prob, method="dense")
        assert np.linalg.norm(a.d - b.d) < 1e-10 * np.linalg.norm(a.d)

    def test_unknown_method(self, trig_problem):
        mesh, case, loads, prob = trig_problem
        with pytest.raises(ValueError):
            solve_direct(mesh, case.material, loads, problem=prob, method="magic")

    def test_non_convergence_reported(self, trig_problem):
        mesh, case, loads, prob = trig_problem
        with pytest.raises(SolverError):
            solve_direct(mesh, case.material, loads, problem=prob, max_iter=1, rho_scale=1e-6)

    def test_incompatible_refused(self, cube1, unit_material):
        with pytest.raises(IncompatibleLoadError, match="incompatible loads"):
            solve_direct(cube1, unit_material, constant_body_force([0, 0, -1]))

    def test_single_tet_unconstrained(self, ref_tet_mesh, unit_material):
        loads = project_loads(ref_tet_mesh, make_case("poly2").loads())
        r = solve_direct(ref_tet_mesh, unit_material, loads)
        assert r.diagnostics["method"] == "unconstrained"
        assert compare_to_oracle(r, solve_classical(ref_tet_mesh, unit_material, loads)) < 1e-9

    def test_energy_positive_on_compatible_space(self, cube2, unit_material):
        C = assemble_constraints(cube2).matrix.toarray()
        Z = scipy.linalg.null_space(C)
        M = assemble_energy(cube2, unit_material).toarray()
        assert np.linalg.eigvalsh(Z.T @ M @ Z).min() > 0


class TestClassical:
    def test_zero(self, cube2, unit_material):
        v = solve_classical(cube2, unit_material, zero_loads())
        assert np.abs(v.values).max() == 0.0

    @pytest.mark.parametrize("n", [1, 3])
    def test_affine(self, cube_meshes, n, steel_like):
        m = cube_meshes[n]
        case = make_case("affine", steel_like)
        v = solve_classical(m, steel_like, case.loads())
        exact = case.u(m.vertices)
        np.testing.assert_allclose(rigid_free(m, v.values), rigid_free(m, exact), atol=1e-10)
        assert v.gauge_residual(m) < 1e-12

    def test_smooth_error_decreases(self):
        # strain (Korn-equivalent) seminorm error of the P1 oracle
        errs = []
        for n in (2, 4):
            m = generate_cube_mesh(n)
            case = make_case("trig")
            v = solve_classical(m, case.material, project_loads(m, case.loads()))
            errs.append(l2_strain_error(m, tet_strains_of_p1(m, v.values), case))
        assert errs[1] < errs[0]


class TestCompare:
    @pytest.mark.parametrize("name", ["poly2", "trig"])
    @pytest.mark.parametrize("n", [1, 2])
    def test_equivalence(self, cube_meshes, name, n, steel_like):
        m = cube_meshes[n]
        loads = project_loads(m, make_case(name, steel_like).loads())
        r = solve_direct(m, steel_like, loads)
        assert compare_to_oracle(r, solve_classical(m, steel_like, loads)) < 1e-9

    def test_mismatched_materials(self, cube2):
        loads = project_loads(cube2, make_case("trig").loads())
        r = solve_direct(cube2, Material(1.0, 1.0), loads)
        assert compare_to_oracle(r, solve_classical(cube2, Material(5.0, 0.3), loads)) > 1e-6

    def test_energies_agree(self, trig_problem):
        # the strain solve and the oracle reach the same energy
        mesh, case, loads, prob = trig_problem
        r = solve_direct(mesh, case.material, loads, problem=prob)
        v = solve_classical(mesh, case.material, loads)
        e = tet_strains_of_p1(mesh, v.values)
        energy = 0.5 * np.sum(mesh.volumes * np.sum(apply_material(case.material, e) * e * [1, 1, 1, 2, 2, 2], axis=1))
        assert 0.5 * r.d @ prob.M @ r.d == pytest.approx(energy, rel=1e-9)


def test_l2_norm(cube1):
    assert l2_norm(cube1, np.tile(AFFINE, (6, 1))) == pytest.approx(np.sqrt(2))


def test_trace_scaling(rng):
    mat = Material(1.7, 0.4)
    e = rng.normal(size=(20, 6))
    np.testing.assert_allclose(trace(apply_material(mat, e)), (3 * mat.lam + 2 * mat.mu) * trace(e), rtol=1e-14, atol=1e-14)
