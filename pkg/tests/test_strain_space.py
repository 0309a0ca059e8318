import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strainfem.mesh import build_topology, generate_cube_mesh
from strainfem.strain_space import (
    FROBENIUS_WEIGHTS,
    LocalMaps,
    edge_dof,
    from_matrix,
    interpolate,
    local_dof_discrepancy,
    local_dof_matrix,
    p1_strain_operator,
    strain_of_p1,
    tensor_from_dofs,
    to_matrix,
    trace,
)

from conftest import REF_TET, random_tet

IDENTITY = np.array([1.0, 1, 1, 0, 0, 0])


def rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    return q if np.linalg.det(q) > 0 else -q


def independent_p1_strain(mesh, v):
    """Per-tet gradient from the 4x4 affine interpolation system, then edge DOFs."""
    v = np.asarray(v).reshape(-1, 3)
    tensors = []
    for t in mesh.tets:
        A = np.hstack([np.ones((4, 1)), mesh.vertices[t]])
        coef = np.linalg.solve(A, v[t])  # row 0 constant, rows 1..3 gradient^T
        tensors.append(from_matrix(coef[1:].T))
    d = np.array([edge_dof(mesh.vertices[p], mesh.vertices[q], tensors[_first_tet(mesh, k)])
                  for k, (p, q) in enumerate(mesh.edges)])
    return d, np.array(tensors)


def _first_tet(mesh, k):
    return int(np.nonzero((mesh.tet_edges == k).any(axis=1))[0][0])


class TestTensors:
    def test_roundtrip(self, rng):
        e = rng.normal(size=(5, 6))
        np.testing.assert_allclose(from_matrix(to_matrix(e)), e)

    def test_frobenius_weights(self, rng):
        a, b = rng.normal(size=(2, 6))
        assert np.sum(a * b * FROBENIUS_WEIGHTS) == pytest.approx(np.sum(to_matrix(a) * to_matrix(b)))
        assert trace(IDENTITY) == 3.0


class TestEdgeDof:
    def test_diagonal_edge(self):
        e = np.array([1.0, 0, 0, 0, 0, 0])
        assert edge_dof([0, 0, 0], [1, 1, 0], e) == pytest.approx(np.sqrt(2) / 2)

    def test_orientation_free(self, rng):
        e = rng.normal(size=6)
        a, b = rng.normal(size=(2, 3))
        assert edge_dof(a, b, e) == pytest.approx(edge_dof(b, a, e))

    def test_zero_length(self):
        with pytest.raises(ValueError, match="zero-length"):
            edge_dof([1, 2, 3], [1, 2, 3], IDENTITY)


class TestUnisolvence:
    def test_identity_on_reference(self):
        d = [1.0, 1.0, 1.0, np.sqrt(2), np.sqrt(2), np.sqrt(2)]
        np.testing.assert_allclose(tensor_from_dofs(REF_TET, d), IDENTITY, atol=1e-14)

    def test_local_matrix_matches_edge_dof(self, rng):
        x = random_tet(rng)
        e = rng.normal(size=6)
        pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        expected = [edge_dof(x[i], x[j], e) for i, j in pairs]
        np.testing.assert_allclose(local_dof_matrix(x) @ e, expected, rtol=1e-12)

    def test_flat_tet_singular(self):
        flat = REF_TET.copy()
        flat[3] = [0.2, 0.2, 0.0]
        with pytest.raises(np.linalg.LinAlgError):
            tensor_from_dofs(flat, np.ones(6))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_roundtrip_random(self, seed):
        rng = np.random.default_rng(seed)
        x = random_tet(rng)
        e = rng.normal(size=6)
        back = tensor_from_dofs(x, local_dof_matrix(x) @ e)
        assert np.linalg.norm(back - e) <= 1e-10 * np.linalg.norm(e)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_rigid_invariance(self, seed):
        # DOFs of R e R^T on the moved tet equal DOFs of e on the original one
        rng = np.random.default_rng(seed)
        x = random_tet(rng)
        q, t = rotation(rng), rng.normal(size=3)
        e = rng.normal(size=6)
        moved = from_matrix(q @ to_matrix(e) @ q.T)
        np.testing.assert_allclose(local_dof_matrix(x @ q.T + t) @ moved, local_dof_matrix(x) @ e, atol=1e-11)


class TestInterpolate:
    def test_constant_identity(self, cube2):
        d = interpolate(cube2, lambda x: np.tile(IDENTITY, (len(x), 1)))
        np.testing.assert_allclose(d, cube2.edge_lengths(), rtol=1e-14)

    def test_constant_matches_edge_dof(self, cube1):
        e = np.array([1.0, -1, 0, 0, 0, 0])
        d = interpolate(cube1, lambda x: np.tile(e, (len(x), 1)))
        ref = [edge_dof(cube1.vertices[p], cube1.vertices[q], e) for p, q in cube1.edges]
        np.testing.assert_allclose(d, ref, atol=1e-14)

    def test_quadratic_field_exact(self, cube2):
        field = lambda x: np.stack([x[:, 0] ** 2, x[:, 1] * x[:, 2], x[:, 2], x[:, 0] * x[:, 1], 0 * x[:, 0], x[:, 1] ** 2], 1)
        np.testing.assert_allclose(interpolate(cube2, field, 2), interpolate(cube2, field, 10), rtol=1e-13, atol=1e-15)

    def test_trig_converges(self, cube2):
        field = lambda x: np.stack([np.sin(x[:, 0] + 2 * x[:, 1])] * 6, 1)
        coarse, fine = interpolate(cube2, field, 4), interpolate(cube2, field, 12)
        np.testing.assert_allclose(coarse, fine, atol=1e-7)


class TestStrainOfP1:
    @pytest.mark.parametrize("n", [1, 2])
    def test_against_affine_interpolation(self, cube_meshes, rng, n):
        m = cube_meshes[n]
        v = rng.normal(size=(m.n_vertices, 3))
        d, tensors = strain_of_p1(m, v)
        d_ref, t_ref = independent_p1_strain(m, v)
        np.testing.assert_allclose(d, d_ref, atol=1e-12)
        np.testing.assert_allclose(tensors, t_ref, atol=1e-12)

    def test_rigid_gives_zero(self, cube2, rng):
        skew = rng.normal(size=(3, 3))
        skew = skew - skew.T
        v = cube2.vertices @ skew.T + rng.normal(size=3)
        d, tensors = strain_of_p1(cube2, v)
        assert np.abs(d).max() < 1e-13
        assert np.abs(tensors).max() < 1e-13

    def test_single_valued(self, cube2, rng):
        _, tensors = strain_of_p1(cube2, rng.normal(size=(27, 3)))
        assert local_dof_discrepancy(cube2, tensors) < 1e-13

    def test_broken_field_detected(self, cube2, rng):
        tensors = rng.normal(size=(cube2.n_tets, 6))
        assert local_dof_discrepancy(cube2, tensors) > 1e-3

    def test_local_maps_consistent(self, cube2, rng):
        v = rng.normal(size=(27, 3))
        d, tensors = strain_of_p1(cube2, v)
        maps = LocalMaps(cube2)
        np.testing.assert_allclose(maps.tet_tensors(d), tensors, atol=1e-12)
        np.testing.assert_allclose(maps.tet_dofs(tensors), d[cube2.tet_edges], atol=1e-12)

    @pytest.mark.parametrize("n", [1, 2])
    def test_operator_kernel_is_rigid(self, cube_meshes, n):
        m = cube_meshes[n]
        B = p1_strain_operator(m).toarray()
        assert np.linalg.matrix_rank(B) == 3 * m.n_vertices - 6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_strain_dofs_rigid_invariant(seed):
    # strain DOFs of a P1 field are unchanged when mesh and field move rigidly together
    rng = np.random.default_rng(seed)
    base = generate_cube_mesh(1)
    q, t = rotation(rng), rng.normal(size=3)
    moved = build_topology(base.vertices @ q.T + t, base.tets)
    v = rng.normal(size=(8, 3))
    d0, _ = strain_of_p1(base, v)
    d1, _ = strain_of_p1(moved, v @ q.T)
    np.testing.assert_allclose(d1, d0, atol=1e-12)
