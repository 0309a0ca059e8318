"""Pure numpy implementation of the per-tetrahedron kernels.

Every function takes the vertex coordinate array ``coords`` (nv, 3) and the
connectivity ``tets`` (nt, 4) and works on all tetrahedra at once.  The
compiled module ``_kernels`` exposes the same functions with the same
signatures.
"""
import numpy as np

# local edge order used everywhere: (0,1),(0,2),(0,3),(1,2),(1,3),(2,3)
LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]], dtype=np.intp)


def signed_volumes(coords, tets):
    x = coords[tets]
    d = x[:, 1:, :] - x[:, :1, :]
    return np.einsum("ti,ti->t", d[:, 0], np.cross(d[:, 1], d[:, 2])) / 6.0


def dof_maps(coords, tets):
    """Per-tet 6x6 matrices taking (e11, e22, e33, e12, e13, e23) to edge DOFs.

    Row ``i`` is ``t t^T / |t|`` flattened with doubled off-diagonal weights,
    where ``t`` is the vector of local edge ``i``.
    """
    x = coords[tets]
    t = x[:, LOCAL_EDGES[:, 1], :] - x[:, LOCAL_EDGES[:, 0], :]
    length = np.linalg.norm(t, axis=2)
    out = np.empty(t.shape[:2] + (6,))
    out[..., 0] = t[..., 0] ** 2
    out[..., 1] = t[..., 1] ** 2
    out[..., 2] = t[..., 2] ** 2
    out[..., 3] = 2.0 * t[..., 0] * t[..., 1]
    out[..., 4] = 2.0 * t[..., 0] * t[..., 2]
    out[..., 5] = 2.0 * t[..., 1] * t[..., 2]
    out /= length[..., None]
    return out


def invert_blocks(blocks):
    return np.linalg.inv(blocks)


def barycentric_gradients(coords, tets):
    """Gradients of the four barycentric coordinates, shape (nt, 4, 3)."""
    x = coords[tets]
    d = np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))
    dinv = np.linalg.inv(d)
    grads = np.empty((len(tets), 4, 3))
    grads[:, 1:, :] = dinv
    grads[:, 0, :] = -dinv.sum(axis=1)
    return grads


def sym_grad_operators(coords, tets):
    """Per-tet (6, 12) operator from nodal P1 values to strain components.

    Nodal values are ordered vertex-major: (v0x, v0y, v0z, v1x, ...).
    """
    g = barycentric_gradients(coords, tets)
    nt = len(tets)
    ops = np.zeros((nt, 6, 12))
    for a in range(4):
        ga = g[:, a, :]
        c = 3 * a
        ops[:, 0, c] = ga[:, 0]
        ops[:, 1, c + 1] = ga[:, 1]
        ops[:, 2, c + 2] = ga[:, 2]
        ops[:, 3, c] = 0.5 * ga[:, 1]
        ops[:, 3, c + 1] = 0.5 * ga[:, 0]
        ops[:, 4, c] = 0.5 * ga[:, 2]
        ops[:, 4, c + 2] = 0.5 * ga[:, 0]
        ops[:, 5, c + 1] = 0.5 * ga[:, 2]
        ops[:, 5, c + 2] = 0.5 * ga[:, 1]
    return ops


def weighted_blocks(ops, weights, form):
    """``weights[t] * ops[t]^T @ form @ ops[t]`` for every t."""
    return np.einsum("t,tik,ij,tjl->tkl", weights, ops, form, ops, optimize=True)
