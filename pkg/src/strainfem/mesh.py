"""Tetrahedral meshes: topology, boundary classification and vertex patches."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .kernels import LOCAL_EDGES

#: tet volume must exceed this times (longest edge)^3
DEGENERACY_FLOOR = 1e-12

# faces of a positively oriented tet (a, b, c, d), outward orientation,
# listed opposite to local vertex 0, 1, 2, 3
_OUTWARD_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.intp)


class MeshError(ValueError):
    """Raised for invalid, degenerate or non-manifold meshes."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Immutable tetrahedral mesh with edge and boundary topology.

    Build instances with :func:`build_topology`.  All tets are stored with
    positive orientation; ``edges`` is sorted lexicographically and every
    pair has ``i < j``.
    """

    vertices: np.ndarray  # (nv, 3)
    tets: np.ndarray  # (nt, 4), positively oriented
    edges: np.ndarray  # (ne, 2), i < j
    tet_edges: np.ndarray  # (nt, 6) global edge index per local edge
    tet_edge_signs: np.ndarray  # (nt, 6) +1 if local direction is i -> j
    boundary_faces: np.ndarray  # (nbf, 3), outward orientation
    vertex_on_boundary: np.ndarray  # (nv,) bool
    edge_on_boundary: np.ndarray  # (ne,) bool
    volumes: np.ndarray  # (nt,)
    _vertex_tet_ptr: np.ndarray = field(repr=False)
    _vertex_tet_idx: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex_tets(self, a: int) -> np.ndarray:
        """Indices of the tets containing vertex ``a``."""
        return self._vertex_tet_idx[self._vertex_tet_ptr[a] : self._vertex_tet_ptr[a + 1]]

    def edge_vectors(self) -> np.ndarray:
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors(), axis=1)

    def max_diameter(self) -> float:
        """Largest tet diameter (longest edge of any tet)."""
        return float(self.edge_lengths().max())

    def centroid(self) -> np.ndarray:
        """Volume centroid of the meshed domain."""
        c = self.vertices[self.tets].mean(axis=1)
        return (self.volumes[:, None] * c).sum(axis=0) / self.volumes.sum()

    def boundary_face_normals(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit outward normals and areas of the boundary faces."""
        x = self.vertices[self.boundary_faces]
        cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        area2 = np.linalg.norm(cr, axis=1)
        return cr / area2[:, None], 0.5 * area2

    def transformed(self, rotation, translation) -> "TetMesh":
        """Return the mesh with every vertex mapped to ``rotation @ x + translation``."""
        x = self.vertices @ np.asarray(rotation, dtype=float).T + np.asarray(translation, dtype=float)
        return build_topology(x, self.tets)


def build_topology(vertices, tets) -> TetMesh:
    """Build a :class:`TetMesh` from coordinates and tet connectivity.

    Parameters
    ----------
    vertices : array_like, shape (nv, 3)
    tets : array_like of int, shape (nt, 4)
        Zero-based vertex indices.  Orientation is fixed up automatically.

    Raises
    ------
    MeshError
        On empty input, out-of-range indices, repeated vertices within a
        tet, volume below the degeneracy floor, faces shared by more than
        two tets, or two tets overlapping across a shared face.
    """
    x = np.asarray(vertices, dtype=float)
    t = np.asarray(tets)
    if x.ndim != 2 or x.shape[1] != 3:
        raise MeshError("vertices must have shape (nv, 3)")
    if t.ndim != 2 or t.shape[1] != 4 or len(t) == 0:
        raise MeshError("need at least one tet with 4 vertex indices")
    if not np.issubdtype(t.dtype, np.integer):
        raise MeshError("tet indices must be integers")
    t = t.astype(np.intp)
    if t.min() < 0 or t.max() >= len(x):
        raise MeshError("inconsistent connectivity: vertex index out of range")
    st = np.sort(t, axis=1)
    if np.any(st[:, 1:] == st[:, :-1]):
        bad = int(np.nonzero(np.any(st[:, 1:] == st[:, :-1], axis=1))[0][0])
        raise MeshError(f"degenerate tet {bad}: repeated vertex index")
    x = np.ascontiguousarray(x)
    t = np.ascontiguousarray(t)

    vol = kernels.signed_volumes(x, t)
    neg = vol < 0
    if np.any(neg):
        t = t.copy()
        t[neg, 2], t[neg, 3] = t[neg, 3], t[neg, 2].copy()
        vol = np.abs(vol)
    ev = x[t[:, LOCAL_EDGES[:, 1]]] - x[t[:, LOCAL_EDGES[:, 0]]]
    longest = np.linalg.norm(ev, axis=2).max(axis=1)
    small = vol < DEGENERACY_FLOOR * longest**3
    if np.any(small):
        bad = int(np.nonzero(small)[0][0])
        raise MeshError(f"degenerate tet {bad}: volume {vol[bad]:.3e} below floor")

    # edges
    local = t[:, LOCAL_EDGES]  # (nt, 6, 2)
    lo = local.min(axis=2)
    hi = local.max(axis=2)
    pairs = np.stack([lo.ravel(), hi.ravel()], axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    tet_edges = inverse.reshape(-1, 6)
    signs = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

    # faces
    faces = t[:, _OUTWARD_FACES].reshape(-1, 3)
    sorted_faces = np.sort(faces, axis=1)
    ufaces, finv, fcount = np.unique(sorted_faces, axis=0, return_inverse=True, return_counts=True)
    finv = finv.ravel()
    if np.any(fcount > 2):
        bad = ufaces[np.nonzero(fcount > 2)[0][0]]
        raise MeshError(f"non-manifold face {tuple(int(i) for i in bad)} shared by more than two tets")
    parity = _permutation_parity(faces, sorted_faces)
    shared = fcount[finv] == 2
    if np.any(shared):
        # the two copies of a shared face must have opposite orientation
        psum = np.zeros(len(ufaces), dtype=np.intp)
        np.add.at(psum, finv[shared], parity[shared])
        if np.any(psum[fcount == 2] != 0):
            raise MeshError("inconsistent connectivity: overlapping tets across a shared face")
    boundary_faces = faces[fcount[finv] == 1]

    vertex_on_boundary = np.zeros(len(x), dtype=bool)
    vertex_on_boundary[boundary_faces.ravel()] = True
    bedges = np.sort(boundary_faces[:, [0, 1, 1, 2, 0, 2]].reshape(-1, 2), axis=1)
    edge_on_boundary = np.zeros(len(edges), dtype=bool)
    if len(bedges):
        key = edges[:, 0] * len(x) + edges[:, 1]
        bkey = np.unique(bedges[:, 0] * len(x) + bedges[:, 1])
        edge_on_boundary[np.searchsorted(key, bkey)] = True

    flat = t.ravel()
    order = np.argsort(flat, kind="stable")
    ptr = np.zeros(len(x) + 1, dtype=np.intp)
    np.add.at(ptr, flat + 1, 1)
    ptr = np.cumsum(ptr)

    return TetMesh(
        vertices=_frozen(x, float),
        tets=_frozen(t, np.intp),
        edges=_frozen(edges, np.intp),
        tet_edges=_frozen(tet_edges, np.intp),
        tet_edge_signs=_frozen(signs, np.int8),
        boundary_faces=_frozen(boundary_faces, np.intp),
        vertex_on_boundary=_frozen(vertex_on_boundary, bool),
        edge_on_boundary=_frozen(edge_on_boundary, bool),
        volumes=_frozen(vol, float),
        _vertex_tet_ptr=_frozen(ptr, np.intp),
        _vertex_tet_idx=_frozen(order // 4, np.intp),
    )


def _permutation_parity(faces, sorted_faces):
    """+1 for an even permutation of the sorted triple, -1 for odd."""
    # a 3-cycle is even, so only the position of the smallest entry matters
    # up to rotation; compare with the rotation that starts at the minimum
    k = np.argmin(faces, axis=1)
    rolled = np.stack([faces[np.arange(len(faces)), (k + i) % 3] for i in range(3)], axis=1)
    return np.where(np.all(rolled == sorted_faces, axis=1), 1, -1)


def generate_cube_mesh(n: int) -> TetMesh:
    """Unit cube split into ``n**3`` cells of six Kuhn tetrahedra each."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ticks = np.arange(n + 1) / n
    zz, yy, xx = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def vid(i, j, k):
        return i + (n + 1) * (j + (n + 1) * k)

    tets = []
    for k, j, i in itertools.product(range(n), repeat=3):
        for perm in itertools.permutations(range(3)):
            c = [i, j, k]
            tet = [vid(*c)]
            for axis in perm:
                c[axis] += 1
                tet.append(vid(*c))
            tets.append(tet)
    return build_topology(verts, np.array(tets))


def read_mesh(path) -> TetMesh:
    """Read the plain text format: ``nv nt``, nv lines ``x y z``, nt lines ``i j k l``."""
    tokens = Path(path).read_text().split()
    try:
        nv, nt = int(tokens[0]), int(tokens[1])
        xs = np.array(tokens[2 : 2 + 3 * nv], dtype=float).reshape(nv, 3)
        ts = np.array(tokens[2 + 3 * nv : 2 + 3 * nv + 4 * nt], dtype=np.int64).reshape(nt, 4)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    return build_topology(xs, ts)


def write_mesh(mesh: TetMesh, path) -> None:
    lines = [f"{mesh.n_vertices} {mesh.n_tets}"]
    lines += [" ".join(repr(float(c)) for c in p) for p in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in tet) for tet in mesh.tets]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class VertexPatch:
    """Star of a vertex: the tets sharing it and the counts used by the Euler identities.

    ``n_boundary`` is the number of vertices on the patch boundary.
    ``n_inner_boundary`` counts the patch boundary vertices that are not on
    the part of the domain boundary through the center, i.e. vertices ``v``
    whose edge to the center is an interior edge.  It is only meaningful for
    a boundary center and is 0 otherwise.
    """

    center: int
    tets: np.ndarray
    vertices: np.ndarray  # global indices, sorted; position gives the local index
    edges: np.ndarray  # global edge indices, sorted
    boundary_center: bool
    N: int
    A: int
    n_boundary: int
    n_inner_boundary: int

    @property
    def expected_constraints(self) -> int:
        """Number of compatibility forms the patch carries."""
        return self.n_inner_boundary if self.boundary_center else self.n_boundary - 3


def vertex_patch(mesh: TetMesh, a: int) -> VertexPatch:
    """Extract the star of vertex ``a`` and check that it is a topological ball.

    The link of ``a`` (faces opposite ``a``) must be a closed sphere for an
    interior vertex and a disc with a single boundary loop for a boundary
    vertex.
    """
    if not 0 <= a < mesh.n_vertices:
        raise MeshError(f"vertex {a} out of range")
    ptets = mesh.vertex_tets(a)
    if len(ptets) == 0:
        raise MeshError(f"vertex {a} belongs to no tet")
    tv = mesh.tets[ptets]
    verts = np.unique(tv)
    pedges = np.unique(mesh.tet_edges[ptets])
    boundary_center = bool(mesh.vertex_on_boundary[a])

    link = np.sort(tv[tv != a].reshape(-1, 3), axis=1)
    link_edges = np.sort(link[:, [0, 1, 1, 2, 0, 2]].reshape(-1, 2), axis=1)
    le, le_count = np.unique(link_edges, axis=0, return_counts=True)
    link_verts = verts[verts != a]
    euler = len(link_verts) - len(le) + len(link)
    if not _link_connected(link, link_verts):
        raise MeshError(f"vertex {a}: star is not a ball (disconnected link)")
    if np.any(le_count > 2):
        raise MeshError(f"vertex {a}: star is not a ball (non-manifold link)")
    rim = le[le_count == 1]
    if boundary_center:
        rim_verts, rim_deg = np.unique(rim, return_counts=True)
        if euler != 1 or len(rim) == 0 or np.any(rim_deg != 2) or not _link_connected(rim, rim_verts):
            raise MeshError(f"vertex {a}: boundary star is not a ball")
        incident = np.nonzero((mesh.edges[pedges] == a).any(axis=1))[0]
        n_inner = int(np.count_nonzero(~mesh.edge_on_boundary[pedges[incident]]))
        n_boundary = len(verts)
    else:
        if euler != 2 or len(rim):
            raise MeshError(f"vertex {a}: interior star is not a ball")
        n_inner = 0
        n_boundary = len(link_verts)
    return VertexPatch(
        center=int(a),
        tets=ptets,
        vertices=verts,
        edges=pedges,
        boundary_center=boundary_center,
        N=len(verts),
        A=len(pedges),
        n_boundary=n_boundary,
        n_inner_boundary=n_inner,
    )


def _link_connected(simplices, verts):
    # union-find over the vertices of a small simplicial complex
    parent = {int(v): int(v) for v in verts}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for s in simplices:
        r0 = find(int(s[0]))
        for v in s[1:]:
            parent[find(int(v))] = r0
    return len({find(v) for v in parent}) <= 1


@dataclass(frozen=True)
class EulerCheck:
    center: int
    boundary_center: bool
    residual: int

    @property
    def passed(self) -> bool:
        return self.residual == 0


def euler_check(patch: VertexPatch) -> EulerCheck:
    """Integer residual of the edge-count identity for a vertex star.

    Interior center: ``A - (3N - 6) - (N_b - 3)``.
    Boundary center: ``A - (3N - 6) - N_ib``.
    """
    base = patch.A - (3 * patch.N - 6)
    if patch.boundary_center:
        res = base - patch.n_inner_boundary
    else:
        res = base - (patch.n_boundary - 3)
    return EulerCheck(patch.center, patch.boundary_center, int(res))
