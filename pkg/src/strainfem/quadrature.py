"""Low-order quadrature rules on tetrahedra and triangles (barycentric form)."""
import numpy as np

_A = 0.5854101966249685
_B = 0.1381966011250105

#: 4-point rule, exact for polynomials of degree 2; weights sum to 1
TET_BARY = np.array([[_A, _B, _B, _B], [_B, _A, _B, _B], [_B, _B, _A, _B], [_B, _B, _B, _A]])
TET_WEIGHTS = np.full(4, 0.25)

#: edge-midpoint rule, exact for polynomials of degree 2; weights sum to 1
TRI_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
TRI_WEIGHTS = np.full(3, 1.0 / 3.0)


def tet_points(mesh):
    """Quadrature points (nt, 4, 3) and weights (nt, 4) including tet volumes."""
    x = mesh.vertices[mesh.tets]
    pts = np.einsum("qa,tai->tqi", TET_BARY, x)
    return pts, mesh.volumes[:, None] * TET_WEIGHTS[None, :]


def boundary_points(mesh):
    """Points (nf, 3, 3), weights (nf, 3) and outward normals (nf, 3) on boundary faces."""
    normals, areas = mesh.boundary_face_normals()
    x = mesh.vertices[mesh.boundary_faces]
    pts = np.einsum("qa,fai->fqi", TRI_BARY, x)
    return pts, areas[:, None] * TRI_WEIGHTS[None, :], normals
