"""Reference quadrilateral elements, Gauss rules, geometry maps and dof maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mesh import FLUID, POROUS, Mesh

# counter-clockwise corners of [-1, 1]^2, matching the mesh cell vertex order
Q1_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
# Q2 nodes in lexicographic order, x fastest
Q2_NODES = np.array([[a, b] for b in (-1.0, 0.0, 1.0) for a in (-1.0, 0.0, 1.0)])
Q0_NODES = np.array([[0.0, 0.0]])


def _lagrange1(s):
    return np.stack([(1 - s) / 2, (1 + s) / 2], axis=-1)


def _dlagrange1(s):
    o = np.ones_like(s)
    return np.stack([-o / 2, o / 2], axis=-1)


def _lagrange2(s):
    return np.stack([s * (s - 1) / 2, 1 - s * s, s * (s + 1) / 2], axis=-1)


def _dlagrange2(s):
    return np.stack([s - 0.5, -2 * s, s + 0.5], axis=-1)


@dataclass(frozen=True)
class ReferenceElement:
    """Lagrange element on the reference square ``[-1, 1]^2``."""

    kind: str
    nodes: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def degree(self) -> int:
        return {"Q0": 0, "Q1": 1, "Q2": 2}[self.kind]

    def _tensor_index(self):
        if self.kind == "Q1":
            # (a, b) position of each ccw corner in the 2-point 1D basis
            return np.array([0, 1, 1, 0]), np.array([0, 0, 1, 1])
        a = np.tile(np.arange(3), 3)
        b = np.repeat(np.arange(3), 3)
        return a, b

    def values(self, points) -> np.ndarray:
        """Basis values, shape ``(npoints, num_nodes)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "Q0":
            return np.ones((len(pts), 1))
        L = _lagrange1 if self.kind == "Q1" else _lagrange2
        a, b = self._tensor_index()
        return L(pts[:, 0])[:, a] * L(pts[:, 1])[:, b]

    def grads(self, points) -> np.ndarray:
        """Reference gradients, shape ``(npoints, num_nodes, 2)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "Q0":
            return np.zeros((len(pts), 1, 2))
        L, dL = (_lagrange1, _dlagrange1) if self.kind == "Q1" else (_lagrange2, _dlagrange2)
        a, b = self._tensor_index()
        lx, ly = L(pts[:, 0]), L(pts[:, 1])
        dx, dy = dL(pts[:, 0]), dL(pts[:, 1])
        return np.stack([dx[:, a] * ly[:, b], lx[:, a] * dy[:, b]], axis=-1)


Q0 = ReferenceElement("Q0", Q0_NODES)
Q1 = ReferenceElement("Q1", Q1_NODES)
Q2 = ReferenceElement("Q2", Q2_NODES)
ELEMENTS = {"Q0": Q0, "Q1": Q1, "Q2": Q2}


def reference_element(kind: str) -> ReferenceElement:
    try:
        return ELEMENTS[kind]
    except KeyError:
        raise ValueError(f"unknown element kind {kind!r}") from None


def shape_eval(elem: ReferenceElement, point) -> np.ndarray:
    """Values of all basis functions of ``elem`` at a reference point (or points)."""
    vals = elem.values(point)
    return vals[0] if np.ndim(point) == 1 else vals


def shape_grad(elem: ReferenceElement, point) -> np.ndarray:
    grads = elem.grads(point)
    return grads[0] if np.ndim(point) == 1 else grads


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    order: int


def gauss_rule_1d(npoints: int) -> QuadratureRule:
    if not 1 <= int(npoints) <= 6:
        raise ValueError(f"points per axis must be in 1..6, got {npoints}")
    x, w = np.polynomial.legendre.leggauss(int(npoints))
    return QuadratureRule(x, w, 2 * int(npoints) - 1)


def gauss_rule(points_per_axis: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference square."""
    r = gauss_rule_1d(points_per_axis)
    X, Y = np.meshgrid(r.points, r.points)
    W = np.outer(r.weights, r.weights)
    return QuadratureRule(np.column_stack([X.ravel(), Y.ravel()]), W.ravel(), r.order)


def cell_geometry(mesh: Mesh, cells, points):
    """Bilinear map of reference ``points`` into each of ``cells``.

    Returns physical points ``(nc, nq, 2)``, Jacobians ``(nc, nq, 2, 2)`` with
    ``J[..., a, b] = dx_a / dxi_b``, and their determinants ``(nc, nq)``.
    """
    cells = np.atleast_1d(cells)
    pts = np.atleast_2d(points)
    X = mesh.vertices[mesh.cells[cells]]          # (nc, 4, 2)
    N = Q1.values(pts)                            # (nq, 4)
    dN = Q1.grads(pts)                            # (nq, 4, 2)
    x = np.einsum("qi,cia->cqa", N, X)
    J = np.einsum("qib,cia->cqab", dN, X)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return x, J, det


def inverse_transpose(J, det):
    """``J^{-T}`` for a stack of 2x2 Jacobians."""
    out = np.empty_like(J)
    out[..., 0, 0] = J[..., 1, 1] / det
    out[..., 1, 1] = J[..., 0, 0] / det
    out[..., 0, 1] = -J[..., 1, 0] / det
    out[..., 1, 0] = -J[..., 0, 1] / det
    return out


def map_to_physical(mesh: Mesh, cell: int, point):
    """Physical point, Jacobian and determinant of the map of ``cell`` at ``point``."""
    if not 0 <= cell < mesh.num_cells:
        raise IndexError(f"cell {cell} out of range")
    x, J, det = cell_geometry(mesh, [cell], np.asarray(point, dtype=float)[None, :])
    if det[0, 0] <= 0:
        raise ValueError(f"cell {cell} is inverted (det J = {det[0, 0]})")
    return x[0, 0], J[0, 0], float(det[0, 0])


SPACES = {
    "velocity-x": (FLUID, "Q2"),
    "velocity-y": (FLUID, "Q2"),
    "head": (POROUS, "Q2"),
    "pressure-q1": (FLUID, "Q1"),
    "pressure-q0": (FLUID, "Q0"),
}


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of one scalar field on one subdomain.

    ``cell_dofs[k]`` holds the global dofs of ``cells[k]`` in reference-node
    order; ``-1`` marks a local function that was removed from the space.
    """

    space: str
    element: ReferenceElement
    subdomain: int
    cells: np.ndarray
    cell_dofs: np.ndarray
    coords: np.ndarray
    dirichlet: np.ndarray
    mesh: Mesh = field(repr=False, default=None)

    @property
    def ndofs(self) -> int:
        return len(self.coords)


def _on_exterior(mesh: Mesh, coords: np.ndarray, subdomain: int, tol=1e-12) -> np.ndarray:
    g = mesh.geometry
    x0, x1, y0, y1 = g.fluid_rect if subdomain == FLUID else g.porous_rect
    x, y = coords[:, 0], coords[:, 1]
    far = y0 if subdomain == POROUS else y1
    return (np.abs(x - x0) < tol) | (np.abs(x - x1) < tol) | (np.abs(y - far) < tol)


def build_dofmap(mesh: Mesh, space: str, element: Optional[str] = None) -> DofMap:
    """Number the dofs of ``space``; ``element`` overrides the default element kind."""
    if space not in SPACES:
        raise ValueError(f"unknown space kind {space!r}")
    subdomain, kind = SPACES[space]
    elem = reference_element(element or kind)
    cells = mesh.subdomain_cells(subdomain)
    ci, cj = mesh.cell_ij(cells)
    cj = cj - (0 if subdomain == POROUS else mesh.ny_porous)
    nys = mesh.ny_porous if subdomain == POROUS else mesh.ny_fluid

    if elem.kind == "Q0":
        cell_dofs = np.arange(len(cells))[:, None]
        if space.startswith("pressure"):
            # Q1 + Q0 shares the constants: drop the first cell's indicator
            cell_dofs = cell_dofs - 1
        ndofs = int(cell_dofs.max()) + 1
    else:
        k = elem.degree
        ncol = k * mesh.nx + 1
        if elem.kind == "Q1":
            a = np.array([0, 1, 1, 0])
            b = np.array([0, 0, 1, 1])
        else:
            a = np.tile(np.arange(3), 3)
            b = np.repeat(np.arange(3), 3)
        col = k * ci[:, None] + a[None, :]
        J = k * cj[:, None] + b[None, :]
        cell_dofs = J * ncol + col
        ndofs = ncol * (k * nys + 1)

    coords = np.zeros((ndofs, 2))
    x, _, _ = cell_geometry(mesh, cells, elem.nodes)
    keep = cell_dofs >= 0
    coords[cell_dofs[keep]] = x[keep]

    if space.startswith("pressure"):
        dirichlet = np.empty(0, dtype=int)
    else:
        dirichlet = np.flatnonzero(_on_exterior(mesh, coords, subdomain))
    return DofMap(space, elem, subdomain, cells, cell_dofs, coords, dirichlet, mesh)


def interpolate(dofmap: DofMap, func) -> np.ndarray:
    """Nodal interpolant: ``func(x, y)`` evaluated at the dof coordinates."""
    return np.asarray(func(dofmap.coords[:, 0], dofmap.coords[:, 1]), dtype=float)
