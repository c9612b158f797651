"""Structured quadrilateral meshes of the fluid/porous two-block geometry.

The fluid block sits on top of the porous block and both are meshed as one
tensor-product grid, so every interface vertex is literally the same vertex
for both subdomains.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

FLUID = 0
POROUS = 1

INTERIOR = 0
EXTERIOR_FLUID = 1
EXTERIOR_POROUS = 2
INTERFACE = 3

EDGE_TAG_NAMES = {
    INTERIOR: "interior",
    EXTERIOR_FLUID: "exterior-fluid",
    EXTERIOR_POROUS: "exterior-porous",
    INTERFACE: "interface",
}
CELL_TAG_NAMES = {FLUID: "fluid", POROUS: "porous"}

Rect = Tuple[float, float, float, float]  # (x0, x1, y0, y1)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Geometry:
    """Two axis-aligned rectangles sharing the horizontal segment ``y = interface_y``."""

    fluid_rect: Rect = (0.0, 1.0, 1.0, 2.0)
    porous_rect: Rect = (0.0, 1.0, 0.0, 1.0)
    interface_y: float = 1.0

    def validate(self) -> None:
        fx0, fx1, fy0, fy1 = self.fluid_rect
        px0, px1, py0, py1 = self.porous_rect
        if not (fx1 > fx0 and fy1 > fy0 and px1 > px0 and py1 > py0):
            raise MeshError("rectangles must have positive extent")
        if fy0 != self.interface_y or py1 != self.interface_y:
            raise MeshError("fluid and porous rectangles do not share the interface line")
        if (fx0, fx1) != (px0, px1):
            raise MeshError("fluid and porous rectangles must span the same x-range")

    # unit normal of the fluid block on the interface, pointing into the porous block
    normal_fluid = (0.0, -1.0)
    normal_porous = (0.0, 1.0)
    tangent = (1.0, 0.0)


@dataclass(frozen=True)
class Mesh:
    """Conforming quadrilateral mesh with subdomain and edge tags.

    Cells are stored row by row from the bottom of the porous block to the top
    of the fluid block; ``cells[k]`` lists vertices counter-clockwise starting
    at the lower-left corner.
    """

    geometry: Geometry
    n: int
    nx: int
    ny_porous: int
    ny_fluid: int
    vertices: np.ndarray
    cells: np.ndarray
    cell_tags: np.ndarray
    edges: np.ndarray
    edge_cells: np.ndarray
    edge_tags: np.ndarray = field(repr=False)
    h: float = 0.0

    @property
    def ny(self) -> int:
        return self.ny_porous + self.ny_fluid

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def subdomain_cells(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.cell_tags == tag)

    def edges_with_tag(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.edge_tags == tag)

    def cell_ij(self, cell: np.ndarray | int) -> Tuple[np.ndarray, np.ndarray]:
        cell = np.asarray(cell)
        return cell % self.nx, cell // self.nx

    def dump(self) -> str:
        """Plain-text dump: ``v x y`` per vertex, ``c i0 i1 i2 i3 tag`` per cell."""
        lines = [f"v {float(x)!r} {float(y)!r}" for x, y in self.vertices]
        for c, tag in zip(self.cells, self.cell_tags):
            lines.append("c {} {} {} {} {}".format(*c, CELL_TAG_NAMES[int(tag)]))
        return "\n".join(lines) + "\n"


def _cells_along(length: float, n: int, what: str) -> int:
    m = length * n
    k = int(round(m))
    if k < 1 or abs(m - k) > 1e-9 * max(1.0, m):
        raise MeshError(f"{what} extent {length} is not a whole number of cells at n={n}")
    return k


def build_structured(geometry: Geometry | None = None, n: int = 4) -> Mesh:
    """Mesh both blocks with ``n`` cells per unit length.

    Examples
    --------
    >>> m = build_structured(Geometry(), 2)
    >>> m.num_cells, len(m.vertices), int((m.edge_tags == INTERFACE).sum())
    (8, 15, 2)
    """
    geometry = geometry or Geometry()
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    geometry.validate()
    x0, x1, _, fy1 = geometry.fluid_rect
    _, _, py0, py1 = geometry.porous_rect
    nx = _cells_along(x1 - x0, n, "x")
    nyp = _cells_along(py1 - py0, n, "porous y")
    nyf = _cells_along(fy1 - geometry.interface_y, n, "fluid y")
    ny = nyp + nyf

    xs = np.linspace(x0, x1, nx + 1)
    ys_p = np.linspace(py0, py1, nyp + 1)
    ys_f = np.linspace(geometry.interface_y, fy1, nyf + 1)
    # shared row: the interface coordinate is taken verbatim from the geometry
    ys = np.concatenate([ys_p[:-1], [geometry.interface_y], ys_f[1:]])
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    cells = np.column_stack([vid(ii, jj), vid(ii + 1, jj), vid(ii + 1, jj + 1), vid(ii, jj + 1)])
    cell_tags = np.where(jj < nyp, POROUS, FLUID)

    # horizontal edges (i, j)-(i+1, j) then vertical edges (i, j)-(i, j+1)
    hi, hj = np.meshgrid(np.arange(nx), np.arange(ny + 1))
    hi, hj = hi.ravel(), hj.ravel()
    vi, vj = np.meshgrid(np.arange(nx + 1), np.arange(ny))
    vi, vj = vi.ravel(), vj.ravel()
    edges = np.vstack([
        np.column_stack([vid(hi, hj), vid(hi + 1, hj)]),
        np.column_stack([vid(vi, vj), vid(vi, vj + 1)]),
    ])
    below = np.where(hj > 0, (hj - 1) * nx + hi, -1)
    above = np.where(hj < ny, hj * nx + hi, -1)
    left = np.where(vi > 0, vj * nx + vi - 1, -1)
    right = np.where(vi < nx, vj * nx + vi, -1)
    edge_cells = np.vstack([np.column_stack([below, above]), np.column_stack([left, right])])
    # keep the existing neighbour first
    swap = edge_cells[:, 0] < 0
    edge_cells[swap] = edge_cells[swap][:, ::-1]

    cell_sizes = np.hypot(np.diff(xs).max(), max(np.diff(ys_p).max(), np.diff(ys_f).max()))
    mesh = Mesh(
        geometry=geometry, n=n, nx=nx, ny_porous=nyp, ny_fluid=nyf,
        vertices=vertices, cells=cells, cell_tags=cell_tags,
        edges=edges, edge_cells=edge_cells, edge_tags=np.empty(0, dtype=int),
        h=float(cell_sizes),
    )
    object.__setattr__(mesh, "edge_tags", classify_boundary(mesh))
    return mesh


def classify_boundary(mesh: Mesh) -> np.ndarray:
    """Tag every edge as interior, exterior-fluid, exterior-porous or interface."""
    c0, c1 = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    t0 = mesh.cell_tags[c0]
    t1 = np.where(c1 >= 0, mesh.cell_tags[np.maximum(c1, 0)], -1)
    tags = np.full(len(mesh.edges), INTERIOR)
    exterior = c1 < 0
    tags[exterior & (t0 == FLUID)] = EXTERIOR_FLUID
    tags[exterior & (t0 == POROUS)] = EXTERIOR_POROUS
    tags[~exterior & (t0 != t1)] = INTERFACE
    return tags
