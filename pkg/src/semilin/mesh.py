"""Conforming simplicial meshes on the unit square/cube and sheared images.

Meshes are immutable: every operation returns a new ``SimplexMesh``.  Cells
are canonically oriented (positive signed volume) and boundary flags are
derived from facet incidence, so conformity is re-checked after every
construction, refinement, and bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimplexMesh",
    "MeshStats",
    "MeshFormatError",
    "build_structured_mesh",
    "uniform_refine",
    "bisect_shortest_edge",
    "mesh_stats",
    "knupp_quality",
    "cell_volumes",
    "cell_diameters",
    "check_conformity",
    "read_mesh",
    "write_mesh",
    "SHEAR_2D_POOR",
    "SHEAR_3D_POOR",
]

# Shear values that push the structured meshes to the bad-angle regime:
# 2.0 gives a smallest planar angle of about 8.1 degrees in 2D, 1.45 a
# smallest dihedral angle of about 8.3 degrees in 3D.
SHEAR_2D_POOR = 2.0
SHEAR_3D_POOR = 1.45


class MeshFormatError(ValueError):
    """Raised for malformed mesh files; message carries the line number."""


@dataclass(frozen=True)
class SimplexMesh:
    """Conforming triangulation: vertices, (d+1)-vertex cells, boundary flags."""

    dim: int
    vertices: np.ndarray      # (n_vertices, dim) float64
    cells: np.ndarray         # (n_cells, dim + 1) int64
    boundary_vertex: np.ndarray  # (n_vertices,) bool

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.vertices.ndim != 2 or self.vertices.shape[1] != self.dim:
            raise ValueError("vertices must have shape (n_vertices, dim)")
        if self.cells.ndim != 2 or self.cells.shape[1] != self.dim + 1:
            raise ValueError("cells must have shape (n_cells, dim + 1)")
        if self.boundary_vertex.shape != (len(self.vertices),):
            raise ValueError("boundary_vertex must have one flag per vertex")
        for arr in (self.vertices, self.cells, self.boundary_vertex):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex)


def _signed_volumes(vertices, cells, dim):
    edges = vertices[cells[:, 1:]] - vertices[cells[:, :1]]
    return np.linalg.det(edges) / math.factorial(dim)


def _cell_facets(cells, dim):
    """All (cell, facet) rows as sorted vertex tuples, shape (n_cells*(d+1), d)."""
    n = cells.shape[1]
    keep = [np.delete(np.arange(n), i) for i in range(n)]
    facets = np.concatenate([cells[:, k] for k in keep], axis=0)
    return np.sort(facets, axis=1)


def _finalize(dim, vertices, cells) -> SimplexMesh:
    """Orient cells positively, derive boundary flags, verify conformity."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    vols = _signed_volumes(vertices, cells, dim)
    flipped = vols < 0
    if np.any(flipped):
        cells = cells.copy()
        cells[flipped, -2], cells[flipped, -1] = (
            cells[flipped, -1].copy(),
            cells[flipped, -2].copy(),
        )
        vols = _signed_volumes(vertices, cells, dim)
    if np.any(vols <= 0.0):
        bad = int(np.argmin(vols))
        raise ValueError(f"cell {bad} is degenerate (volume {vols[bad]:.3e})")
    boundary = _boundary_flags(vertices, cells, dim)
    mesh = SimplexMesh(dim, vertices, cells, boundary)
    check_conformity(mesh)
    return mesh


def _boundary_flags(vertices, cells, dim):
    facets = _cell_facets(cells, dim)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    flags = np.zeros(len(vertices), dtype=bool)
    flags[np.unique(uniq[counts == 1])] = True
    return flags


def check_conformity(mesh: SimplexMesh) -> None:
    """Facet-hash conformity check; raises ValueError on violation."""
    facets = _cell_facets(mesh.cells, mesh.dim)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    if counts.max(initial=1) > 2:
        raise ValueError("non-conforming mesh: a facet is shared by >2 cells")
    if np.any(_signed_volumes(mesh.vertices, mesh.cells, mesh.dim) <= 0):
        raise ValueError("mesh has a non-positive cell volume")
    expected = np.zeros(mesh.n_vertices, dtype=bool)
    expected[np.unique(uniq[counts == 1])] = True
    if not np.array_equal(expected, mesh.boundary_vertex):
        raise ValueError("boundary flags inconsistent with facet incidence")


def cell_volumes(mesh: SimplexMesh) -> np.ndarray:
    return _signed_volumes(mesh.vertices, mesh.cells, mesh.dim)


def _edge_pairs(dim):
    k = dim + 1
    return [(i, j) for i in range(k) for j in range(i + 1, k)]


def cell_diameters(mesh: SimplexMesh) -> np.ndarray:
    """Per-cell diameter (longest edge)."""
    pts = mesh.vertices[mesh.cells]
    diam = np.zeros(mesh.n_cells)
    for i, j in _edge_pairs(mesh.dim):
        d = np.linalg.norm(pts[:, i] - pts[:, j], axis=1)
        diam = np.maximum(diam, d)
    return diam


# ---------------------------------------------------------------------------
# construction

def _shear_matrix(dim, shear):
    s = np.eye(dim)
    for i in range(dim - 1):
        s[i, i + 1] = shear
    return s


def build_structured_mesh(domain: str, n: int, shear: float = 0.0) -> SimplexMesh:
    """Uniform simplicial mesh of the unit square/cube, optionally sheared.

    2D: n^2 squares split into 2 triangles each.  3D: n^3 cubes split into
    6 Kuhn tetrahedra each.  shear > 0 applies x -> x + shear*y (and
    y -> y + shear*z in 3D), mapping the domain onto a parallelogram with
    controlled bad angles.
    """
    if domain == "unit-square":
        dim = 2
    elif domain == "unit-cube":
        dim = 3
    else:
        raise ValueError(f"unknown domain {domain!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if not np.isfinite(shear) or shear < 0:
        raise ValueError("shear must be finite and >= 0")

    side = np.linspace(0.0, 1.0, n + 1)
    if dim == 2:
        xx, yy = np.meshgrid(side, side, indexing="xy")
        vertices = np.column_stack([xx.ravel(), yy.ravel()])

        def vid(i, j):
            return j * (n + 1) + i

        cells = []
        for j in range(n):
            for i in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
    else:
        grid = np.stack(np.meshgrid(side, side, side, indexing="ij"), axis=-1)
        vertices = grid.transpose(2, 1, 0, 3).reshape(-1, 3)

        def vid(i, j, k):
            return (k * (n + 1) + j) * (n + 1) + i

        # Kuhn split: one tet per permutation of the coordinate walk 0 -> 1.
        perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        cells = []
        for k in range(n):
            for j in range(n):
                for i in range(n):
                    base = np.array([i, j, k])
                    for perm in perms:
                        corner = base.copy()
                        tet = [vid(*corner)]
                        for axis in perm:
                            corner = corner.copy()
                            corner[axis] += 1
                            tet.append(vid(*corner))
                        cells.append(tuple(tet))

    if shear > 0:
        vertices = vertices @ _shear_matrix(dim, shear).T
    return _finalize(dim, vertices, np.asarray(cells, dtype=np.int64))


# ---------------------------------------------------------------------------
# refinement

def _edge_midpoint_index(mesh):
    """Map each unique cell edge (sorted pair) to a new midpoint vertex id."""
    cells = mesh.cells
    pairs = np.concatenate(
        [np.sort(cells[:, [i, j]], axis=1) for i, j in _edge_pairs(mesh.dim)]
    )
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    midpoints = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    mid_ids = inverse.reshape(len(_edge_pairs(mesh.dim)), mesh.n_cells) + mesh.n_vertices
    vertices = np.vstack([mesh.vertices, midpoints])
    return vertices, mid_ids


def uniform_refine(mesh: SimplexMesh) -> SimplexMesh:
    """Red refinement: 4 similar children per triangle, 8 children per tet.

    The tetrahedral interior octahedron is split along its shortest diagonal
    (ties broken by the lowest sorted global vertex-index pair), which keeps
    the refinement hierarchy shape regular.
    """
    vertices, mid = _edge_midpoint_index(mesh)
    c = mesh.cells
    if mesh.dim == 2:
        # edge order for dim 2: (0,1) (0,2) (1,2)
        m01, m02, m12 = mid[0], mid[1], mid[2]
        children = [
            np.column_stack([c[:, 0], m01, m02]),
            np.column_stack([c[:, 1], m12, m01]),
            np.column_stack([c[:, 2], m02, m12]),
            np.column_stack([m01, m12, m02]),
        ]
        return _finalize(2, vertices, np.concatenate(children))

    # edge order for dim 3: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
    m01, m02, m03, m12, m13, m23 = (mid[i] for i in range(6))
    corner = [
        np.column_stack([c[:, 0], m01, m02, m03]),
        np.column_stack([c[:, 1], m01, m12, m13]),
        np.column_stack([c[:, 2], m02, m12, m23]),
        np.column_stack([c[:, 3], m03, m13, m23]),
    ]
    # Octahedron diagonals pair midpoints of opposite parent edges.
    diag_pairs = [(m01, m23), (m02, m13), (m03, m12)]
    lengths = np.stack(
        [np.linalg.norm(vertices[a] - vertices[b], axis=1) for a, b in diag_pairs]
    )
    lo = np.stack([np.minimum(a, b) for a, b in diag_pairs])
    hi = np.stack([np.maximum(a, b) for a, b in diag_pairs])
    order = np.lexsort((hi, lo, lengths), axis=0)
    choice = order[0]

    octa = np.empty((mesh.n_cells, 4, 4), dtype=np.int64)
    all_mids = np.stack([m01, m02, m03, m12, m13, m23], axis=1)
    opposite = {0: 5, 1: 4, 2: 3, 3: 2, 4: 1, 5: 0}
    for diag_idx in range(3):
        sel = choice == diag_idx
        if not np.any(sel):
            continue
        a_loc, b_loc = {0: (0, 5), 1: (1, 4), 2: (2, 3)}[diag_idx]
        rest = [i for i in range(6) if i not in (a_loc, b_loc)]
        # order the remaining four midpoints as a cycle: consecutive entries
        # must not be opposite-edge midpoints
        c1 = rest[0]
        c2 = opposite[c1]
        others = [i for i in rest if i not in (c1, c2)]
        cycle = [c1, others[0], c2, others[1]]
        a = all_mids[sel, a_loc]
        b = all_mids[sel, b_loc]
        ring = [all_mids[sel, i] for i in cycle]
        for t in range(4):
            octa[sel, t, 0] = a
            octa[sel, t, 1] = b
            octa[sel, t, 2] = ring[t]
            octa[sel, t, 3] = ring[(t + 1) % 4]
    children = np.concatenate(corner + [octa.reshape(-1, 4)])
    return _finalize(3, vertices, children)


def bisect_shortest_edge(mesh: SimplexMesh, steps: int = 1) -> SimplexMesh:
    """Repeatedly bisect the globally shortest edge (2D degradation study).

    Each step inserts the midpoint of the shortest edge (ties resolved by the
    lexicographically smallest sorted vertex pair) and splits every incident
    triangle by joining the midpoint to the opposite vertex.
    """
    if mesh.dim != 2:
        raise ValueError("shortest-edge bisection is only defined for 2D meshes")
    if steps < 1:
        raise ValueError("steps must be >= 1")

    vertices = list(map(tuple, mesh.vertices))
    cells = [tuple(c) for c in mesh.cells]
    for _ in range(steps):
        verts = np.asarray(vertices)
        edge_cells: dict[tuple[int, int], list[int]] = {}
        for ci, cell in enumerate(cells):
            for i, j in ((0, 1), (0, 2), (1, 2)):
                key = (cell[i], cell[j]) if cell[i] < cell[j] else (cell[j], cell[i])
                edge_cells.setdefault(key, []).append(ci)
        edges = sorted(edge_cells)
        lengths = np.linalg.norm(
            verts[[e[0] for e in edges]] - verts[[e[1] for e in edges]], axis=1
        )
        shortest = edges[int(np.argmin(lengths))]  # argmin keeps first = lex smallest
        a, b = shortest
        mid_id = len(vertices)
        vertices.append(tuple(0.5 * (verts[a] + verts[b])))
        for ci in sorted(edge_cells[shortest], reverse=True):
            cell = cells[ci]
            (opp,) = [v for v in cell if v not in (a, b)]
            del cells[ci]
            cells.append((a, mid_id, opp))
            cells.append((mid_id, b, opp))
    return _finalize(2, np.asarray(vertices), np.asarray(cells, dtype=np.int64))


# ---------------------------------------------------------------------------
# quality and statistics

def knupp_quality(cell_vertices) -> float:
    """Mean-ratio shape metric in [0, 1]; 1 for equilateral/regular simplices.

    Triangle: 4*sqrt(3)*A / sum(edge^2).  Tetrahedron: 12*(3V)^(2/3) / sum(edge^2).
    Degenerate cells return 0.
    """
    pts = np.asarray(cell_vertices, dtype=np.float64)
    d = pts.shape[1]
    edge2 = sum(
        float(np.dot(pts[i] - pts[j], pts[i] - pts[j])) for i, j in _edge_pairs(d)
    )
    if edge2 == 0.0:
        return 0.0
    vol = abs(float(np.linalg.det(pts[1:] - pts[0]))) / math.factorial(d)
    if d == 2:
        q = 4.0 * math.sqrt(3.0) * vol / edge2
    else:
        q = 12.0 * (3.0 * vol) ** (2.0 / 3.0) / edge2
    return min(max(q, 0.0), 1.0)


def _all_qualities(mesh):
    pts = mesh.vertices[mesh.cells]
    d = mesh.dim
    edge2 = np.zeros(mesh.n_cells)
    for i, j in _edge_pairs(d):
        diff = pts[:, i] - pts[:, j]
        edge2 += np.einsum("ck,ck->c", diff, diff)
    vol = np.abs(_signed_volumes(mesh.vertices, mesh.cells, d))
    if d == 2:
        q = 4.0 * math.sqrt(3.0) * vol / edge2
    else:
        q = 12.0 * (3.0 * vol) ** (2.0 / 3.0) / edge2
    return np.clip(q, 0.0, 1.0)


def _planar_angles(mesh):
    pts = mesh.vertices[mesh.cells]
    angles = []
    for at in range(3):
        o = pts[:, at]
        u = pts[:, (at + 1) % 3] - o
        v = pts[:, (at + 2) % 3] - o
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        dot = np.einsum("ck,ck->c", u, v)
        angles.append(np.arctan2(np.abs(cross), dot))
    return np.degrees(np.concatenate(angles))


def _dihedral_angles(mesh):
    pts = mesh.vertices[mesh.cells]
    angles = []
    for i, j in _edge_pairs(3):
        k, l = [m for m in range(4) if m not in (i, j)]
        e = pts[:, j] - pts[:, i]
        e = e / np.linalg.norm(e, axis=1, keepdims=True)
        w1 = pts[:, k] - pts[:, i]
        w2 = pts[:, l] - pts[:, i]
        p1 = w1 - np.einsum("ck,ck->c", w1, e)[:, None] * e
        p2 = w2 - np.einsum("ck,ck->c", w2, e)[:, None] * e
        cross = np.cross(p1, p2)
        dot = np.einsum("ck,ck->c", p1, p2)
        angles.append(np.arctan2(np.linalg.norm(cross, axis=1), dot))
    return np.degrees(np.concatenate(angles))


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_min: float
    n_cells: int
    n_vertices: int
    n_interior_dofs: int
    min_angle_deg: float
    max_angle_deg: float
    min_quality: float
    max_quality: float


def mesh_stats(mesh: SimplexMesh) -> MeshStats:
    """Diameters, extreme planar/dihedral angles, and Knupp quality range."""
    diam = cell_diameters(mesh)
    angles = _planar_angles(mesh) if mesh.dim == 2 else _dihedral_angles(mesh)
    quality = _all_qualities(mesh)
    return MeshStats(
        h_max=float(diam.max()),
        h_min=float(diam.min()),
        n_cells=mesh.n_cells,
        n_vertices=mesh.n_vertices,
        n_interior_dofs=int(np.count_nonzero(~mesh.boundary_vertex)),
        min_angle_deg=float(angles.min()),
        max_angle_deg=float(angles.max()),
        min_quality=float(quality.min()),
        max_quality=float(quality.max()),
    )


# ---------------------------------------------------------------------------
# plain-text mesh file format
#
#   line 1: dim n_vertices n_cells
#   next n_vertices lines: d floats (17 significant digits)
#   next n_cells lines: d+1 zero-based vertex indices
#   last line: n_vertices 0/1 boundary flags

def write_mesh(mesh: SimplexMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        for c in mesh.cells:
            fh.write(" ".join(str(i) for i in c) + "\n")
        fh.write(" ".join("1" if b else "0" for b in mesh.boundary_vertex) + "\n")


def read_mesh(path) -> SimplexMesh:
    """Read a mesh file; negatively oriented cells are repaired by a vertex swap."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    def fail(lineno, msg):
        raise MeshFormatError(f"{path}: line {lineno}: {msg}")

    if not lines:
        fail(1, "empty file")
    head = lines[0].split()
    if len(head) != 3:
        fail(1, "expected 'dim n_vertices n_cells'")
    try:
        dim, n_vertices, n_cells = (int(x) for x in head)
    except ValueError:
        fail(1, "header entries must be integers")
    if dim not in (2, 3):
        fail(1, f"dim must be 2 or 3, got {dim}")
    expected_lines = 1 + n_vertices + n_cells + 1
    if len(lines) < expected_lines:
        fail(len(lines) + 1, f"expected {expected_lines} lines, file has {len(lines)}")

    vertices = np.empty((n_vertices, dim))
    for i in range(n_vertices):
        lineno = 2 + i
        parts = lines[1 + i].split()
        if len(parts) != dim:
            fail(lineno, f"expected {dim} coordinates")
        try:
            vertices[i] = [float(x) for x in parts]
        except ValueError:
            fail(lineno, "bad float")

    cells = np.empty((n_cells, dim + 1), dtype=np.int64)
    for i in range(n_cells):
        lineno = 2 + n_vertices + i
        parts = lines[1 + n_vertices + i].split()
        if len(parts) != dim + 1:
            fail(lineno, f"expected {dim + 1} vertex indices")
        try:
            cells[i] = [int(x) for x in parts]
        except ValueError:
            fail(lineno, "bad integer")
        if cells[i].min() < 0 or cells[i].max() >= n_vertices:
            fail(lineno, f"vertex index out of range [0, {n_vertices})")

    flag_lineno = 1 + n_vertices + n_cells
    flags = lines[flag_lineno].split()
    if len(flags) != n_vertices:
        fail(flag_lineno + 1, f"expected {n_vertices} boundary flags")
    if any(f not in ("0", "1") for f in flags):
        fail(flag_lineno + 1, "boundary flags must be 0 or 1")
    stored = np.array([f == "1" for f in flags])

    try:
        mesh = _finalize(dim, vertices, cells)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
    if not np.array_equal(stored, mesh.boundary_vertex):
        bad = int(np.flatnonzero(stored != mesh.boundary_vertex)[0])
        raise MeshFormatError(
            f"{path}: line {flag_lineno + 1}: boundary flag for vertex {bad} "
            "inconsistent with facet incidence"
        )
    return mesh
