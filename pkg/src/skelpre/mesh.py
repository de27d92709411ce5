"""Nested conforming triangulation hierarchies.

Three built-in families: the criss-cross unit square, the slit (crack)
square with duplicated slit vertices, and the graded family on (-1,1)^2
whose cells halve toward the origin.  Refinement records vertex genealogy
(every new vertex is the midpoint of a coarse edge) so the piecewise-linear
inter-level prolongations are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SparseMatrix, StructuralError, csr_from_arrays

MIN_ANGLE_DEG = 20.0
GRADED_COEFFICIENT = (1.0, 7.0, 17.0, 3.0)  # quadrants (-,-), (+,-), (+,+), (-,+)


class MeshError(ValueError):
    pass


class MeshFamilyError(MeshError):
    """Operation applied to a mesh from the wrong family."""


@dataclass(frozen=True)
class DomainKind:
    """Which computational domain: square, crack or graded.

    The graded kind carries the four-quadrant diffusion coefficient of the
    checkerboard example; it is fixed to (1, 7, 17, 3)."""

    tag: str
    coefficient: tuple = None

    def __post_init__(self):
        if self.tag not in ("square", "crack", "graded"):
            raise MeshError(f"unknown domain kind {self.tag!r}")
        if self.tag == "graded":
            coef = self.coefficient or GRADED_COEFFICIENT
            if tuple(float(c) for c in coef) != GRADED_COEFFICIENT:
                raise MeshError("graded coefficient is fixed to (1, 7, 17, 3)")
            object.__setattr__(self, "coefficient", GRADED_COEFFICIENT)
        elif self.coefficient is not None:
            raise MeshError("coefficient only applies to the graded kind")


SQUARE = DomainKind("square")
CRACK = DomainKind("crack")
GRADED = DomainKind("graded")


class Mesh:
    """Immutable conforming triangulation.

    vertices : (V, 2) float array
    triangles : (T, 3) int array, positively oriented
    faces : (E, 2) int array of sorted endpoint pairs, lexicographic order
    face_tris : (E, 2) adjacent triangles, second entry -1 on the boundary
    tri_faces : (T, 3) face id opposite local vertex i
    boundary_face / boundary_vertex : boolean masks
    h_tri : per-triangle diameter; h_max = max

    Vertex genealogy relative to the coarser level: the first
    ``n_coarse_vertices`` are coordinate-identical copies; every later
    vertex stores the coarse edge endpoints it is a midpoint of in
    ``vertex_parents``.  ``parent_tri`` maps each triangle to its parent.
    """

    def __init__(self, vertices, triangles, level=0, family=None,
                 n_coarse_vertices=0, vertex_parents=None, parent_tri=None,
                 graded_cells=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.level = level
        self.family = family
        self.n_coarse_vertices = n_coarse_vertices
        self.graded_cells = graded_cells
        nv = len(self.vertices)
        if vertex_parents is None:
            vertex_parents = np.full((nv, 2), -1, dtype=np.int64)
        self.vertex_parents = np.ascontiguousarray(vertex_parents, dtype=np.int64)
        self.parent_tri = None if parent_tri is None else np.asarray(parent_tri, dtype=np.int64)

        self._check_orientation()
        self._build_faces()
        self._build_metrics()

    # -- construction helpers -------------------------------------------------

    def _check_orientation(self):
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        if np.any(cross <= 0):
            raise MeshError("triangles must be positively oriented and nondegenerate")
        self.tri_area = 0.5 * cross

    def _build_faces(self):
        tri = self.triangles
        local = tri[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        pairs = np.sort(local, axis=1)
        faces, inverse = np.unique(pairs, axis=0, return_inverse=True)
        counts = np.bincount(inverse, minlength=len(faces))
        if counts.max(initial=0) > 2:
            raise MeshError("non-manifold edge: more than two adjacent triangles")
        self.faces = faces
        self.tri_faces = inverse.reshape(-1, 3)
        self.boundary_face = counts == 1

        order = np.argsort(inverse, kind="stable")
        tri_of = order // 3
        starts = np.zeros(len(faces) + 1, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        face_tris = np.full((len(faces), 2), -1, dtype=np.int64)
        face_tris[:, 0] = tri_of[starts[:-1]]
        two = counts == 2
        face_tris[two, 1] = tri_of[starts[:-1][two] + 1]
        self.face_tris = face_tris

        nv = len(self.vertices)
        bv = np.zeros(nv, dtype=bool)
        bv[np.unique(faces[self.boundary_face])] = True
        self.boundary_vertex = bv
        self.interior_vertices = np.flatnonzero(~bv)
        idx = np.full(nv, -1, dtype=np.int64)
        idx[self.interior_vertices] = np.arange(len(self.interior_vertices))
        self.vertex_interior_index = idx

    def _build_metrics(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        self.tri_edge_len = np.linalg.norm(e, axis=2)
        self.h_tri = self.tri_edge_len.max(axis=1)
        self.h_max = float(self.h_tri.max())
        d = self.vertices[self.faces[:, 1]] - self.vertices[self.faces[:, 0]]
        self.face_len = np.linalg.norm(d, axis=1)

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_faces(self):
        return len(self.faces)

    def min_angle_deg(self):
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = np.einsum("td,td->t", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles.append(np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0))))
        return float(np.min(angles))


def skeleton_faces(mesh):
    """Interior face ids in lexicographic (sorted endpoint) order."""
    return np.flatnonzero(~mesh.boundary_face)


# -- initial meshes -----------------------------------------------------------


def _square_t0():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    tris = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return Mesh(verts, tris, level=0, family="square")


def _crack_t0():
    # Slit square (0,1)^2 \ [0,1)x{0.5}: each half is fanned from its own
    # copy of the mid-slit vertex, so the slit sides carry independent
    # vertices while the tip (1, 0.5) stays a single copy on the outer
    # boundary.  All angles are 45 degrees.
    verts = np.array(
        [
            [0.0, 0.0],   # 0
            [1.0, 0.0],   # 1
            [1.0, 0.5],   # 2  slit tip, single copy
            [1.0, 1.0],   # 3
            [0.0, 1.0],   # 4
            [0.0, 0.5],   # 5  slit meets the left boundary
            [0.5, 0.5],   # 6  mid-slit, lower side
            [0.5, 0.5],   # 7  mid-slit, upper side
        ]
    )
    tris = np.array(
        [[0, 6, 5], [0, 1, 6], [1, 2, 6], [5, 7, 4], [7, 3, 4], [7, 2, 3]]
    )
    return Mesh(verts, tris, level=0, family="crack")


def _fan_triangulate(cells, coord_index):
    triangles = []
    for (x0, y0, s) in cells:
        corners = [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]
        ring = []
        for i in range(4):
            a, b = corners[i], corners[(i + 1) % 4]
            ring.append(coord_index[a])
            mid = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
            if mid in coord_index:
                ring.append(coord_index[mid])
        center = coord_index[(x0 + s / 2.0, y0 + s / 2.0)]
        for i in range(len(ring)):
            triangles.append((ring[i], ring[(i + 1) % len(ring)], center))
    return np.array(triangles, dtype=np.int64)


def _graded_t0():
    cells = [(-1.0, -1.0, 1.0), (0.0, -1.0, 1.0), (-1.0, 0.0, 1.0), (0.0, 0.0, 1.0)]
    coord_index = {}
    coords = []

    def add(c):
        if c not in coord_index:
            coord_index[c] = len(coords)
            coords.append(c)
        return coord_index[c]

    for (x0, y0, s) in cells:
        for c in [(x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s)]:
            add(c)
        add((x0 + s / 2.0, y0 + s / 2.0))
    tris = _fan_triangulate(cells, coord_index)
    return Mesh(np.array(coords), tris, level=0, family="graded",
                graded_cells=tuple(cells))


def initial_mesh(kind):
    """Coarsest triangulation of the requested domain family."""
    tag = kind.tag if isinstance(kind, DomainKind) else str(kind)
    if tag == "square":
        return _square_t0()
    if tag == "crack":
        return _crack_t0()
    if tag == "graded":
        return _graded_t0()
    raise MeshError(f"unknown domain kind {tag!r}")


# -- refinement ---------------------------------------------------------------


def refine_uniform(mesh):
    """Split every triangle into 4 similar children by edge midpoints."""
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[mesh.faces[:, 0]] + mesh.vertices[mesh.faces[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    parents = np.vstack(
        [np.full((nv, 2), -1, dtype=np.int64), mesh.faces.astype(np.int64)]
    )

    tri = mesh.triangles
    mbc = nv + mesh.tri_faces[:, 0]
    mca = nv + mesh.tri_faces[:, 1]
    mab = nv + mesh.tri_faces[:, 2]
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    children = np.empty((len(tri), 4, 3), dtype=np.int64)
    children[:, 0] = np.stack([a, mab, mca], axis=1)
    children[:, 1] = np.stack([mab, b, mbc], axis=1)
    children[:, 2] = np.stack([mca, mbc, c], axis=1)
    children[:, 3] = np.stack([mab, mbc, mca], axis=1)
    parent_tri = np.repeat(np.arange(len(tri), dtype=np.int64), 4)

    return Mesh(
        vertices,
        children.reshape(-1, 3),
        level=mesh.level + 1,
        family=mesh.family,
        n_coarse_vertices=nv,
        vertex_parents=parents,
        parent_tri=parent_tri,
    )


def _locate_parents(coarse, fine):
    """Parent triangle of each fine triangle by centroid point location."""
    cents = fine.vertices[fine.triangles].mean(axis=1)
    p = coarse.vertices[coarse.triangles]
    v0 = p[:, 0]
    J = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / det
    Jinv[:, 0, 1] = -J[:, 0, 1] / det
    Jinv[:, 1, 0] = -J[:, 1, 0] / det
    Jinv[:, 1, 1] = J[:, 0, 0] / det
    d = cents[None, :, :] - v0[:, None, :]
    lam = np.einsum("cij,cpj->cpi", Jinv, d)
    lam0 = 1.0 - lam.sum(axis=2)
    inside = (lam >= -1e-12).all(axis=2) & (lam0 >= -1e-12)
    parent = np.argmax(inside, axis=0)
    if not inside[parent, np.arange(len(cents))].all():
        raise MeshError("fine triangle not contained in any coarse triangle")
    return parent.astype(np.int64)


def refine_graded_step(mesh):
    """Quarter the four cells touching the origin; neighbors get a
    conforming fan split (no hanging nodes, min angle 45 degrees)."""
    if mesh.graded_cells is None:
        raise MeshFamilyError("graded refinement requires a graded-family mesh")
    cells = list(mesh.graded_cells)
    s = min(c[2] for c in cells)
    origin_corners = {(0.0, 0.0), (-s, 0.0), (-s, -s), (0.0, -s)}
    origin = [c for c in cells if (c[0], c[1]) in origin_corners and c[2] == s]
    if len(origin) != 4:
        raise MeshFamilyError("graded mesh lost its origin cell structure")

    coords = [tuple(v) for v in mesh.vertices]
    coord_index = {c: i for i, c in enumerate(coords)}
    if len(coord_index) != len(coords):
        raise MeshFamilyError("graded meshes cannot carry duplicated vertices")
    parents = [(-1, -1)] * len(coords)

    def add_mid(ia, ib):
        a, b = coords[ia], coords[ib]
        midc = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
        if midc not in coord_index:
            coord_index[midc] = len(coords)
            coords.append(midc)
            parents.append((ia, ib))
        return coord_index[midc]

    new_cells = [c for c in cells if c not in origin]
    for (x0, y0, cs) in origin:
        corner_idx = [
            coord_index[(x0, y0)],
            coord_index[(x0 + cs, y0)],
            coord_index[(x0 + cs, y0 + cs)],
            coord_index[(x0, y0 + cs)],
        ]
        center_idx = coord_index[(x0 + cs / 2.0, y0 + cs / 2.0)]
        for i in range(4):
            add_mid(corner_idx[i], corner_idx[(i + 1) % 4])
            add_mid(center_idx, corner_idx[i])
        half = cs / 2.0
        for (dx, dy) in ((0.0, 0.0), (half, 0.0), (half, half), (0.0, half)):
            new_cells.append((x0 + dx, y0 + dy, half))

    new_cells.sort()
    tris = _fan_triangulate(new_cells, coord_index)
    fine = Mesh(
        np.array(coords),
        tris,
        level=mesh.level + 1,
        family="graded",
        n_coarse_vertices=mesh.n_vertices,
        vertex_parents=np.array(parents, dtype=np.int64),
        graded_cells=tuple(new_cells),
    )
    fine.parent_tri = _locate_parents(mesh, fine)
    return fine


@dataclass
class MeshHierarchy:
    """Nested levels T_0 .. T_J with genealogy carried by each level."""

    kind: DomainKind
    levels: list

    @property
    def finest(self):
        return self.levels[-1]

    def prefix(self, j):
        return MeshHierarchy(self.kind, self.levels[: j + 1])


def build_hierarchy(kind, J):
    """Nested hierarchy: uniform refinement for square/crack, graded steps
    for the graded family."""
    if J < 0:
        raise MeshError("J must be nonnegative")
    kind = kind if isinstance(kind, DomainKind) else DomainKind(str(kind))
    levels = [initial_mesh(kind)]
    for _ in range(J):
        if kind.tag == "graded":
            levels.append(refine_graded_step(levels[-1]))
        else:
            levels.append(refine_uniform(levels[-1]))
    return MeshHierarchy(kind, levels)


def p1_prolongation(coarse, fine):
    """Interpolation matrix of conforming P1 spaces between nested meshes.

    Rows run over interior fine vertices, columns over interior coarse
    vertices (homogeneous Dirichlet data drops boundary columns)."""
    nvc = coarse.n_vertices
    if fine.n_coarse_vertices != nvc or not np.array_equal(
        fine.vertices[:nvc], coarse.vertices
    ):
        raise StructuralError("fine mesh is not a recorded refinement of coarse mesh")

    fint = fine.interior_vertices
    copies = fint[fint < nvc]
    cols_c = coarse.vertex_interior_index[copies]
    if np.any(cols_c < 0):
        raise StructuralError("interior fine copy of a boundary coarse vertex")
    rows_c = fine.vertex_interior_index[copies]

    mids = fint[fint >= nvc]
    par = fine.vertex_parents[mids]
    rows_m = np.repeat(fine.vertex_interior_index[mids], 2)
    cols_m = coarse.vertex_interior_index[par].ravel()
    keep = cols_m >= 0

    rows = np.concatenate([rows_c, rows_m[keep]])
    cols = np.concatenate([cols_c, cols_m[keep]])
    vals = np.concatenate([np.ones(len(rows_c)), np.full(int(keep.sum()), 0.5)])
    return csr_from_arrays(
        len(fine.interior_vertices), len(coarse.interior_vertices), rows, cols, vals
    )


# -- plain-text dump ----------------------------------------------------------


def dump_mesh(mesh):
    """Plain-text dump: header `V T F`, vertex lines, triangle lines, face
    lines with a boundary flag.  Used by golden-file tests."""
    out = [f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_faces}"]
    for x, y in mesh.vertices:
        out.append(f"{x!r} {y!r}")
    for a, b, c in mesh.triangles:
        out.append(f"{a} {b} {c}")
    for (a, b), flag in zip(mesh.faces, mesh.boundary_face):
        out.append(f"{a} {b} {int(flag)}")
    return "\n".join(out) + "\n"
