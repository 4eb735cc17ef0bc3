"""Static reference triangulations of the unit square and their patch maps."""
from dataclasses import dataclass
import io

import numpy as np

INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
TAG_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}


class MeshError(ValueError):
    pass


def all_dirichlet(midpoint):
    return DIRICHLET


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with edge records.

    Edge ``e`` joins ``edge_vertices[e]`` (oriented counterclockwise for the
    left element), has outward unit normal ``normals[e]`` w.r.t. its left
    element and ``right[e] == -1`` on the boundary.
    """

    vertices: np.ndarray
    elements: np.ndarray
    edge_vertices: np.ndarray
    left: np.ndarray
    right: np.ndarray
    left_local: np.ndarray
    right_local: np.ndarray
    tags: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    diameters: np.ndarray
    inradii: np.ndarray

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edge_vertices)

    @property
    def areas(self):
        return 0.5 * signed_double_areas(self.vertices, self.elements)

    @property
    def interior(self):
        return self.tags == INTERIOR

    @property
    def dirichlet(self):
        return self.tags == DIRICHLET

    @property
    def neumann(self):
        return self.tags == NEUMANN

    @property
    def penalized(self):
        """Edges carrying jump terms: interior plus Dirichlet."""
        return self.tags != NEUMANN

    def element_edges(self):
        """(n_elements, 3) edge index of each local edge."""
        out = np.full((self.n_elements, 3), -1, dtype=int)
        idx = np.arange(self.n_edges)
        out[self.left, self.left_local] = idx
        inner = self.right >= 0
        out[self.right[inner], self.right_local[inner]] = idx[inner]
        return out


def signed_double_areas(vertices, elements):
    p0, p1, p2 = (vertices[elements[:, k]] for k in range(3))
    d1, d2 = p1 - p0, p2 - p0
    return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]


def _element_sizes(vertices, elements):
    p = vertices[elements]
    lens = np.stack([np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], 1)
    area = 0.5 * np.abs(signed_double_areas(vertices, elements))
    with np.errstate(divide="ignore", invalid="ignore"):
        inradius = 2.0 * area / lens.sum(axis=1)
    return lens.max(axis=1), inradius


def from_triangles(vertices, elements, classifier=all_dirichlet):
    """Build edge records for a triangle list; fails on non-manifold edges."""
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=int)
    owners = {}
    for k, tri in enumerate(elements):
        for loc in range(3):
            a, b = int(tri[loc]), int(tri[(loc + 1) % 3])
            owners.setdefault((min(a, b), max(a, b)), []).append((k, loc, a, b))

    ev, left, right, lloc, rloc, tags = [], [], [], [], [], []
    for key in sorted(owners):
        recs = owners[key]
        if len(recs) > 2:
            raise MeshError(f"non-manifold edge {key} shared by {len(recs)} elements")
        k, loc, a, b = recs[0]
        ev.append((a, b))
        left.append(k)
        lloc.append(loc)
        if len(recs) == 2:
            right.append(recs[1][0])
            rloc.append(recs[1][1])
            tags.append(INTERIOR)
        else:
            right.append(-1)
            rloc.append(-1)
            mid = 0.5 * (vertices[a] + vertices[b])
            tag = classifier(mid)
            if tag not in (DIRICHLET, NEUMANN):
                raise MeshError(f"boundary classifier returned invalid tag {tag!r}")
            tags.append(tag)

    ev = np.array(ev, dtype=int)
    d = vertices[ev[:, 1]] - vertices[ev[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / lengths[:, None]
    diam, inr = _element_sizes(vertices, elements)
    return Mesh(
        vertices=vertices,
        elements=elements,
        edge_vertices=ev,
        left=np.array(left),
        right=np.array(right),
        left_local=np.array(lloc),
        right_local=np.array(rloc),
        tags=np.array(tags),
        lengths=lengths,
        normals=normals,
        diameters=diam,
        inradii=inr,
    )


def build_structured_unit_square(n, classifier=all_dirichlet, diagonal="uniform"):
    """n x n grid of squares, each split along one diagonal into 2 triangles.

    ``diagonal="uniform"`` splits every cell from its lower-left to its
    upper-right corner; ``"alternating"`` flips the diagonal in a
    checkerboard pattern.
    """
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if diagonal not in ("uniform", "alternating"):
        raise ValueError(f"unknown diagonal mode {diagonal!r}")
    n = int(n)
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if diagonal == "uniform" or (i + j) % 2 == 0:
                tris += [(v00, v10, v11), (v00, v11, v01)]
            else:
                tris += [(v00, v10, v01), (v10, v11, v01)]
    return from_triangles(verts, tris, classifier)


def perturb_vertices(mesh, amplitude, rng, classifier=all_dirichlet):
    """Randomly jitter interior vertices by up to ``amplitude`` per coordinate."""
    on_boundary = np.zeros(len(mesh.vertices), dtype=bool)
    on_boundary[mesh.edge_vertices[mesh.right < 0].ravel()] = True
    verts = mesh.vertices.copy()
    jitter = rng.uniform(-amplitude, amplitude, size=verts.shape)
    verts[~on_boundary] += jitter[~on_boundary]
    out = from_triangles(verts, mesh.elements, classifier)
    if np.any(signed_double_areas(out.vertices, out.elements) <= 0):
        raise MeshError("perturbation inverted an element")
    return out


@dataclass(frozen=True)
class PatchMap:
    """CSR-style element lists for edge patches and element (vertex) patches."""

    edge_indptr: np.ndarray
    edge_members: np.ndarray
    edge_area: np.ndarray
    element_indptr: np.ndarray
    element_members: np.ndarray
    element_area: np.ndarray

    def edge_patch(self, e):
        return self.edge_members[self.edge_indptr[e]:self.edge_indptr[e + 1]]

    def element_patch(self, k):
        return self.element_members[self.element_indptr[k]:self.element_indptr[k + 1]]


def _csr(lists):
    indptr = np.zeros(len(lists) + 1, dtype=int)
    indptr[1:] = np.cumsum([len(x) for x in lists])
    members = np.concatenate([np.asarray(x, dtype=int) for x in lists])
    return indptr, members


def build_connectivity(mesh):
    counts = np.bincount(np.concatenate([mesh.left, mesh.right[mesh.right >= 0]]),
                         minlength=mesh.n_elements)
    if np.any(counts > 3):
        raise MeshError("element with more than three edges")
    areas = mesh.areas
    edge_lists = [[l] if r < 0 else [l, r] for l, r in zip(mesh.left, mesh.right)]

    by_vertex = [[] for _ in range(len(mesh.vertices))]
    for k, tri in enumerate(mesh.elements):
        for v in tri:
            by_vertex[v].append(k)
    elem_lists = []
    for tri in mesh.elements:
        elem_lists.append(sorted(set().union(*(by_vertex[v] for v in tri))))

    eptr, emem = _csr(edge_lists)
    kptr, kmem = _csr(elem_lists)
    return PatchMap(
        edge_indptr=eptr,
        edge_members=emem,
        edge_area=np.add.reduceat(areas[emem], eptr[:-1]),
        element_indptr=kptr,
        element_members=kmem,
        element_area=np.add.reduceat(areas[kmem], kptr[:-1]),
    )


@dataclass
class QualityReport:
    shape_ratio: np.ndarray
    min_angle_deg: np.ndarray
    neighbour_ratio: np.ndarray
    degenerate: np.ndarray
    shape_violations: np.ndarray
    uniformity_violations: np.ndarray

    @property
    def ok(self):
        return not (self.degenerate.any() or self.shape_violations.any()
                    or self.uniformity_violations.any())


def validate_mesh(mesh, xi0=10.0, quasi_uniformity=2.0):
    """Per-element h_K / r_K, minimal angle and neighbour diameter ratios."""
    p = mesh.vertices[mesh.elements]
    angles = []
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        nu, nv = np.linalg.norm(u, axis=1), np.linalg.norm(v, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.einsum("ij,ij->i", u, v) / (nu * nv)
        angles.append(np.degrees(np.arccos(np.clip(np.nan_to_num(c, nan=1.0), -1, 1))))
    min_angle = np.min(angles, axis=0)
    area2 = signed_double_areas(mesh.vertices, mesh.elements)
    degenerate = area2 <= 1e-14 * mesh.diameters ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(degenerate, np.inf, mesh.diameters / mesh.inradii)

    inner = mesh.right >= 0
    d_l, d_r = mesh.diameters[mesh.left[inner]], mesh.diameters[mesh.right[inner]]
    with np.errstate(divide="ignore", invalid="ignore"):
        nratio = np.maximum(d_l / d_r, d_r / d_l)
    worst = np.ones(mesh.n_elements)
    np.maximum.at(worst, mesh.left[inner], nratio)
    np.maximum.at(worst, mesh.right[inner], nratio)
    return QualityReport(
        shape_ratio=ratio,
        min_angle_deg=min_angle,
        neighbour_ratio=worst,
        degenerate=degenerate,
        shape_violations=ratio > xi0,
        uniformity_violations=worst > quasi_uniformity,
    )


def write_mesh_listing(mesh, fh=None):
    """Plain-text node/element/edge listing; returns the text if fh is None.

    Layout: a ``# aledg mesh listing v1`` header, then one section per record
    kind introduced by ``NODES n``, ``ELEMENTS n`` and ``EDGES n``. Edge lines
    are ``id v0 v1 left right tag length nx ny``.
    """
    out = fh if fh is not None else io.StringIO()
    out.write("# aledg mesh listing v1\n")
    out.write(f"NODES {len(mesh.vertices)}\n")
    for i, (x, y) in enumerate(mesh.vertices):
        out.write(f"{i} {x:.17g} {y:.17g}\n")
    out.write(f"ELEMENTS {mesh.n_elements}\n")
    for k, (a, b, c) in enumerate(mesh.elements):
        out.write(f"{k} {a} {b} {c}\n")
    out.write(f"EDGES {mesh.n_edges}\n")
    for e in range(mesh.n_edges):
        a, b = mesh.edge_vertices[e]
        nx, ny = mesh.normals[e]
        out.write(f"{e} {a} {b} {mesh.left[e]} {mesh.right[e]} {TAG_NAMES[mesh.tags[e]]} "
                  f"{mesh.lengths[e]:.17g} {nx:.17g} {ny:.17g}\n")
    if fh is None:
        return out.getvalue()
