"""Discrete hypersurfaces inside a cone and their differential quantities.

Three representations cover the ambient dimensions the package works in:

* ``polyline`` -- an ordered 2D chain (open with endpoints on the cone
  boundary, or closed) for planar cones;
* ``axisymmetric`` -- a meridian (rho, z) chain generating a surface of
  revolution inside a circular cone or 3D half-space;
* ``trianglemesh`` -- a 3D triangle mesh with boundary-vertex flags.

Sign conventions: the unit normal field N points into the enclosed region,
so a round ball's boundary has positive mean curvature 1/r and support
function g = <X, N> = -r.  Enclosed volume is computed from the position
flux through the surface; the part of the region boundary lying on the
cone wall drops out because the position field is tangent there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .cones import (
    Circular,
    ConeSpec,
    HalfSpace,
    Polyhedral,
    Sector,
    contains,
    distance_to_boundary,
    inward_boundary_normal,
)

POLYLINE = "polyline"
AXISYMMETRIC = "axisymmetric"
TRIANGLE_MESH = "trianglemesh"

IN_CONE_TOL = 1e-9
ON_BOUNDARY_TOL = 1e-10
AXIS_TOL = 1e-12


class SurfaceValidationError(ValueError):
    """The discrete surface violates a geometric invariant."""


@dataclass(frozen=True)
class DiscreteHypersurface:
    representation: str
    vertices: np.ndarray
    elements: np.ndarray
    boundary_flags: np.ndarray
    cone: ConeSpec
    closed: bool
    orientation: int = 1
    flipped: bool = False  # True when the constructor re-oriented for positive volume
    projector: object = None  # optional callable (points, flags) -> points for refine

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    def scaled(self, lam):
        """Dilate all vertices about the vertex of the cone."""
        return replace(self, vertices=self.vertices * float(lam))

    def to_json(self):
        return {
            "representation": self.representation,
            "vertices": self.vertices.tolist(),
            "elements": self.elements.tolist(),
            "boundary_flags": [bool(b) for b in self.boundary_flags],
            "closed": self.closed,
        }


@dataclass(frozen=True)
class SurfaceQuantities:
    """Per-vertex differential data plus the surface totals.

    ``curvature_vectors`` hold the integrated discrete mean-curvature vector
    (the negative gradient of surface measure with respect to the vertex),
    which satisfies an exact discrete divergence identity on closed chains.
    """

    normals: np.ndarray
    mean_curvature: np.ndarray
    sigma2: np.ndarray
    support: np.ndarray
    area_weights: np.ndarray
    curvature_vectors: np.ndarray
    boundary_indices: np.ndarray
    conormals: np.ndarray
    boundary_weights: np.ndarray
    area: float
    enclosed_volume: float

    @property
    def mean_curvature_avg(self):
        return float(np.sum(self.mean_curvature * self.area_weights) / np.sum(self.area_weights))


# -- constructors ---------------------------------------------------------------

def polyline_surface(cone, vertices, closed=False, boundary_flags=None, projector=None,
                     validate=True):
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise SurfaceValidationError("polyline vertices must be an (m, 2) array")
    if cone.ambient_dim != 2:
        raise SurfaceValidationError("polyline surfaces need a 2D cone")
    m = vertices.shape[0]
    if boundary_flags is None:
        boundary_flags = np.zeros(m, dtype=bool)
        if not closed:
            boundary_flags[0] = boundary_flags[-1] = True
    boundary_flags = np.asarray(boundary_flags, dtype=bool)
    if closed:
        elements = np.stack([np.arange(m), np.roll(np.arange(m), -1)], axis=1)
    else:
        elements = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)
    surf = DiscreteHypersurface(POLYLINE, vertices, elements, boundary_flags, cone, closed,
                                projector=projector)
    surf = _orient_positive(surf)
    if validate:
        validate_surface(surf)
    return surf


def axisymmetric_surface(cone, vertices, boundary_flags=None, projector=None, validate=True):
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise SurfaceValidationError("meridian vertices must be an (m, 2) array of (rho, z)")
    if cone.ambient_dim != 3 or not isinstance(cone.shape, (Circular, HalfSpace)):
        raise SurfaceValidationError("axisymmetric surfaces need a 3D circular cone or half-space")
    m = vertices.shape[0]
    if boundary_flags is None:
        boundary_flags = np.zeros(m, dtype=bool)
        for idx in (0, m - 1):
            if vertices[idx, 0] > AXIS_TOL:
                boundary_flags[idx] = True
    boundary_flags = np.asarray(boundary_flags, dtype=bool)
    elements = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)
    closed = bool(vertices[0, 0] <= AXIS_TOL and vertices[-1, 0] <= AXIS_TOL)
    surf = DiscreteHypersurface(AXISYMMETRIC, vertices, elements, boundary_flags, cone, closed,
                                projector=projector)
    surf = _orient_positive(surf)
    if validate:
        validate_surface(surf)
    return surf


def triangle_mesh_surface(cone, vertices, triangles, boundary_flags=None, projector=None,
                          validate=True):
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise SurfaceValidationError("mesh vertices must be an (m, 3) array")
    if cone.ambient_dim != 3:
        raise SurfaceValidationError("triangle meshes need a 3D cone")
    if boundary_flags is None:
        boundary_flags = np.zeros(vertices.shape[0], dtype=bool)
        for idx in _mesh_boundary_vertices(triangles):
            boundary_flags[idx] = True
    boundary_flags = np.asarray(boundary_flags, dtype=bool)
    closed = len(_mesh_boundary_edges(triangles)) == 0
    surf = DiscreteHypersurface(TRIANGLE_MESH, vertices, triangles, boundary_flags, cone, closed,
                                projector=projector)
    surf = _orient_positive(surf)
    if validate:
        validate_surface(surf)
    return surf


def _orient_positive(surf):
    """Pick the orientation (or winding) that makes the enclosed volume positive."""
    try:
        vol = _signed_volume(surf)
    except SurfaceValidationError:
        return surf  # leave as-is; measure() will raise with a precise message
    if vol < 0.0:
        if surf.representation == TRIANGLE_MESH:
            flipped = surf.elements[:, [0, 2, 1]].copy()
            return replace(surf, elements=flipped, flipped=True)
        return replace(surf, orientation=-surf.orientation, flipped=True)
    return surf


# -- JSON / CSV interfaces ------------------------------------------------------

def surface_from_json(data, cone):
    if isinstance(data, str):
        data = json.loads(data)
    rep = data.get("representation")
    vertices = np.asarray(data["vertices"], dtype=float)
    flags = data.get("boundary_flags")
    flags = None if flags is None else np.asarray(flags, dtype=bool)
    if rep == POLYLINE:
        return polyline_surface(cone, vertices, closed=bool(data.get("closed", False)),
                                boundary_flags=flags)
    if rep == AXISYMMETRIC:
        return axisymmetric_surface(cone, vertices, boundary_flags=flags)
    if rep == TRIANGLE_MESH:
        return triangle_mesh_surface(cone, vertices, np.asarray(data["elements"], dtype=int),
                                     boundary_flags=flags)
    raise SurfaceValidationError(f"unknown surface representation {rep!r}")


VERTEX_CSV_HEADER = ["idx", "x", "y", "z", "H", "sigma2", "g", "area_weight", "is_boundary"]


def quantities_csv(surface):
    """Per-vertex quantities as an RFC-4180 CSV string."""
    import csv as _csv
    import io

    q = quantities(surface)
    buf = io.StringIO()
    writer = _csv.writer(buf, lineterminator="\r\n")
    writer.writerow(VERTEX_CSV_HEADER)
    pts = _embedded_positions(surface)
    for i in range(surface.num_vertices):
        writer.writerow(
            [str(i)]
            + [f"{c:.17g}" for c in pts[i]]
            + [f"{q.mean_curvature[i]:.17g}", f"{q.sigma2[i]:.17g}", f"{q.support[i]:.17g}",
               f"{q.area_weights[i]:.17g}", str(int(surface.boundary_flags[i]))]
        )
    return buf.getvalue()


def _embedded_positions(surface):
    v = surface.vertices
    if surface.representation == TRIANGLE_MESH:
        return v
    if surface.representation == AXISYMMETRIC:
        return np.stack([v[:, 0], np.zeros(len(v)), v[:, 1]], axis=1)
    return np.concatenate([v, np.zeros((len(v), 1))], axis=1)


# -- measure --------------------------------------------------------------------

def measure(surface):
    """(surface area, enclosed volume) of the discrete hypersurface."""
    area = _surface_area(surface)
    return area, _signed_volume(surface, check_boundary=True)


def _surface_area(surface):
    v = surface.vertices
    if surface.representation == TRIANGLE_MESH:
        t = surface.elements
        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        return float(np.sum(np.linalg.norm(cross, axis=1)) / 2.0)
    a, b = v[surface.elements[:, 0]], v[surface.elements[:, 1]]
    lengths = np.linalg.norm(b - a, axis=1)
    if surface.representation == AXISYMMETRIC:
        rho_bar = (a[:, 0] + b[:, 0]) / 2.0
        return float(np.sum(2.0 * math.pi * rho_bar * lengths))
    return float(np.sum(lengths))


def _signed_volume(surface, check_boundary=False):
    v = surface.vertices
    if not surface.closed and check_boundary:
        _check_open_boundary_on_cone(surface)
    if surface.representation == TRIANGLE_MESH:
        t = surface.elements
        # inward winding normals: V = -(1/3) sum <centroid, area-vector>
        area_vec = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]]) / 2.0
        centroid = (v[t[:, 0]] + v[t[:, 1]] + v[t[:, 2]]) / 3.0
        return float(-np.sum(np.einsum("ij,ij->i", centroid, area_vec)) / 3.0)
    a, b = v[surface.elements[:, 0]], v[surface.elements[:, 1]]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    if surface.representation == AXISYMMETRIC:
        return float(surface.orientation * math.pi / 3.0 * np.sum(cross * (a[:, 0] + b[:, 0])))
    return float(surface.orientation * 0.5 * np.sum(cross))


def _check_open_boundary_on_cone(surface):
    v = surface.vertices
    scale = max(1.0, float(np.max(np.linalg.norm(v, axis=1))))
    if surface.representation == AXISYMMETRIC:
        for idx in (0, len(v) - 1):
            rho = v[idx, 0]
            if rho <= AXIS_TOL:
                continue  # meridian closes on the axis of revolution
            p3 = np.array([rho, 0.0, v[idx, 1]])
            if distance_to_boundary(surface.cone, p3) > ON_BOUNDARY_TOL * scale * 10:
                raise SurfaceValidationError(
                    "open meridian endpoint off the cone boundary: the volume flux "
                    "formula needs the free boundary on the cone wall"
                )
        return
    pts = _embedded_positions(surface)[:, : surface.vertices.shape[1]]
    boundary = np.where(surface.boundary_flags)[0]
    if boundary.size == 0:
        raise SurfaceValidationError("open surface without boundary flags; volume undefined")
    for idx in boundary:
        if distance_to_boundary(surface.cone, pts[idx]) > ON_BOUNDARY_TOL * scale * 10:
            raise SurfaceValidationError(
                "open surface boundary off the cone wall; volume flux formula invalid"
            )


# -- chain frames (shared by polyline and meridian) ------------------------------

def _chain_edges(vertices, closed):
    m = len(vertices)
    if closed:
        idx = np.arange(m)
        return np.stack([idx, np.roll(idx, -1)], axis=1)
    return np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)


def _rot90(vec):
    return np.stack([-vec[..., 1], vec[..., 0]], axis=-1)


def _circumcenters(a, b, c):
    """Circumcenters of 2D triples; rows with near-zero determinant get NaN."""
    d = 2.0 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1])
               + c[:, 0] * (a[:, 1] - b[:, 1]))
    sa = np.sum(a * a, axis=1)
    sb = np.sum(b * b, axis=1)
    sc = np.sum(c * c, axis=1)
    ux = sa * (b[:, 1] - c[:, 1]) + sb * (c[:, 1] - a[:, 1]) + sc * (a[:, 1] - b[:, 1])
    uy = sa * (c[:, 0] - b[:, 0]) + sb * (a[:, 0] - c[:, 0]) + sc * (b[:, 0] - a[:, 0])
    scale = np.maximum(np.linalg.norm(b - a, axis=1), np.linalg.norm(c - b, axis=1))
    bad = np.abs(d) < 1e-14 * np.maximum(scale, 1.0) ** 2
    dd = np.where(bad, 1.0, d)
    centers = np.stack([ux / dd, uy / dd], axis=1)
    centers[bad] = np.nan
    return centers


def _menger_curvature(a, b, c):
    """Unsigned curvature of the circle through each 2D triple (0 when collinear)."""
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    lab = np.linalg.norm(b - a, axis=1)
    lbc = np.linalg.norm(c - b, axis=1)
    lca = np.linalg.norm(c - a, axis=1)
    denom = lab * lbc * lca
    denom = np.where(denom == 0.0, 1.0, denom)
    return 2.0 * np.abs(cross) / denom


@dataclass
class _ChainFrame:
    lengths: np.ndarray          # per edge
    tangents: np.ndarray         # per edge, unit
    edge_normals: np.ndarray     # per edge, unit, oriented
    normals: np.ndarray          # per vertex, unit, oriented
    curvature: np.ndarray        # per vertex, signed against the normal
    weights: np.ndarray          # per vertex chain length weight
    curvature_vectors: np.ndarray  # integrated mean-curvature vector per vertex


def _chain_frame(vertices, closed, orientation, reflect_axis=False):
    """Discrete frame of a 2D chain: normals, signed curvature, weights.

    ``reflect_axis`` enables the even-reflection ghost across rho = 0 used by
    meridians whose endpoints sit on the axis of revolution.
    """
    m = len(vertices)
    edges = _chain_edges(vertices, closed)
    evec = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    lengths = np.linalg.norm(evec, axis=1)
    if np.any(lengths <= 0.0):
        raise SurfaceValidationError("zero-length chain element")
    tangents = evec / lengths[:, None]
    edge_normals = _rot90(tangents) * orientation

    # vertex weights: half the adjacent edge lengths
    weights = np.zeros(m)
    np.add.at(weights, edges[:, 0], lengths / 2.0)
    np.add.at(weights, edges[:, 1], lengths / 2.0)

    # vertex normals: chord bisector at interior vertices
    normals = np.zeros((m, 2))
    np.add.at(normals, edges[:, 0], edge_normals)
    np.add.at(normals, edges[:, 1], edge_normals)
    norms = np.linalg.norm(normals, axis=1)
    for i in np.where(norms < 1e-12)[0]:
        # anti-parallel adjacent edges: fall back to one adjacent edge normal
        normals[i] = edge_normals[min(int(i), len(edge_normals) - 1)]
    norms = np.linalg.norm(normals, axis=1)
    normals /= norms[:, None]

    # triples for curvature (ghost continuation at open ends)
    prev_idx = np.arange(-1, m - 1)
    next_idx = np.arange(1, m + 1)
    if closed:
        prev_idx %= m
        next_idx %= m
        a, b, c = vertices[prev_idx], vertices, vertices[next_idx]
    else:
        a = np.empty((m, 2))
        c = np.empty((m, 2))
        a[1:] = vertices[:-1]
        c[:-1] = vertices[1:]
        if reflect_axis and vertices[0, 0] <= AXIS_TOL:
            a[0] = np.array([-vertices[1, 0], vertices[1, 1]])
        else:
            a[0] = vertices[2] if m >= 3 else vertices[1]  # end triple reuse
        if reflect_axis and vertices[-1, 0] <= AXIS_TOL:
            c[-1] = np.array([-vertices[-2, 0], vertices[-2, 1]])
        else:
            c[-1] = vertices[-3] if m >= 3 else vertices[-2]
        b = vertices

    kappa = _menger_curvature(a, b, c)
    centers = _circumcenters(a, b, c)
    to_center = centers - b
    side = np.einsum("ij,ij->i", np.nan_to_num(to_center), normals)
    kappa = kappa * np.sign(np.where(np.abs(side) < 1e-300, 1.0, side))
    kappa[np.isnan(centers[:, 0])] = 0.0

    # endpoint normals from the osculating circle (exact on sampled circles)
    if not closed and m >= 3:
        for idx, edge in ((0, 0), (m - 1, len(edges) - 1)):
            cc = centers[idx]
            if np.isnan(cc[0]):
                normals[idx] = edge_normals[edge]
                continue
            cand = cc - vertices[idx]
            ncand = np.linalg.norm(cand)
            if ncand < 1e-14:
                normals[idx] = edge_normals[edge]
                continue
            cand /= ncand
            if float(cand @ edge_normals[edge]) < 0.0:
                cand = -cand
            normals[idx] = cand
        # curvature sign at the ends against the corrected normal
        for idx in (0, m - 1):
            cc = centers[idx]
            if not np.isnan(cc[0]):
                s = float((cc - vertices[idx]) @ normals[idx])
                kappa[idx] = abs(kappa[idx]) * (1.0 if s >= 0.0 else -1.0)

    # integrated curvature vectors: difference of unit tangents along the chain
    kv = np.zeros((m, 2))
    if closed:
        kv = tangents - np.roll(tangents, 1, axis=0)
    else:
        kv[1:-1] = tangents[1:] - tangents[:-1]
    return _ChainFrame(lengths, tangents, edge_normals, normals, kappa, weights, kv)


# -- quantities -----------------------------------------------------------------

def quantities(surface):
    """All per-vertex differential quantities plus totals for the surface."""
    if surface.representation == POLYLINE:
        return _polyline_quantities(surface)
    if surface.representation == AXISYMMETRIC:
        return _axisymmetric_quantities(surface)
    return _mesh_quantities(surface)


def _polyline_quantities(surface):
    frame = _chain_frame(surface.vertices, surface.closed, surface.orientation)
    m = surface.num_vertices
    support = np.einsum("ij,ij->i", surface.vertices, frame.normals)
    boundary = np.where(surface.boundary_flags)[0]
    conormals = np.zeros((boundary.size, 2))
    bweights = np.ones(boundary.size)  # counting measure on curve endpoints
    for k, idx in enumerate(boundary):
        conormals[k] = frame.tangents[0] if idx == 0 else -frame.tangents[-1]
    area, volume = measure(surface)
    return SurfaceQuantities(
        normals=frame.normals,
        mean_curvature=frame.curvature,
        sigma2=frame.curvature**2,
        support=support,
        area_weights=frame.weights,
        curvature_vectors=frame.curvature_vectors,
        boundary_indices=boundary,
        conormals=conormals,
        boundary_weights=bweights,
        area=area,
        enclosed_volume=volume,
    )


def _axisymmetric_quantities(surface):
    v = surface.vertices
    m = len(v)
    frame = _chain_frame(v, False, surface.orientation, reflect_axis=True)
    rho = v[:, 0]
    n_rho = frame.normals[:, 0]
    on_axis = rho <= AXIS_TOL
    kappa_m = frame.curvature
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa_p = np.where(on_axis, kappa_m, -n_rho / np.where(on_axis, 1.0, rho))
    mean_curv = (kappa_m + kappa_p) / 2.0
    sigma2 = kappa_m**2 + kappa_p**2

    # revolve the meridian weights: each segment carries 2*pi*rho_bar*length
    a, b = v[surface.elements[:, 0]], v[surface.elements[:, 1]]
    seg_area = 2.0 * math.pi * (a[:, 0] + b[:, 0]) / 2.0 * frame.lengths
    weights = np.zeros(m)
    np.add.at(weights, surface.elements[:, 0], seg_area / 2.0)
    np.add.at(weights, surface.elements[:, 1], seg_area / 2.0)

    normals3 = np.stack([frame.normals[:, 0], np.zeros(m), frame.normals[:, 1]], axis=1)
    support = rho * frame.normals[:, 0] + v[:, 1] * frame.normals[:, 1]

    boundary = np.where(surface.boundary_flags)[0]
    conormals = np.zeros((boundary.size, 3))
    bweights = np.zeros(boundary.size)
    for k, idx in enumerate(boundary):
        t2 = frame.tangents[0] if idx == 0 else -frame.tangents[-1]
        conormals[k] = np.array([t2[0], 0.0, t2[1]])
        bweights[k] = 2.0 * math.pi * rho[idx]

    kv2 = frame.curvature_vectors
    kv3 = np.stack([kv2[:, 0], np.zeros(m), kv2[:, 1]], axis=1)
    area, volume = measure(surface)
    return SurfaceQuantities(
        normals=normals3,
        mean_curvature=mean_curv,
        sigma2=sigma2,
        support=support,
        area_weights=weights,
        curvature_vectors=kv3,
        boundary_indices=boundary,
        conormals=conormals,
        boundary_weights=bweights,
        area=area,
        enclosed_volume=volume,
    )


def _mesh_quantities(surface):
    v = surface.vertices
    t = surface.elements
    m = len(v)
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    area_vec = np.cross(e1, e2) / 2.0
    face_area = np.linalg.norm(area_vec, axis=1)
    if np.any(face_area <= 0.0):
        raise SurfaceValidationError("zero-area mesh element")
    face_normal = area_vec / face_area[:, None]  # inward by winding convention

    weights = _mixed_voronoi_areas(v, t, face_area)

    # angle-weighted vertex normals
    normals = np.zeros((m, 3))
    for k in range(3):
        p0 = v[t[:, k]]
        u1 = v[t[:, (k + 1) % 3]] - p0
        u2 = v[t[:, (k + 2) % 3]] - p0
        cosang = np.einsum("ij,ij->i", u1, u2) / (
            np.linalg.norm(u1, axis=1) * np.linalg.norm(u2, axis=1)
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(normals, t[:, k], face_normal * ang[:, None])
    normals /= np.linalg.norm(normals, axis=1)[:, None]

    # cotangent mean-curvature vectors, pointing with the curvature (inward on spheres)
    kv = np.zeros((m, 3))
    for k in range(3):
        i = t[:, k]
        j = t[:, (k + 1) % 3]
        opp = t[:, (k + 2) % 3]
        u1 = v[i] - v[opp]
        u2 = v[j] - v[opp]
        cross = np.linalg.norm(np.cross(u1, u2), axis=1)
        cot = np.einsum("ij,ij->i", u1, u2) / np.where(cross == 0.0, 1.0, cross)
        np.add.at(kv, i, 0.5 * cot[:, None] * (v[j] - v[i]))
        np.add.at(kv, j, 0.5 * cot[:, None] * (v[i] - v[j]))
    mean_curv = np.einsum("ij,ij->i", kv, normals) / (2.0 * weights)

    sigma2 = _mesh_sigma2(v, t, normals, mean_curv)
    support = np.einsum("ij,ij->i", v, normals)

    boundary = np.where(surface.boundary_flags)[0]
    bedges = _mesh_boundary_edges(t)
    bweights = np.zeros(boundary.size)
    conormals = np.zeros((boundary.size, 3))
    pos_of = {int(idx): k for k, idx in enumerate(boundary)}
    neighbor_dirs = {int(idx): [] for idx in boundary}
    for (i, j) in bedges:
        length = float(np.linalg.norm(v[j] - v[i]))
        for idx in (i, j):
            if idx in pos_of:
                bweights[pos_of[idx]] += length / 2.0
        neighbor_dirs.setdefault(i, []).append(j)
        neighbor_dirs.setdefault(j, []).append(i)
    # conormal: average inward direction projected to the tangent plane,
    # orthogonalized against the boundary curve direction
    ring = {}
    for tri in t:
        for idx in tri:
            ring.setdefault(int(idx), []).append(tri)
    for idx in boundary:
        idx = int(idx)
        tris = ring.get(idx, [])
        if not tris:
            continue
        centroid = np.mean([np.mean(v[tri], axis=0) for tri in tris], axis=0)
        d = centroid - v[idx]
        nb = neighbor_dirs.get(idx, [])
        if len(nb) >= 2:
            tau = v[nb[1]] - v[nb[0]]
            ntau = np.linalg.norm(tau)
            if ntau > 0:
                tau /= ntau
                d = d - (d @ tau) * tau
        d = d - (d @ normals[idx]) * normals[idx]
        nd = np.linalg.norm(d)
        if nd > 0:
            conormals[pos_of[idx]] = d / nd
    area, volume = measure(surface)
    return SurfaceQuantities(
        normals=normals,
        mean_curvature=mean_curv,
        sigma2=sigma2,
        support=support,
        area_weights=weights,
        curvature_vectors=kv,
        boundary_indices=boundary,
        conormals=conormals,
        boundary_weights=bweights,
        area=area,
        enclosed_volume=volume,
    )


def _mixed_voronoi_areas(v, t, face_area):
    """Mixed Voronoi vertex areas: circumcentric cells, clamped on obtuse
    triangles (half the face at the obtuse corner, a quarter elsewhere).
    The cells partition every face, so the weights sum exactly to the area."""
    m = len(v)
    weights = np.zeros(m)
    corners = [v[t[:, k]] for k in range(3)]
    cots = []
    obtuse = []
    for k in range(3):
        u1 = corners[(k + 1) % 3] - corners[k]
        u2 = corners[(k + 2) % 3] - corners[k]
        cross = np.linalg.norm(np.cross(u1, u2), axis=1)
        dot = np.einsum("ij,ij->i", u1, u2)
        cots.append(dot / np.where(cross == 0.0, 1.0, cross))
        obtuse.append(dot < 0.0)
    any_obtuse = obtuse[0] | obtuse[1] | obtuse[2]
    for k in range(3):
        opp1 = np.sum((corners[(k + 2) % 3] - corners[(k + 1) % 3]) ** 2, axis=1)
        # Voronoi cell at corner k: (1/8)(|e_prev|^2 cot_prev + |e_next|^2 cot_next)
        e_next = np.sum((corners[(k + 1) % 3] - corners[k]) ** 2, axis=1)
        e_prev = np.sum((corners[(k + 2) % 3] - corners[k]) ** 2, axis=1)
        voronoi = (e_next * cots[(k + 2) % 3] + e_prev * cots[(k + 1) % 3]) / 8.0
        clamped = np.where(obtuse[k], face_area / 2.0, face_area / 4.0)
        np.add.at(weights, t[:, k], np.where(any_obtuse, clamped, voronoi))
    return weights


def _mesh_sigma2(v, t, normals, mean_curv):
    """Squared second fundamental form from a per-vertex quadric fit.

    Fits a quadratic height field over the two-ring in the tangent frame;
    falls back to the umbilical value 2H^2 when the ring is too small.
    """
    m = len(v)
    one_ring = [set() for _ in range(m)]
    for tri in t:
        for a in range(3):
            one_ring[tri[a]].update((int(tri[(a + 1) % 3]), int(tri[(a + 2) % 3])))
    sigma2 = np.empty(m)
    for i in range(m):
        ring = set(one_ring[i])
        for j in list(ring):
            ring.update(one_ring[j])
        ring.discard(i)
        grown = 0
        while len(ring) < 19 and grown < 3:  # grow until the quartic jet is well-posed
            for j in list(ring):
                ring.update(one_ring[j])
            ring.discard(i)
            grown += 1
        pts = v[sorted(ring)] - v[i]
        n = normals[i]
        t1 = np.cross(n, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(t1) < 1e-6:
            t1 = np.cross(n, np.array([0.0, 1.0, 0.0]))
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        u = pts @ t1
        w = pts @ t2
        h = pts @ n
        quad = [u * u / 2.0, u * w, w * w / 2.0, u, w]
        cubic = [u**3, u * u * w, u * w * w, w**3]
        quartic = [u**4, u**3 * w, u * u * w * w, u * w**3, w**4]
        if len(pts) >= 18:
            cols = quad + cubic + quartic  # quartic absorbs the sphere-height bias
        elif len(pts) >= 12:
            cols = quad + cubic
        elif len(pts) >= 5:
            cols = quad
        else:
            sigma2[i] = 2.0 * mean_curv[i] ** 2
            continue
        A = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(A, h, rcond=None)
        shape = np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
        k1, k2 = np.linalg.eigvalsh(shape)
        sigma2[i] = k1 * k1 + k2 * k2
    return sigma2


def _mesh_boundary_edges(triangles):
    count = {}
    for tri in triangles:
        for a in range(3):
            e = tuple(sorted((int(tri[a]), int(tri[(a + 1) % 3]))))
            count[e] = count.get(e, 0) + 1
    return [e for e, c in count.items() if c == 1]


def _mesh_boundary_vertices(triangles):
    verts = set()
    for e in _mesh_boundary_edges(triangles):
        verts.update(e)
    return verts


# -- contact angle --------------------------------------------------------------

def contact_angle_residual(surface, cone=None):
    """Max |<N, boundary normal>| over boundary vertices; 0 means orthogonal contact.

    Closed surfaces return 0 by convention.
    """
    cone = surface.cone if cone is None else cone
    boundary = np.where(surface.boundary_flags)[0]
    if boundary.size == 0:
        return 0.0
    q = quantities(surface)
    pts = _embedded_positions(surface)
    worst = 0.0
    for k, idx in enumerate(q.boundary_indices):
        p = pts[idx][: cone.ambient_dim]
        nu_star = inward_boundary_normal(cone, p)
        worst = max(worst, abs(float(q.normals[idx][: cone.ambient_dim] @ nu_star)))
    return worst


# -- refinement -----------------------------------------------------------------

def refine(surface, factor=2):
    """Subdivide every element ``factor``-fold, projecting new vertices back
    onto the generator shape (when the surface carries a projector) and onto
    the cone boundary for boundary vertices."""
    if factor < 2 or int(factor) != factor:
        raise ValueError("refinement factor must be an integer >= 2")
    factor = int(factor)
    if surface.representation == TRIANGLE_MESH:
        if factor & (factor - 1):
            raise ValueError("mesh refinement factor must be a power of two")
        out = surface
        steps = factor.bit_length() - 1
        for _ in range(steps):
            out = _mesh_subdivide(out)
        return out
    return _chain_refine(surface, factor)


def _chain_refine(surface, factor):
    v = surface.vertices
    flags = surface.boundary_flags
    wrapping = surface.representation == POLYLINE and surface.closed
    new_pts = []
    new_flags = []
    is_new = []
    edges = surface.elements
    for e, (i, j) in enumerate(edges):
        new_pts.append(v[i])
        new_flags.append(bool(flags[i]))
        is_new.append(False)
        for s in range(1, factor):
            lam = s / factor
            new_pts.append((1 - lam) * v[i] + lam * v[j])
            new_flags.append(False)
            is_new.append(True)
    if not wrapping:
        new_pts.append(v[-1])
        new_flags.append(bool(flags[-1]))
        is_new.append(False)
    pts = np.asarray(new_pts)
    nflags = np.asarray(new_flags, dtype=bool)
    newmask = np.asarray(is_new, dtype=bool)
    if surface.projector is not None:
        pts = pts.copy()
        pts[newmask] = np.asarray(surface.projector(pts[newmask], nflags[newmask]))
    if surface.representation == AXISYMMETRIC:
        return axisymmetric_surface(surface.cone, pts, boundary_flags=nflags,
                                    projector=surface.projector)
    return polyline_surface(surface.cone, pts, closed=surface.closed, boundary_flags=nflags,
                            projector=surface.projector)


def _mesh_subdivide(surface):
    v = surface.vertices
    t = surface.elements
    flags = surface.boundary_flags
    midpoint_of = {}
    new_vertices = [row for row in v]
    new_flags = list(flags)
    new_index = []

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint_of:
            new_vertices.append((v[i] + v[j]) / 2.0)
            new_flags.append(bool(flags[i] and flags[j]))
            midpoint_of[key] = len(new_vertices) - 1
            new_index.append(midpoint_of[key])
        return midpoint_of[key]

    tris = []
    for tri in t:
        a, b, c = (int(x) for x in tri)
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        tris.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]])
    pts = np.asarray(new_vertices)
    nflags = np.asarray(new_flags, dtype=bool)
    if surface.projector is not None and new_index:
        sel = np.asarray(new_index, dtype=int)
        pts = pts.copy()
        pts[sel] = np.asarray(surface.projector(pts[sel], nflags[sel]))
    return triangle_mesh_surface(surface.cone, pts, np.asarray(tris, dtype=int),
                                 boundary_flags=nflags, projector=surface.projector)


# -- validation -----------------------------------------------------------------

def validate_surface(surface, in_cone_tol=IN_CONE_TOL, boundary_tol=ON_BOUNDARY_TOL):
    """Check containment, boundary placement, tangency and self-intersection."""
    pts = _embedded_positions(surface)[:, : surface.cone.ambient_dim]
    if surface.representation == POLYLINE and not surface.closed:
        if not (surface.boundary_flags[0] and surface.boundary_flags[-1]):
            raise SurfaceValidationError("open polyline endpoints must be flagged on the cone boundary")
    if surface.representation == AXISYMMETRIC:
        v = surface.vertices
        if np.any(v[:, 0] < -AXIS_TOL):
            raise SurfaceValidationError("meridian radius must be nonnegative")
        interior = np.ones(len(v), dtype=bool)
        interior[[0, -1]] = False
        if np.any(v[interior, 0] <= AXIS_TOL):
            raise SurfaceValidationError("interior meridian vertex pinched onto the axis")
        for idx in (0, len(v) - 1):
            on_axis = v[idx, 0] <= AXIS_TOL
            if not on_axis and not surface.boundary_flags[idx]:
                raise SurfaceValidationError(
                    "meridian endpoint must sit on the axis or be flagged on the cone boundary"
                )
    scale = max(1.0, float(np.max(np.linalg.norm(pts, axis=1))))
    for i, p in enumerate(pts):
        if not contains(surface.cone, p, tol=in_cone_tol * scale):
            raise SurfaceValidationError(f"vertex {i} lies outside the closed cone")
        dist = distance_to_boundary(surface.cone, p)
        if surface.boundary_flags[i]:
            if dist > boundary_tol * scale:
                raise SurfaceValidationError(
                    f"boundary vertex {i} is {dist:.3e} away from the cone boundary"
                )
        elif dist <= boundary_tol * scale and np.linalg.norm(p) > boundary_tol * scale:
            if surface.representation == AXISYMMETRIC and surface.vertices[i, 0] <= AXIS_TOL:
                continue  # axis points are interior for surfaces of revolution
            raise SurfaceValidationError(
                f"interior vertex {i} touches the cone boundary (tangency is not modeled)"
            )
    if _self_intersects(surface):
        raise SurfaceValidationError("surface is self-intersecting")


def _self_intersects(surface):
    if surface.representation == TRIANGLE_MESH:
        return _mesh_self_intersects(surface.vertices, surface.elements)
    return chain_self_intersects(surface.vertices, surface.closed)


def chain_self_intersects(vertices, closed):
    """Pairwise proper-intersection test for a 2D chain (adjacency excluded)."""
    edges = _chain_edges(vertices, closed)
    k = len(edges)
    if k < 3:
        return False
    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    d = b - a
    ii, jj = np.triu_indices(k, 1)
    adjacent = edges[ii, 1] == edges[jj, 0]
    adjacent |= edges[jj, 1] == edges[ii, 0]
    sel = ~adjacent
    ii, jj = ii[sel], jj[sel]
    if ii.size == 0:
        return False
    p, r = a[ii], d[ii]
    q, s = a[jj], d[jj]
    rxs = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    qpxr = qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]
    qpxs = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(rxs != 0.0, qpxs / rxs, np.inf)
        u = np.where(rxs != 0.0, qpxr / rxs, np.inf)
    eps = 1e-12
    crossing = (rxs != 0.0) & (t > eps) & (t < 1 - eps) & (u > eps) & (u < 1 - eps)
    return bool(np.any(crossing))


def _mesh_self_intersects(vertices, triangles):
    """Broad-phase AABB overlap plus edge-triangle narrow phase."""
    t = np.asarray(triangles)
    pts = vertices[t]  # (k, 3, 3)
    lo = pts.min(axis=1)
    hi = pts.max(axis=1)
    k = len(t)
    order = np.argsort(lo[:, 0])
    for a_pos in range(k):
        i = order[a_pos]
        for b_pos in range(a_pos + 1, k):
            j = order[b_pos]
            if lo[j, 0] > hi[i, 0]:
                break
            if np.any(lo[j] > hi[i]) or np.any(lo[i] > hi[j]):
                continue
            if set(t[i]) & set(t[j]):
                continue  # sharing vertices: skip (conforming adjacency)
            if _tri_tri_intersect(vertices[t[i]], vertices[t[j]]):
                return True
    return False


def _tri_tri_intersect(tri_a, tri_b):
    for (p, q) in ((0, 1), (1, 2), (2, 0)):
        if _segment_hits_triangle(tri_a[p], tri_a[q], tri_b):
            return True
        if _segment_hits_triangle(tri_b[p], tri_b[q], tri_a):
            return True
    return False


def _segment_hits_triangle(p0, p1, tri):
    # Moeller-Trumbore restricted to the segment parameter range
    d = p1 - p0
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    h = np.cross(d, e2)
    det = float(e1 @ h)
    if abs(det) < 1e-14:
        return False
    inv = 1.0 / det
    s = p0 - tri[0]
    u = float(s @ h) * inv
    if u < 1e-10 or u > 1 - 1e-10:
        return False
    q = np.cross(s, e1)
    v = float(d @ q) * inv
    if v < 1e-10 or u + v > 1 - 1e-10:
        return False
    t = float(e2 @ q) * inv
    return 1e-10 < t < 1 - 1e-10
