"""Solid Euclidean cones and their boundary geometry.

A cone is the dilation-invariant set swept by rays from the origin through
a domain of the unit sphere.  Three concrete families are supported:

* ``Sector(theta)`` -- planar wedge between the rays at polar angles 0 and
  ``theta`` (ambient dimension 2).
* ``Circular(alpha)`` -- rotationally symmetric cone of half-opening angle
  ``alpha`` about the last coordinate axis (ambient dimension >= 3).
* ``Polyhedral(normals)`` -- intersection of half-spaces through the origin
  with inward unit normals; convex by construction.
* ``HalfSpace`` -- the distinguished flat case ``x_last > 0``; identical to
  ``Sector(pi)`` in dimension 2 and ``Circular(pi/2)`` in dimension 3.

All operations are pure functions over immutable specs and are safe to
share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

# Absolute tolerance for geometric predicates on unit-scale inputs.  Every
# tolerance below defaults to one of these two values; callers may override.
PREDICATE_TOL = 1e-12
ON_BOUNDARY_TOL = 1e-10


class ConeSpecError(ValueError):
    """Invalid cone description."""


@dataclass(frozen=True)
class Sector:
    theta: float

    def validate(self, ambient_dim):
        if ambient_dim != 2:
            raise ConeSpecError("sector cones live in ambient dimension 2")
        if not (0.0 < self.theta < 2.0 * math.pi):
            raise ConeSpecError(f"sector angle must be in (0, 2*pi), got {self.theta}")


@dataclass(frozen=True)
class Circular:
    alpha: float

    def validate(self, ambient_dim):
        if ambient_dim < 3:
            raise ConeSpecError("circular cones need ambient dimension >= 3")
        if not (0.0 < self.alpha < math.pi):
            raise ConeSpecError(f"circular half-angle must be in (0, pi), got {self.alpha}")


@dataclass(frozen=True)
class Polyhedral:
    normals: tuple  # tuple of tuples, inward unit normals of the half-spaces

    def validate(self, ambient_dim):
        arr = np.asarray(self.normals, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != ambient_dim:
            raise ConeSpecError("polyhedral normals must be a nonempty list of ambient-dim vectors")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > PREDICATE_TOL * 10):
            raise ConeSpecError("polyhedral normals must have unit length")
        _interior_direction(arr)  # raises if the interior is empty


@dataclass(frozen=True)
class HalfSpace:
    def validate(self, ambient_dim):
        if ambient_dim < 2:
            raise ConeSpecError("half-space needs ambient dimension >= 2")


@dataclass(frozen=True)
class ConeSpec:
    """A solid cone in R^(n+1); ``ambient_dim`` is n+1."""

    ambient_dim: int
    shape: object

    def __post_init__(self):
        if int(self.ambient_dim) != self.ambient_dim or self.ambient_dim < 2:
            raise ConeSpecError(f"ambient_dim must be an integer >= 2, got {self.ambient_dim}")
        if not isinstance(self.shape, (Sector, Circular, Polyhedral, HalfSpace)):
            raise ConeSpecError(f"unknown cone shape {self.shape!r}")
        self.shape.validate(self.ambient_dim)

    @property
    def n(self):
        """Dimension of the boundary hypersurfaces (ambient_dim - 1)."""
        return self.ambient_dim - 1

    def to_json(self):
        shape = self.shape
        if isinstance(shape, Sector):
            body = {"kind": "sector", "theta": shape.theta}
        elif isinstance(shape, Circular):
            body = {"kind": "circular", "alpha": shape.alpha}
        elif isinstance(shape, Polyhedral):
            body = {"kind": "polyhedral", "normals": [list(v) for v in shape.normals]}
        else:
            body = {"kind": "halfspace"}
        return {"ambient_dim": self.ambient_dim, "shape": body}

    @staticmethod
    def from_json(data):
        if isinstance(data, str):
            data = json.loads(data)
        try:
            dim = data["ambient_dim"]
            body = data["shape"]
            kind = body["kind"]
        except (KeyError, TypeError) as exc:
            raise ConeSpecError(f"malformed cone JSON: missing {exc}") from exc
        if kind == "sector":
            return ConeSpec(dim, Sector(float(body["theta"])))
        if kind == "circular":
            return ConeSpec(dim, Circular(float(body["alpha"])))
        if kind == "polyhedral":
            normals = tuple(tuple(float(x) for x in v) for v in body["normals"])
            return ConeSpec(dim, Polyhedral(normals))
        if kind == "halfspace":
            return ConeSpec(dim, HalfSpace())
        raise ConeSpecError(f"unknown cone kind {kind!r}")


def sector(theta):
    return ConeSpec(2, Sector(float(theta)))


def circular(alpha, ambient_dim=3):
    return ConeSpec(ambient_dim, Circular(float(alpha)))


def polyhedral(normals, ambient_dim=None):
    arr = np.asarray(normals, dtype=float)
    if ambient_dim is None:
        ambient_dim = arr.shape[1]
    return ConeSpec(ambient_dim, Polyhedral(tuple(tuple(row) for row in arr)))


def halfspace(ambient_dim=2):
    return ConeSpec(ambient_dim, HalfSpace())


@dataclass(frozen=True)
class BoundaryPoint:
    """A point of the lateral cone boundary away from the vertex.

    ``inward_boundary_normal`` is the unit normal of the boundary pointing
    into the cone; the position vector is always tangent to the boundary,
    so the two are orthogonal.
    """

    position: np.ndarray
    inward_boundary_normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float)
        nu = np.asarray(self.inward_boundary_normal, dtype=float)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "inward_boundary_normal", nu)
        scale = max(1.0, float(np.linalg.norm(p)))
        if abs(float(p @ nu)) > PREDICATE_TOL * 100 * scale:
            raise ConeSpecError("boundary normal must be orthogonal to the position ray")


# -- spherical measures -------------------------------------------------------

def sphere_measure(n):
    """Total n-dimensional measure of the unit n-sphere (c_1 = 2*pi, c_2 = 4*pi)."""
    if n < 0:
        raise ValueError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def spherical_cap_area(n, alpha):
    """Measure of the geodesic cap of radius ``alpha`` on the unit n-sphere."""
    if not (0.0 <= alpha <= math.pi):
        raise ValueError("cap radius must lie in [0, pi]")
    if n == 1:
        return 2.0 * alpha
    if n == 2:
        return 2.0 * math.pi * (1.0 - math.cos(alpha))
    # c_{n-1} * int_0^alpha sin^{n-1} t dt via the regularized incomplete beta
    c_ring = sphere_measure(n - 1)
    full = special.beta(n / 2.0, 0.5)
    if alpha <= math.pi / 2.0:
        integral = 0.5 * full * special.betainc(n / 2.0, 0.5, math.sin(alpha) ** 2)
    else:
        tail = 0.5 * full * special.betainc(n / 2.0, 0.5, math.sin(math.pi - alpha) ** 2)
        integral = full - tail
    return c_ring * integral


# -- interior direction for polyhedral cones ----------------------------------

def _interior_direction(normals):
    """A unit direction strictly inside the polyhedral cone, with its clearance.

    Deterministic: tries the mean of the normals, the normals themselves and
    (in 3D) pairwise edge directions, then polishes the best candidate with a
    fixed-step projected subgradient ascent of d -> min_i <n_i, d>.
    """
    normals = np.asarray(normals, dtype=float)
    k, dim = normals.shape
    candidates = []
    mean = normals.sum(axis=0)
    if np.linalg.norm(mean) > 0:
        candidates.append(mean / np.linalg.norm(mean))
    candidates.extend(normals)
    if dim == 3 and k >= 2:
        for i in range(k):
            for j in range(i + 1, k):
                c = np.cross(normals[i], normals[j])
                nc = np.linalg.norm(c)
                if nc > 1e-14:
                    candidates.append(c / nc)
                    candidates.append(-c / nc)

    def clearance(d):
        return float(np.min(normals @ d))

    best = max(candidates, key=clearance)
    step = 0.5
    for _ in range(200):
        worst = int(np.argmin(normals @ best))
        trial = best + step * normals[worst]
        trial /= np.linalg.norm(trial)
        if clearance(trial) > clearance(best):
            best = trial
        else:
            step *= 0.7
    if clearance(best) <= 1e-9:
        raise ConeSpecError("polyhedral cone has empty interior")
    return best, clearance(best)


def interior_direction(cone):
    """Unit direction d inside the cone and its boundary clearance at |d| = 1."""
    shape = cone.shape
    if isinstance(shape, Sector):
        half = shape.theta / 2.0
        d = np.array([math.cos(half), math.sin(half)])
        return d, math.sin(min(half, math.pi / 2.0))
    if isinstance(shape, Circular):
        d = np.zeros(cone.ambient_dim)
        d[-1] = 1.0
        return d, math.sin(shape.alpha) if shape.alpha < math.pi / 2.0 else 1.0
    if isinstance(shape, HalfSpace):
        d = np.zeros(cone.ambient_dim)
        d[-1] = 1.0
        return d, 1.0
    return _interior_direction(np.asarray(shape.normals, dtype=float))


# -- solid angle ---------------------------------------------------------------

def solid_angle(cone):
    """Spherical measure of the cone's link (the domain on the unit sphere)."""
    shape = cone.shape
    n = cone.n
    if isinstance(shape, Sector):
        return shape.theta
    if isinstance(shape, Circular):
        return spherical_cap_area(n, shape.alpha)
    if isinstance(shape, HalfSpace):
        return sphere_measure(n) / 2.0
    return _polyhedral_solid_angle(cone)


def _polyhedral_solid_angle(cone):
    normals = np.asarray(cone.shape.normals, dtype=float)
    if cone.ambient_dim == 2:
        return _wedge_angle(normals)
    if cone.ambient_dim == 3:
        return _spherical_polygon_area(normals)
    raise ConeSpecError(
        "polyhedral solid angle is implemented exactly for ambient dimension 2 and 3 only"
    )


def _wedge_angle(normals):
    """Angular width of the intersection of half-planes through the origin."""
    # Each half-plane <n, x> >= 0 admits polar angles in [phi_n - pi/2, phi_n + pi/2].
    d, _ = _interior_direction(normals)
    ref = math.atan2(d[1], d[0])
    lo, hi = -math.pi / 2.0, math.pi / 2.0  # feasible offsets from the interior ray
    for nv in normals:
        phi = math.atan2(nv[1], nv[0])
        delta = (phi - ref + math.pi) % (2.0 * math.pi) - math.pi
        lo = max(lo, delta - math.pi / 2.0)
        hi = min(hi, delta + math.pi / 2.0)
    if hi <= lo:
        raise ConeSpecError("polyhedral cone has empty interior")
    return hi - lo


def _spherical_polygon_area(normals):
    """Area of the convex spherical polygon cut by half-spaces on S^2."""
    d, _ = _interior_direction(normals)
    k = normals.shape[0]
    if k == 1:
        return 2.0 * math.pi
    verts = []
    for i in range(k):
        for j in range(i + 1, k):
            c = np.cross(normals[i], normals[j])
            nc = np.linalg.norm(c)
            if nc < 1e-13:
                continue
            for v in (c / nc, -c / nc):
                if np.min(normals @ v) >= -1e-11:
                    verts.append(v)
    if not verts:
        # no corners: a lune between two planes
        cosang = float(np.clip(normals[0] @ normals[1], -1.0, 1.0))
        return 2.0 * (math.pi - math.acos(cosang))
    verts = np.asarray(verts)
    # order corners around the interior direction and deduplicate
    e1 = verts[0] - (verts[0] @ d) * d
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    ang = np.arctan2(verts @ e2, verts @ e1)
    order = np.argsort(ang)
    ordered = []
    for idx in order:
        v = verts[idx]
        if ordered and np.linalg.norm(v - ordered[-1]) < 1e-10:
            continue
        ordered.append(v)
    if len(ordered) > 1 and np.linalg.norm(ordered[0] - ordered[-1]) < 1e-10:
        ordered.pop()
    # fan of spherical triangles (d, v_i, v_{i+1});
    # each via tan(omega/2) = |det| / (1 + a.b + b.c + c.a)
    total = 0.0
    m = len(ordered)
    for i in range(m):
        a, b, c = d, ordered[i], ordered[(i + 1) % m]
        num = abs(float(np.dot(a, np.cross(b, c))))
        den = 1.0 + float(a @ b) + float(b @ c) + float(c @ a)
        total += 2.0 * math.atan2(num, den)
    return total


# -- convexity -----------------------------------------------------------------

def is_convex(cone):
    shape = cone.shape
    if isinstance(shape, Sector):
        return shape.theta <= math.pi + PREDICATE_TOL
    if isinstance(shape, Circular):
        return shape.alpha <= math.pi / 2.0 + PREDICATE_TOL
    return True  # half-spaces and intersections of half-spaces


def has_flat_boundary_piece(cone):
    """Whether the lateral boundary contains a flat open piece (a facet)."""
    shape = cone.shape
    if isinstance(shape, Circular):
        return abs(shape.alpha - math.pi / 2.0) <= PREDICATE_TOL
    return True  # sector rays, half-space hyperplane, polyhedral facets


# -- membership and distances --------------------------------------------------

def _sector_angles(cone, x):
    r = math.hypot(x[0], x[1])
    phi = math.atan2(x[1], x[0]) % (2.0 * math.pi)
    return r, phi


def contains(cone, x, tol=None):
    """Membership in the closed cone (the vertex belongs to the closure)."""
    if tol is None:
        tol = PREDICATE_TOL
    x = np.asarray(x, dtype=float)
    shape = cone.shape
    if isinstance(shape, Polyhedral):
        normals = np.asarray(shape.normals, dtype=float)
        return bool(np.min(normals @ x) >= -tol)
    if isinstance(shape, HalfSpace):
        return bool(x[-1] >= -tol)
    if isinstance(shape, Sector):
        r, phi = _sector_angles(cone, x)
        if r <= tol:
            return True
        if 0.0 <= phi <= shape.theta:
            return True
        return distance_to_boundary(cone, x) <= tol
    # circular
    rho = float(np.linalg.norm(x[:-1]))
    ang = math.atan2(rho, float(x[-1]))
    if np.linalg.norm(x) <= tol:
        return True
    if ang <= shape.alpha:
        return True
    return distance_to_boundary(cone, x) <= tol


def distance_to_boundary(cone, x):
    """Unsigned distance from ``x`` to the lateral boundary of the cone."""
    x = np.asarray(x, dtype=float)
    shape = cone.shape
    if isinstance(shape, HalfSpace):
        return abs(float(x[-1]))
    if isinstance(shape, Sector):
        d0 = np.array([1.0, 0.0])
        d1 = np.array([math.cos(shape.theta), math.sin(shape.theta)])
        return min(_distance_to_ray(x, d0), _distance_to_ray(x, d1))
    if isinstance(shape, Circular):
        rho = float(np.linalg.norm(x[:-1]))
        q = np.array([rho, float(x[-1])])
        slant = np.array([math.sin(shape.alpha), math.cos(shape.alpha)])
        return _distance_to_ray(q, slant)
    normals = np.asarray(shape.normals, dtype=float)
    gaps = normals @ x
    if np.min(gaps) >= 0.0:
        return float(np.min(gaps))  # interior: nearest facet plane is attained
    return _distance_to_convex_cone_boundary(normals, x)


def _distance_to_ray(x, d):
    t = float(x @ d)
    if t <= 0.0:
        return float(np.linalg.norm(x))
    return float(np.linalg.norm(x - t * d))


def _distance_to_convex_cone_boundary(normals, x, iters=400):
    """Distance from an exterior point to the cone (Dykstra projection)."""
    y = x.copy()
    k = normals.shape[0]
    corrections = np.zeros((k, x.size))
    for _ in range(iters):
        for i in range(k):
            z = y + corrections[i]
            gap = float(normals[i] @ z)
            proj = z - min(gap, 0.0) * normals[i]
            corrections[i] = z - proj
            y = proj
    return float(np.linalg.norm(x - y))


# -- boundary normal and second fundamental form -------------------------------

def boundary_point(cone, position, tol=None):
    """Build a validated BoundaryPoint with the inward boundary normal at ``position``."""
    if tol is None:
        tol = ON_BOUNDARY_TOL
    p = np.asarray(position, dtype=float)
    scale = max(1.0, float(np.linalg.norm(p)))
    if np.linalg.norm(p) <= PREDICATE_TOL:
        raise ConeSpecError("the vertex is excluded from the lateral boundary")
    if distance_to_boundary(cone, p) > tol * scale:
        raise ConeSpecError("point is not on the cone boundary")
    return BoundaryPoint(p, inward_boundary_normal(cone, p))


def inward_boundary_normal(cone, p):
    """Unit normal of the lateral boundary pointing into the cone."""
    p = np.asarray(p, dtype=float)
    shape = cone.shape
    if isinstance(shape, HalfSpace):
        nu = np.zeros(cone.ambient_dim)
        nu[-1] = 1.0
        return nu
    if isinstance(shape, Sector):
        d0 = np.array([1.0, 0.0])
        d1 = np.array([math.cos(shape.theta), math.sin(shape.theta)])
        if _distance_to_ray(p, d0) <= _distance_to_ray(p, d1):
            return np.array([0.0, 1.0])
        return np.array([math.sin(shape.theta), -math.cos(shape.theta)])
    if isinstance(shape, Circular):
        alpha = shape.alpha
        rho = float(np.linalg.norm(p[:-1]))
        if rho <= PREDICATE_TOL:
            raise ConeSpecError("axis points are not on the lateral boundary")
        u = np.zeros(cone.ambient_dim)
        u[:-1] = p[:-1] / rho
        e = np.zeros(cone.ambient_dim)
        e[-1] = 1.0
        return -math.cos(alpha) * u + math.sin(alpha) * e
    normals = np.asarray(shape.normals, dtype=float)
    gaps = np.abs(normals @ p)
    scale = max(1.0, float(np.linalg.norm(p)))
    active = np.where(gaps <= ON_BOUNDARY_TOL * scale)[0]
    if active.size == 0:
        raise ConeSpecError("point is not on any facet of the polyhedral cone")
    if active.size > 1:
        raise ConeSpecError("point lies on a polyhedral edge; the boundary normal is ambiguous there")
    return normals[int(active[0])]


def boundary_II(cone, p, v, tol=None):
    """Normal curvature II(v, v) of the lateral boundary, inner-normal convention.

    ``p`` may be a BoundaryPoint or a raw position; ``v`` must be a unit
    vector tangent to the boundary at ``p``.  The vertex is excluded.
    """
    if tol is None:
        tol = 1e-8
    if isinstance(p, BoundaryPoint):
        pos, nu = p.position, p.inward_boundary_normal
    else:
        bp = boundary_point(cone, p)
        pos, nu = bp.position, bp.inward_boundary_normal
    v = np.asarray(v, dtype=float)
    if abs(float(np.linalg.norm(v)) - 1.0) > tol:
        raise ConeSpecError("direction must be a unit vector")
    if abs(float(v @ nu)) > tol:
        raise ConeSpecError("direction must be tangent to the cone boundary")
    return second_fundamental_form(cone, pos, v)


def second_fundamental_form(cone, pos, v):
    """Quadratic form II(v, v) at a lateral boundary point, for tangent v.

    Unlike :func:`boundary_II` this skips unit-length validation so it can be
    applied to tangentially projected vectors of arbitrary magnitude.
    """
    pos = np.asarray(pos, dtype=float)
    v = np.asarray(v, dtype=float)
    r = float(np.linalg.norm(pos))
    if r <= PREDICATE_TOL:
        raise ConeSpecError("the second fundamental form is undefined at the vertex")
    shape = cone.shape
    if isinstance(shape, (Sector, HalfSpace)):
        return 0.0
    if isinstance(shape, Polyhedral):
        # flat facets; boundary_point/inward_boundary_normal already reject edges
        return 0.0
    ruling = pos / r
    v_par_sq = float(v @ v) - float(v @ ruling) ** 2
    return v_par_sq * (math.cos(shape.alpha) / math.sin(shape.alpha)) / r
