"""Second-variation machinery on discrete surfaces.

For a stationary region the interface has constant mean curvature H and
meets the cone wall orthogonally.  The quadratic form evaluated here on the
classical test function u = 1 + H g (g the support function) controls
stability; two independent discretizations of it are assembled so that
discretization errors in one path are visible against the other:

* ``Q_direct``   -- uses the closed-form interior identity
  Delta u + |sigma|^2 u = |sigma|^2 - n H^2 (valid for u = 1 + Hg with
  constant H) and the boundary identity dg/dnu = -II(N, N) g;
* ``Q_gradient`` -- assembles integral(|grad u|^2 - |sigma|^2 u^2) minus the
  boundary II term from the discrete gradient, valid for arbitrary u.

The same report carries the residuals of the first and second Minkowski
identities, the boundary support-function identity, and an umbilicity
defect; together they classify stationary candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

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
    is_convex,
    second_fundamental_form,
)
from .candidates import vertex_ball
from .surfaces import (
    AXISYMMETRIC,
    POLYLINE,
    TRIANGLE_MESH,
    DiscreteHypersurface,
    _embedded_positions,
    contact_angle_residual,
    quantities,
)

VERDICT_VERTEX = "VertexBallCap"
VERDICT_INTERIOR = "InteriorSphere"
VERDICT_HALFBALL = "BoundaryHalfSphereOnFlatPiece"
VERDICT_NOT_STATIONARY = "NotStationary"
VERDICT_NOT_STABLE = "NotStable"
VERDICT_INCONCLUSIVE = "Inconclusive"


class OrthogonalityViolated(ValueError):
    """Boundary identity requested on a surface without orthogonal contact."""


@dataclass(frozen=True)
class StabilityThresholds:
    """Classification tolerances at the default desk resolution; all configurable."""

    contact_tol: float = 1e-2           # radians of contact-angle defect
    curvature_spread_tol: float = 1e-2  # relative spread of H_i about the mean
    q_negative_tol: float = 1e-3        # Q_closed below -tol*area means unstable
    umbilicity_tol: float = 1e-2        # relative to n*H^2*area
    boundary_ii_tol: float = 1e-2       # relative to |H|
    sphere_fit_tol: float = 1e-2        # relative radial residual of the sphere fit
    center_tol: float = 5e-2            # relative to the fitted radius


@dataclass(frozen=True)
class IndexFormReport:
    q_direct: float
    q_gradient_form: float
    q_closed: float
    minkowski1_residual: float
    minkowski2_residual: float
    boundary_identity_residual: float
    umbilicity_defect: float
    verdict: str
    mean_curvature: float
    curvature_spread: float
    contact_angle_residual: float
    area: float
    enclosed_volume: float
    num_vertices: int
    max_element_size: float

    def to_json(self):
        return {
            "q_direct": self.q_direct,
            "q_gradient_form": self.q_gradient_form,
            "q_closed": self.q_closed,
            "minkowski1_residual": self.minkowski1_residual,
            "minkowski2_residual": self.minkowski2_residual,
            "boundary_identity_residual": self.boundary_identity_residual,
            "umbilicity_defect": self.umbilicity_defect,
            "verdict": self.verdict,
            "mean_curvature": self.mean_curvature,
            "curvature_spread": self.curvature_spread,
            "contact_angle_residual": self.contact_angle_residual,
            "area": self.area,
            "enclosed_volume": self.enclosed_volume,
            "resolution": {
                "num_vertices": self.num_vertices,
                "max_element_size": self.max_element_size,
            },
        }

    def format_table(self):
        rows = [
            ("Q (direct)", self.q_direct),
            ("Q (gradient form)", self.q_gradient_form),
            ("Q (closed form)", self.q_closed),
            ("Minkowski I residual", self.minkowski1_residual),
            ("Minkowski II residual", self.minkowski2_residual),
            ("boundary identity residual", self.boundary_identity_residual),
            ("umbilicity defect", self.umbilicity_defect),
            ("mean curvature", self.mean_curvature),
            ("curvature spread", self.curvature_spread),
            ("contact angle residual", self.contact_angle_residual),
            ("area", self.area),
            ("enclosed volume", self.enclosed_volume),
        ]
        width = max(len(name) for name, _ in rows)
        lines = [f"{name:<{width}}  {value: .12e}" for name, value in rows]
        lines.append(f"{'verdict':<{width}}  {self.verdict}")
        return "\n".join(lines)


# -- basic ingredients ------------------------------------------------------------

def test_function(surface, quant=None):
    """The stability test function u = 1 + H_mean * g, per vertex."""
    q = quantities(surface) if quant is None else quant
    hbar = q.mean_curvature_avg
    return 1.0 + hbar * q.support, hbar


def curvature_spread(quant):
    hbar = quant.mean_curvature_avg
    denom = max(abs(hbar), 1e-300)
    return float(np.max(np.abs(quant.mean_curvature - hbar)) / denom)


def boundary_ii_values(surface, quant=None):
    """II(N, N) of the cone wall at each boundary vertex.

    N is projected onto the wall's tangent plane first; under orthogonal
    contact the projection is the identity.
    """
    q = quantities(surface) if quant is None else quant
    pts = _embedded_positions(surface)[:, : surface.cone.ambient_dim]
    vals = np.zeros(q.boundary_indices.size)
    for k, idx in enumerate(q.boundary_indices):
        p = pts[idx]
        n_vec = q.normals[idx][: surface.cone.ambient_dim]
        nu_star = inward_boundary_normal(surface.cone, p)
        tangential = n_vec - float(n_vec @ nu_star) * nu_star
        vals[k] = second_fundamental_form(surface.cone, p, tangential)
    return vals


def _gradient_energy(surface, u):
    """Discrete Dirichlet energy of a per-vertex function on the surface."""
    v = surface.vertices
    if surface.representation == TRIANGLE_MESH:
        t = surface.elements
        e1 = v[t[:, 1]] - v[t[:, 0]]
        e2 = v[t[:, 2]] - v[t[:, 0]]
        area = np.linalg.norm(np.cross(e1, e2), axis=1) / 2.0
        # P1 gradients: metric tensor inverse applied to edge differences
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 * g12
        du1 = u[t[:, 1]] - u[t[:, 0]]
        du2 = u[t[:, 2]] - u[t[:, 0]]
        grad_sq = (g22 * du1 * du1 - 2.0 * g12 * du1 * du2 + g11 * du2 * du2) / det
        return float(np.sum(grad_sq * area))
    a, b = surface.elements[:, 0], surface.elements[:, 1]
    lengths = np.linalg.norm(v[b] - v[a], axis=1)
    du = u[b] - u[a]
    if surface.representation == AXISYMMETRIC:
        seg_area = 2.0 * math.pi * (v[a, 0] + v[b, 0]) / 2.0 * lengths
        return float(np.sum((du / lengths) ** 2 * seg_area))
    return float(np.sum(du * du / lengths))


# -- the quadratic form ------------------------------------------------------------

def index_form(surface, u=None, quant=None):
    """(Q_direct, Q_gradient_form) for the given test function.

    ``Q_direct`` uses the closed-form interior and boundary identities that
    hold for u = 1 + Hg with constant H; passing a different u leaves only
    ``Q_gradient_form`` meaningful.
    """
    q = quantities(surface) if quant is None else quant
    if u is None:
        u, hbar = test_function(surface, q)
    else:
        u = np.asarray(u, dtype=float)
        hbar = q.mean_curvature_avg
    n = surface.cone.n
    ii = boundary_ii_values(surface, q)
    interior = q.sigma2 - n * hbar * hbar
    q_direct = -float(np.sum(u * interior * q.area_weights))
    q_direct -= float(np.sum(u[q.boundary_indices] * ii * q.boundary_weights))

    grad_energy = _gradient_energy(surface, u)
    q_gradient = grad_energy - float(np.sum(q.sigma2 * u * u * q.area_weights))
    q_gradient -= float(np.sum(ii * u[q.boundary_indices] ** 2 * q.boundary_weights))
    return q_direct, q_gradient


def q_closed_form(surface, quant=None):
    """-(umbilicity gap with the mean H) minus the boundary II integral."""
    q = quantities(surface) if quant is None else quant
    n = surface.cone.n
    hbar = q.mean_curvature_avg
    ii = boundary_ii_values(surface, q)
    value = -float(np.sum((q.sigma2 - n * hbar * hbar) * q.area_weights))
    value -= float(np.sum(ii * q.boundary_weights))
    return value


def umbilicity_defect(surface, quant=None):
    """Integral of |sigma|^2 - n H^2 with the pointwise H (Cauchy-Schwarz gap)."""
    q = quantities(surface) if quant is None else quant
    n = surface.cone.n
    return float(np.sum((q.sigma2 - n * q.mean_curvature**2) * q.area_weights))


# -- Minkowski identities -----------------------------------------------------------

def minkowski_checks(surface, quant=None):
    """Area-normalized residuals of the two Minkowski identities.

    First:  integral of (1 + Hg) vanishes.
    Second: integral of (|sigma|^2 - nH^2) g equals minus the boundary
    integral of II(N, N) g.
    """
    q = quantities(surface) if quant is None else quant
    u, hbar = test_function(surface, q)
    n = surface.cone.n
    ii = boundary_ii_values(surface, q)
    m1 = abs(float(np.sum(u * q.area_weights))) / q.area
    interior = float(np.sum((q.sigma2 - n * hbar * hbar) * q.support * q.area_weights))
    boundary = float(np.sum(ii * q.support[q.boundary_indices] * q.boundary_weights))
    m2 = abs(interior + boundary) / q.area
    return m1, m2


def minkowski1_divergence_residual(surface, quant=None):
    """Exact discrete form of the first Minkowski identity on closed surfaces.

    The integrated curvature vectors are the (negative) area gradient, so by
    Euler's homogeneity relation sum_i <X_i, K_i> = -n * area holds exactly;
    the residual is pure roundoff for the operators used here.
    """
    if not surface.closed:
        raise ValueError("the exact divergence identity needs a closed surface")
    q = quantities(surface) if quant is None else quant
    n = surface.cone.n
    pts = _embedded_positions(surface)[:, : q.curvature_vectors.shape[1]]
    if surface.representation == AXISYMMETRIC:
        # revolve: per unit azimuth the meridian carries rho-weighted tangents;
        # Euler homogeneity still applies to the full area functional
        v = surface.vertices
        a, b = surface.elements[:, 0], surface.elements[:, 1]
        evec = v[b] - v[a]
        lengths = np.linalg.norm(evec, axis=1)
        # dA/dvertex of sum 2*pi*rho_bar*L
        grad = np.zeros_like(v)
        rho_bar = (v[a, 0] + v[b, 0]) / 2.0
        unit = evec / lengths[:, None]
        for k, (i, j) in enumerate(surface.elements):
            grad[i, 0] += math.pi * lengths[k]
            grad[j, 0] += math.pi * lengths[k]
            grad[i] += -2.0 * math.pi * rho_bar[k] * unit[k]
            grad[j] += 2.0 * math.pi * rho_bar[k] * unit[k]
        total = float(np.einsum("ij,ij->i", grad, v).sum())
        return abs(total - n * q.area) / (n * q.area)
    total = -float(np.einsum("ij,ij->i", q.curvature_vectors, pts).sum())
    return abs(total - n * q.area) / (n * q.area)


# -- boundary identity ---------------------------------------------------------------

def boundary_identity(surface, quant=None, contact_tol=None, thresholds=None):
    """Max residual of dg/dnu + II(N, N) g over the free boundary.

    The normal derivative is estimated by a one-sided quadratic fit of the
    support function along the surface starting at each boundary vertex.
    Raises OrthogonalityViolated when the contact angle defect exceeds the
    threshold, since the identity assumes orthogonal contact.
    """
    thresholds = thresholds or StabilityThresholds()
    if contact_tol is None:
        contact_tol = thresholds.contact_tol
    q = quantities(surface) if quant is None else quant
    if q.boundary_indices.size == 0:
        return 0.0
    contact = contact_angle_residual(surface)
    if contact > contact_tol:
        raise OrthogonalityViolated(
            f"contact angle residual {contact:.3e} exceeds {contact_tol:.3e}"
        )
    ii = boundary_ii_values(surface, q)
    worst = 0.0
    for k, idx in enumerate(q.boundary_indices):
        dgdnu = _one_sided_support_derivative(surface, q, int(idx))
        worst = max(worst, abs(dgdnu + ii[k] * q.support[idx]))
    return worst


def _one_sided_support_derivative(surface, q, idx):
    if surface.representation in (POLYLINE, AXISYMMETRIC):
        v = surface.vertices
        m = len(v)
        if idx == 0:
            sel = [0, 1, 2] if m >= 3 else [0, 1]
        elif idx == m - 1:
            sel = [m - 1, m - 2, m - 3] if m >= 3 else [m - 1, m - 2]
        else:
            raise ValueError("polyline boundary vertices are the chain endpoints")
        pts = v[sel]
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
        g = q.support[sel]
        if len(sel) == 2:
            return float((g[1] - g[0]) / s[1])
        coef = np.polyfit(s, g, 2)
        return float(coef[1])  # derivative of the quadratic at s = 0
    # mesh: linear fit of g over the local two-ring in (conormal, tangent) coords
    v = surface.vertices
    t = surface.elements
    ring = set()
    for tri in t:
        if idx in tri:
            ring.update(int(x) for x in tri)
    for j in list(ring):
        for tri in t:
            if j in tri:
                ring.update(int(x) for x in tri)
    ring.discard(idx)
    pos = np.where(q.boundary_indices == idx)[0][0]
    nu = q.conormals[pos]
    rel = v[sorted(ring)] - v[idx]
    g = q.support[sorted(ring)]
    a = np.stack([rel @ nu, np.ones(len(rel))] + [rel @ b for b in _tangent_pair(q.normals[idx], nu)], axis=1)
    coef, *_ = np.linalg.lstsq(a, g, rcond=None)
    return float(coef[0])


def _tangent_pair(normal, nu):
    tau = np.cross(normal, nu)
    n = np.linalg.norm(tau)
    return [tau / n] if n > 1e-12 else []


# -- classification -------------------------------------------------------------------

def _fit_sphere(points):
    """Least squares (center, radius, max relative residual) of a sphere fit."""
    pts = np.asarray(points, dtype=float)
    a = np.concatenate([2.0 * pts, np.ones((len(pts), 1))], axis=1)
    b = np.sum(pts * pts, axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    center = sol[:-1]
    r2 = sol[-1] + float(center @ center)
    radius = math.sqrt(max(r2, 0.0))
    if radius == 0.0:
        return center, 0.0, math.inf
    resid = np.abs(np.linalg.norm(pts - center, axis=1) - radius) / radius
    return center, radius, float(np.max(resid))


def _fitted_center(surface):
    """Sphere fit in the natural coordinates of the representation."""
    if surface.representation == AXISYMMETRIC:
        c2, r, resid = _fit_sphere(surface.vertices)  # meridian circle
        if abs(c2[0]) > 0.05 * max(r, 1e-300):
            return None, r, resid  # circle center off the axis: not a revolved sphere
        return np.array([0.0, 0.0, c2[1]]), r, resid
    center, r, resid = _fit_sphere(surface.vertices)
    return center, r, resid


def _on_flat_piece(cone, center, tol_len):
    shape = cone.shape
    c = np.asarray(center, dtype=float)
    if isinstance(shape, HalfSpace):
        return abs(c[-1]) <= tol_len
    if isinstance(shape, Sector):
        if abs(shape.theta - math.pi) <= 1e-12:
            return abs(c[1]) <= tol_len
        for beta in (0.0, shape.theta):
            u = np.array([math.cos(beta), math.sin(beta)])
            t = float(c @ u)
            if t > tol_len and np.linalg.norm(c - t * u) <= tol_len:
                return True
        return False
    if isinstance(shape, Circular):
        if abs(shape.alpha - math.pi / 2.0) <= 1e-12:
            return abs(c[-1]) <= tol_len
        return False
    normals = np.asarray(shape.normals, dtype=float)
    gaps = np.abs(normals @ c)
    active = np.sum(gaps <= tol_len)
    return active == 1 and contains(cone, c, tol=tol_len)


def classify(surface, thresholds=None, quant=None):
    """Stationarity/stability verdict for a discrete surface in its cone.

    An instability certificate (strictly negative closed-form Q in a convex
    cone) takes precedence: a surface with negative second variation cannot
    be stable whether or not it is stationary.  The umbilical sphere
    classification only applies in convex cones.
    """
    thresholds = thresholds or StabilityThresholds()
    q = quantities(surface) if quant is None else quant
    convex = is_convex(surface.cone)

    if convex:
        qc = q_closed_form(surface, q)
        if qc < -thresholds.q_negative_tol * q.area:
            return VERDICT_NOT_STABLE

    contact = contact_angle_residual(surface)
    spread = curvature_spread(q)
    if contact > thresholds.contact_tol or spread > thresholds.curvature_spread_tol:
        return VERDICT_NOT_STATIONARY

    if not convex:
        return VERDICT_INCONCLUSIVE  # the sphere classification needs a convex cone

    n = surface.cone.n
    hbar = q.mean_curvature_avg
    umb_scale = max(n * hbar * hbar * q.area, 1e-300)
    if umbilicity_defect(surface, q) > thresholds.umbilicity_tol * umb_scale:
        return VERDICT_INCONCLUSIVE
    ii = boundary_ii_values(surface, q)
    if ii.size and np.max(np.abs(ii)) > thresholds.boundary_ii_tol * max(abs(hbar), 1e-300):
        return VERDICT_INCONCLUSIVE

    center, radius, resid = _fitted_center(surface)
    if center is None or resid > thresholds.sphere_fit_tol:
        return VERDICT_INCONCLUSIVE
    tol_len = thresholds.center_tol * radius
    has_boundary = q.boundary_indices.size > 0
    if not has_boundary:
        clearance = distance_to_boundary(surface.cone, center)
        if clearance >= radius * (1.0 - thresholds.center_tol):
            return VERDICT_INTERIOR
        return VERDICT_INCONCLUSIVE
    if _on_flat_piece(surface.cone, center, tol_len):
        return VERDICT_HALFBALL
    if np.linalg.norm(center) <= tol_len:
        return VERDICT_VERTEX
    return VERDICT_INCONCLUSIVE


def stability_report(surface, thresholds=None):
    """Assemble the full index-form report for one surface."""
    thresholds = thresholds or StabilityThresholds()
    q = quantities(surface)
    u, hbar = test_function(surface, q)
    q_direct, q_gradient = index_form(surface, u, q)
    qc = q_closed_form(surface, q)
    m1, m2 = minkowski_checks(surface, q)
    contact = contact_angle_residual(surface)
    try:
        bres = boundary_identity(surface, q, thresholds=thresholds)
    except OrthogonalityViolated:
        bres = math.nan
    v = surface.vertices
    if surface.representation == TRIANGLE_MESH:
        t = surface.elements
        sizes = [np.max(np.linalg.norm(v[t[:, i]] - v[t[:, j]], axis=1))
                 for i, j in ((0, 1), (1, 2), (2, 0))]
        max_elem = float(np.max(sizes))
    else:
        a, b = surface.elements[:, 0], surface.elements[:, 1]
        max_elem = float(np.max(np.linalg.norm(v[b] - v[a], axis=1)))
    return IndexFormReport(
        q_direct=q_direct,
        q_gradient_form=q_gradient,
        q_closed=qc,
        minkowski1_residual=m1,
        minkowski2_residual=m2,
        boundary_identity_residual=bres,
        umbilicity_defect=umbilicity_defect(surface, q),
        verdict=classify(surface, thresholds, q),
        mean_curvature=hbar,
        curvature_spread=curvature_spread(q),
        contact_angle_residual=contact,
        area=q.area,
        enclosed_volume=q.enclosed_volume,
        num_vertices=surface.num_vertices,
        max_element_size=max_elem,
    )


# -- profile derivatives ---------------------------------------------------------------

def profile_derivative_checks(cone, radius=1.0, dr=1e-4, dr2=1e-3, family=None):
    """Numerical derivative checks along a one-parameter spherical-cap family.

    The default family is the vertex balls of the cone, for which dP/dV
    equals n/r exactly and P^{(n+1)/n} is exactly linear in V.  Returns
    (|dP/dV - n/r|, |second derivative of P^{(n+1)/n} in V|).
    """
    n = cone.n
    if family is None:
        def family(r):
            c = vertex_ball(cone, r)
            return c.perimeter, c.volume

    def vol(r):
        return family(r)[1]

    if not (vol(radius - dr) < vol(radius) < vol(radius + dr)):
        raise ValueError("candidate family volume must be monotone in the parameter")

    p_hi, v_hi = family(radius + dr)
    p_lo, v_lo = family(radius - dr)
    dpdv = (p_hi - p_lo) / (v_hi - v_lo)
    dpdv_residual = abs(dpdv - n / radius)

    exponent = (n + 1) / n
    samples = [family(radius - dr2), family(radius), family(radius + dr2)]
    vs = np.array([v for _, v in samples])
    fs = np.array([p**exponent for p, _ in samples])
    coef = np.polyfit(vs, fs, 2)
    convexity_residual = abs(2.0 * coef[0])
    return dpdv_residual, convexity_residual
