"""Canonical discrete surfaces: arcs, caps, spheres and meshes.

Builders return surfaces carrying a closed-form projector so refinement can
put new vertices back on the generator shape.  The optional ``grading``
argument applies a smooth non-uniform reparametrization; uniformly sampled
circles make several discrete operators exact to machine precision, which
hides discretization-order behaviour, so convergence studies should pass a
nonzero grading.
"""

from __future__ import annotations

import math

import numpy as np

from .cones import Circular, ConeSpec, HalfSpace, Sector
from .surfaces import (
    axisymmetric_surface,
    polyline_surface,
    triangle_mesh_surface,
)


def _warped(num, grading):
    """num+1 parameters in [0, 1], smoothly graded away from uniform."""
    t = np.linspace(0.0, 1.0, num + 1)
    if grading:
        t = t + grading * np.sin(2.0 * math.pi * t) / (2.0 * math.pi)
    return t


def _circle_projector(center, radius):
    center = np.asarray(center, dtype=float)

    def project(points, flags):
        rel = points - center
        norms = np.linalg.norm(rel, axis=1)
        return center + rel * (radius / norms)[:, None]

    return project


# -- planar builders -------------------------------------------------------------

def vertex_arc(cone, radius, segments, grading=0.0):
    """Circular arc about the vertex spanning the full sector opening."""
    theta = cone.shape.theta if isinstance(cone.shape, Sector) else math.pi
    phi = _warped(segments, grading) * theta
    pts = radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    pts[0, 1] = 0.0  # exact ray contact
    pts[-1] = radius * np.array([math.cos(theta), math.sin(theta)])
    return polyline_surface(cone, pts, closed=False,
                            projector=_circle_projector((0.0, 0.0), radius))


def interior_circle(cone, center, radius, segments, grading=0.0):
    """Closed circle of the given center and radius (must fit in the cone)."""
    phi = _warped(segments, grading)[:-1] * 2.0 * math.pi
    center = np.asarray(center, dtype=float)
    pts = center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return polyline_surface(cone, pts, closed=True,
                            projector=_circle_projector(center, radius))


def halfdisk_on_ray(cone, radius, center_distance, segments, ray=0, grading=0.0):
    """Half-circle centered on a boundary ray, bulging into the cone."""
    if isinstance(cone.shape, Sector):
        beta = 0.0 if ray == 0 else cone.shape.theta
    else:
        beta = 0.0 if ray == 0 else math.pi
    u = np.array([math.cos(beta), math.sin(beta)])
    nu = np.array([-u[1], u[0]])  # into the cone for ray 0 of a sector
    if ray != 0:
        nu = -nu
    center = center_distance * u
    phi = _warped(segments, grading) * math.pi
    pts = center + radius * (np.outer(np.cos(phi), u) + np.outer(np.sin(phi), nu))
    pts[0] = center + radius * u
    pts[-1] = center - radius * u
    return polyline_surface(cone, pts, closed=False,
                            projector=_circle_projector(center, radius))


def tilted_arc(cone, radius, tilt, segments):
    """Arc meeting the flat boundary at angle-defect ``tilt`` (radians).

    Only meaningful in a 2D half-space-like cone: the circle center sits at
    height radius*sin(tilt) above the boundary line, so both contact points
    have |<N, boundary normal>| = sin(tilt).
    """
    h = radius * math.sin(tilt)
    center = np.array([0.0, h])
    phi = np.linspace(-tilt, math.pi + tilt, segments + 1)
    pts = center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    pts[0, 1] = 0.0
    pts[-1, 1] = 0.0
    return polyline_surface(cone, pts, closed=False,
                            projector=_circle_projector(center, radius))


# -- axisymmetric builders --------------------------------------------------------

def sphere_meridian(cone, radius, center_z, segments, grading=0.0):
    """Full meridian of a sphere centered on the axis at height center_z."""
    t = _warped(segments, grading) * math.pi
    pts = np.stack([radius * np.sin(t), center_z + radius * np.cos(t)], axis=1)
    pts[0] = (0.0, center_z + radius)
    pts[-1] = (0.0, center_z - radius)
    return axisymmetric_surface(cone, pts,
                                projector=_circle_projector((0.0, center_z), radius))


def vertex_cap_meridian(cone, radius, segments, grading=0.0):
    """Spherical cap about the vertex, meridian from the axis to the cone wall."""
    if isinstance(cone.shape, Circular):
        alpha = cone.shape.alpha
    elif isinstance(cone.shape, HalfSpace):
        alpha = math.pi / 2.0
    else:
        raise ValueError("vertex caps need a circular cone or 3D half-space")
    t = _warped(segments, grading) * alpha
    pts = np.stack([radius * np.sin(t), radius * np.cos(t)], axis=1)
    pts[0] = (0.0, radius)
    pts[-1] = (radius * math.sin(alpha), radius * math.cos(alpha))
    return axisymmetric_surface(cone, pts,
                                projector=_circle_projector((0.0, 0.0), radius))


def half_sphere_meridian(cone, radius, segments, grading=0.0):
    """Half-sphere over the flat boundary of a 3D half-space (vertex-centered)."""
    return vertex_cap_meridian(cone, radius, segments, grading=grading)


def spheroid_meridian(cone, a, c, center_z, segments, grading=0.0):
    """Closed spheroid with equatorial semi-axis a and polar semi-axis c."""
    t = _warped(segments, grading) * math.pi
    pts = np.stack([a * np.sin(t), center_z + c * np.cos(t)], axis=1)
    pts[0] = (0.0, center_z + c)
    pts[-1] = (0.0, center_z - c)

    def project(points, flags):
        rel = (points - np.array([0.0, center_z])) / np.array([a, c])
        rel /= np.linalg.norm(rel, axis=1)[:, None]
        return np.array([0.0, center_z]) + rel * np.array([a, c])

    return axisymmetric_surface(cone, pts, projector=project)


# -- triangle meshes ---------------------------------------------------------------

_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
    [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
    [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
], dtype=float)
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=int)


def _icosphere_points(level):
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1)[:, None]
    faces = _ICO_FACES.copy()
    for _ in range(level):
        midpoint_of = {}
        new_verts = [v for v in verts]

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint_of:
                m = new_verts[i] + new_verts[j]
                new_verts.append(m / np.linalg.norm(m))
                midpoint_of[key] = len(new_verts) - 1
            return midpoint_of[key]

        out = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]])
        verts = np.asarray(new_verts)
        faces = np.asarray(out, dtype=int)
    return verts, faces


def icosphere(cone, radius, level, center):
    """Icosahedral sphere mesh of the given subdivision level."""
    verts, faces = _icosphere_points(level)
    center = np.asarray(center, dtype=float)
    pts = center + radius * verts

    def project(points, flags):
        rel = points - center
        return center + rel * (radius / np.linalg.norm(rel, axis=1))[:, None]

    return triangle_mesh_surface(cone, pts, faces, projector=project)


def ellipsoid_mesh(cone, semiaxes, level, center):
    """Ellipsoid mesh from a scaled icosphere."""
    verts, faces = _icosphere_points(level)
    semiaxes = np.asarray(semiaxes, dtype=float)
    center = np.asarray(center, dtype=float)
    pts = center + verts * semiaxes

    def project(points, flags):
        rel = (points - center) / semiaxes
        rel /= np.linalg.norm(rel, axis=1)[:, None]
        return center + rel * semiaxes

    return triangle_mesh_surface(cone, pts, faces, projector=project)
