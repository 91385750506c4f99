"""Closed-form isoperimetric candidates and existence criteria for cones.

Every candidate family here has perimeter ``w * r^n`` and volume
``w * r^(n+1) / (n+1)`` for an effective angular coefficient ``w``:

* vertex ball       -- w = solid angle of the cone,
* boundary half-ball-- w = c_n / 2 (half the unit-sphere measure),
* interior ball     -- w = c_n.

The candidate with the smallest coefficient wins at every volume, which
makes the three-way comparison a single scalar comparison.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .cones import (
    Circular,
    ConeSpec,
    HalfSpace,
    Polyhedral,
    Sector,
    has_flat_boundary_piece,
    interior_direction,
    is_convex,
    solid_angle,
    sphere_measure,
)

VERTEX = "vertex"
HALFBALL = "halfball"
INTERIOR = "interior"
TIE = "tie"

TIE_TOL = 1e-12
PROFILE_GAP_TOL = 1e-9  # relative slack when certifying a strict profile gap


@dataclass(frozen=True)
class CandidateRegion:
    """An analytic candidate region with its exact relative perimeter and volume."""

    kind: str  # 'vertex' | 'interior' | 'halfball'
    radius: float
    perimeter: float
    volume: float
    cone: ConeSpec
    center: tuple | None = None
    asymptotic: bool = False  # half-ball bound not attained (no flat boundary piece)


@dataclass(frozen=True)
class ExistenceReport:
    half_volume_criterion: bool
    supporting_hyperplane_criterion: bool
    profile_gap_certificate: tuple | None  # (volume, perimeter) with P < halfspace profile
    conclusion: str  # 'exists_for_all_volumes' | 'unknown'

    def to_json(self):
        cert = None if self.profile_gap_certificate is None else list(self.profile_gap_certificate)
        return {
            "half_volume_criterion": self.half_volume_criterion,
            "supporting_hyperplane_criterion": self.supporting_hyperplane_criterion,
            "profile_gap_certificate": cert,
            "conclusion": self.conclusion,
        }


def _require_positive(value, name):
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value}")


def vertex_ball(cone, r):
    """Ball of radius r centered at the vertex, intersected with the cone."""
    _require_positive(r, "radius")
    n = cone.n
    w = solid_angle(cone)
    return CandidateRegion(
        kind=VERTEX,
        radius=float(r),
        perimeter=w * r**n,
        volume=w * r ** (n + 1) / (n + 1),
        cone=cone,
        center=tuple(np.zeros(cone.ambient_dim)),
    )


def interior_ball(cone, r):
    """A round ball of radius r whose closure fits inside the cone."""
    _require_positive(r, "radius")
    n = cone.n
    c_n = sphere_measure(n)
    d, clear = interior_direction(cone)
    center = (2.0 * r / clear) * d  # distance to the boundary is 2r > r
    return CandidateRegion(
        kind=INTERIOR,
        radius=float(r),
        perimeter=c_n * r**n,
        volume=c_n * r ** (n + 1) / (n + 1),
        cone=cone,
        center=tuple(center),
    )


def boundary_half_ball(cone, r):
    """Half-ball of radius r centered on a flat boundary piece.

    When the boundary has no flat piece (circular cones away from the
    half-space case) the metrics are still returned -- they are the limit
    profile of diverging boundary half-balls and a valid upper bound -- but
    the region is flagged ``asymptotic`` because it is not attained.
    """
    _require_positive(r, "radius")
    n = cone.n
    c_n = sphere_measure(n)
    half = c_n / 2.0
    center, asymptotic = _half_ball_center(cone, r)
    return CandidateRegion(
        kind=HALFBALL,
        radius=float(r),
        perimeter=half * r**n,
        volume=half * r ** (n + 1) / (n + 1),
        cone=cone,
        center=center,
        asymptotic=asymptotic,
    )


def _half_ball_center(cone, r):
    shape = cone.shape
    if isinstance(shape, HalfSpace):
        return tuple(np.zeros(cone.ambient_dim)), False
    if isinstance(shape, Sector):
        theta = shape.theta
        if theta >= math.pi:
            d = 2.0 * r
        else:
            d = 2.0 * r / math.sin(theta)
        return (d, 0.0), False
    if isinstance(shape, Circular):
        if has_flat_boundary_piece(cone):  # alpha == pi/2, a genuine half-space
            return tuple(np.zeros(cone.ambient_dim)), False
        return None, True
    # polyhedral: walk into facet 0 from deep inside the cone
    normals = np.asarray(shape.normals, dtype=float)
    d_in, clear = interior_direction(cone)
    n0 = normals[0]
    foot = d_in - float(d_in @ n0) * n0
    norm = float(np.linalg.norm(foot))
    if norm < 1e-12:
        return None, True
    foot /= norm
    others = np.delete(normals, 0, axis=0)
    if others.size:
        gaps = others @ foot
        min_gap = float(np.min(gaps))
        if min_gap <= 1e-9:
            return None, True
        dist = 2.0 * r / min_gap
    else:
        dist = 2.0 * r
    return tuple(dist * foot), False


def halfspace_profile(n, volume):
    """Least perimeter enclosing ``volume`` against the flat boundary of a half-space."""
    _require_positive(volume, "volume")
    half = sphere_measure(n) / 2.0
    return half ** (1.0 / (n + 1)) * (n + 1) ** (n / (n + 1)) * volume ** (n / (n + 1))


def profile_value(coefficient, n, volume):
    """Perimeter of the coefficient-w family member with the given volume."""
    return coefficient ** (1.0 / (n + 1)) * (n + 1) ** (n / (n + 1)) * volume ** (n / (n + 1))


def radius_for_volume(coefficient, n, volume):
    return ((n + 1) * volume / coefficient) ** (1.0 / (n + 1))


@dataclass(frozen=True)
class ProfileComparison:
    volume: float
    ranked: tuple  # CandidateRegion tuple, perimeter ascending
    winner: str  # 'vertex' | 'halfball' | 'interior' | 'tie'
    winners: tuple  # the minimal candidates (two entries on a tie)
    halfspace_perimeter: float

    @property
    def winner_perimeter(self):
        return self.winners[0].perimeter


def candidate_profile(cone, volume, tie_tol=TIE_TOL):
    """Rank the three candidate families at a prescribed volume.

    The vertex ball wins strictly when the solid angle is below half the
    sphere measure; at exactly half the vertex ball and the boundary
    half-ball coincide in profile and both are reported as winners.
    """
    _require_positive(volume, "volume")
    n = cone.n
    builders = {VERTEX: vertex_ball, HALFBALL: boundary_half_ball, INTERIOR: interior_ball}
    coeffs = {
        VERTEX: solid_angle(cone),
        HALFBALL: sphere_measure(n) / 2.0,
        INTERIOR: sphere_measure(n),
    }
    regions = []
    for kind, w in coeffs.items():
        r = radius_for_volume(w, n, volume)
        regions.append(builders[kind](cone, r))
    regions.sort(key=lambda c: c.perimeter)
    best = regions[0].perimeter
    scale = max(1.0, best)
    winners = tuple(c for c in regions if c.perimeter - best <= tie_tol * scale)
    winner = winners[0].kind if len(winners) == 1 else TIE
    return ProfileComparison(
        volume=float(volume),
        ranked=tuple(regions),
        winner=winner,
        winners=winners,
        halfspace_perimeter=halfspace_profile(n, volume),
    )


def scale_candidate(candidate, lam):
    """Dilate a candidate: perimeter scales by lam^n, volume by lam^(n+1)."""
    _require_positive(lam, "scale factor")
    n = candidate.cone.n
    center = candidate.center
    if center is not None:
        center = tuple(lam * c for c in center)
    return replace(
        candidate,
        radius=candidate.radius * lam,
        perimeter=candidate.perimeter * lam**n,
        volume=candidate.volume * lam ** (n + 1),
        center=center,
    )


def existence_report(cone, probe_regions=None, gap_tol=PROFILE_GAP_TOL):
    """Certify existence of perimeter minimizers for all volumes, when possible.

    Three sufficient criteria are checked: solid angle at most half the
    sphere (vertex balls already beat the half-space profile), a locally
    supporting hyperplane somewhere on the boundary, and an explicit probe
    region whose perimeter undercuts the half-space profile at its volume.
    None of them can certify nonexistence, so the only verdicts are
    'exists_for_all_volumes' and 'unknown'.
    """
    n = cone.n
    w = solid_angle(cone)
    half = sphere_measure(n) / 2.0
    half_volume = bool(w <= half * (1.0 + 1e-14))
    supporting = _has_supporting_hyperplane(cone)

    certificate = None
    probes = [] if probe_regions is None else [(float(p), float(v)) for p, v in probe_regions]
    # the vertex ball is always available as a probe
    vb = vertex_ball(cone, 1.0)
    probes.insert(0, (vb.perimeter, vb.volume))
    for perim, vol in probes:
        if vol <= 0.0:
            continue
        bound = halfspace_profile(n, vol)
        if perim < bound * (1.0 - gap_tol):
            certificate = (vol, perim)
            break

    exists = half_volume or supporting or certificate is not None
    return ExistenceReport(
        half_volume_criterion=half_volume,
        supporting_hyperplane_criterion=supporting,
        profile_gap_certificate=certificate,
        conclusion="exists_for_all_volumes" if exists else "unknown",
    )


def _has_supporting_hyperplane(cone):
    shape = cone.shape
    if isinstance(shape, Sector):
        return True  # rays are flat away from the vertex
    if isinstance(shape, Circular):
        return shape.alpha <= math.pi / 2.0 + 1e-14
    return True  # half-space and polyhedral facets are flat


PROFILE_CSV_HEADER = [
    "volume",
    "perimeter_vertex",
    "perimeter_halfball",
    "perimeter_interior",
    "halfspace_profile",
    "winner",
]


def profile_rows(cone, volumes):
    rows = []
    for v in volumes:
        comp = candidate_profile(cone, v)
        by_kind = {c.kind: c for c in comp.ranked}
        rows.append(
            {
                "volume": v,
                "perimeter_vertex": by_kind[VERTEX].perimeter,
                "perimeter_halfball": by_kind[HALFBALL].perimeter,
                "perimeter_interior": by_kind[INTERIOR].perimeter,
                "halfspace_profile": comp.halfspace_perimeter,
                "winner": comp.winner,
            }
        )
    return rows


def profile_csv(cone, volumes):
    """Candidate-profile table as an RFC-4180 CSV string (17 significant digits)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(PROFILE_CSV_HEADER)
    for row in profile_rows(cone, volumes):
        writer.writerow(
            [f"{row[k]:.17g}" for k in PROFILE_CSV_HEADER[:-1]] + [row["winner"]]
        )
    return buf.getvalue()
