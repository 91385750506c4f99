"""Constrained perimeter minimization inside a cone.

The optimizer descends the discretized perimeter under an augmented
Lagrangian volume constraint

    AL(x) = P(x) - lambda (V(x) - V_target) + mu/2 (V(x) - V_target)^2,

so the multiplier converges to dP/dV = n H of the minimizer and can be
compared against the mean curvature directly.  Steps follow the mass-lumped
(L2) gradient; acceptance requires the perimeter not to increase and the
augmented Lagrangian to decrease, with backtracking halving on rejection.
Boundary endpoints slide along the cone wall through an arclength
parametrization, which lets them migrate across the vertex in nonconvex
sectors.  Each run works coarse-to-fine: midpoint refinement preserves the
discrete perimeter and volume exactly, so the descent record stays monotone.

2D cones evolve a polyline; 3D work is restricted to circular cones (and
the 3D half-space) via the axisymmetric meridian reduction.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .cones import Circular, ConeSpec, HalfSpace, Sector, contains, solid_angle
from .candidates import candidate_profile, radius_for_volume
from .surfaces import (
    DiscreteHypersurface,
    _chain_frame,
    axisymmetric_surface,
    chain_self_intersects,
    polyline_surface,
)

MAX_CONSECUTIVE_REJECTIONS = 40

_DEBUG = None  # development hook: set to a list to record rejected trials

INITIALIZERS = ("vertex_cap", "boundary_halfball", "random_blob")

TRACE_HEADER = ["iter", "perimeter", "volume", "grad_norm", "contact_residual",
                "curvature_spread"]


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizationConfig:
    target_volume: float
    step_size: float = 1.0
    max_iterations: int = 6000
    grad_tolerance: float = 5e-3
    volume_tolerance: float = 1e-3
    penalty_initial: float = 20.0
    penalty_growth: float = 2.0
    resolution: int = 200
    restarts: int = 1
    rng_seed: int = 0
    initializer: str = "vertex_cap"

    def __post_init__(self):
        if not self.target_volume > 0.0:
            raise ValueError(f"target_volume must be positive, got {self.target_volume}")
        for name in ("step_size", "grad_tolerance", "volume_tolerance", "penalty_initial"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty_growth must exceed 1")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be at least 1")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"initializer must be one of {INITIALIZERS}")

    def to_json(self):
        return {
            "target_volume": self.target_volume,
            "step_size": self.step_size,
            "max_iterations": self.max_iterations,
            "grad_tolerance": self.grad_tolerance,
            "volume_tolerance": self.volume_tolerance,
            "penalty_initial": self.penalty_initial,
            "penalty_growth": self.penalty_growth,
            "resolution": self.resolution,
            "restarts": self.restarts,
            "rng_seed": self.rng_seed,
            "initializer": self.initializer,
        }


@dataclass(frozen=True)
class OptimizationRun:
    config: OptimizationConfig
    cone: ConeSpec
    trace: tuple  # rows matching TRACE_HEADER
    final_surface: DiscreteHypersurface
    converged: bool
    multiplier: float
    best_candidate_gap: float
    restart_index: int
    restart_summaries: tuple


@dataclass(frozen=True)
class StationarityReport:
    curvature_spread: float
    contact_angle_residual: float
    multiplier_vs_H_gap: float
    mean_curvature: float
    warning: str | None = None


def trace_csv(run):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(TRACE_HEADER)
    for row in run.trace:
        writer.writerow([str(int(row[0]))] + [f"{x:.17g}" for x in row[1:]])
    return buf.getvalue()


# -- geometry backends -------------------------------------------------------------


class _PlanarChain:
    """Open polyline in a 2D cone; endpoints parametrized along the wall.

    The wall coordinate t covers both rays: t >= 0 walks out the first ray,
    t < 0 walks out the second, so an endpoint can slide through the vertex.
    """

    representation = "planar"

    def __init__(self, cone):
        self.cone = cone
        shape = cone.shape
        if isinstance(shape, Sector):
            self.theta = shape.theta
        elif isinstance(shape, HalfSpace):
            self.theta = math.pi
        else:
            raise OptimizationError("planar optimization needs a sector or 2D half-space")
        self.u0 = np.array([1.0, 0.0])
        self.u1 = np.array([math.cos(self.theta), math.sin(self.theta)])

    def wall_point(self, t):
        return t * self.u0 if t >= 0.0 else (-t) * self.u1

    def wall_dir(self, t):
        return self.u0 if t >= 0.0 else -self.u1

    def wall_param(self, p):
        # distance along the nearest ray, signed by which ray
        t0 = float(p @ self.u0)
        t1 = float(p @ self.u1)
        d0 = np.linalg.norm(p - max(t0, 0.0) * self.u0)
        d1 = np.linalg.norm(p - max(t1, 0.0) * self.u1)
        return max(t0, 0.0) if d0 <= d1 else -max(t1, 0.0)

    def perimeter_and_grad(self, pts):
        e = pts[1:] - pts[:-1]
        lengths = np.linalg.norm(e, axis=1)
        unit = e / lengths[:, None]
        grad = np.zeros_like(pts)
        grad[:-1] -= unit
        grad[1:] += unit
        return float(np.sum(lengths)), grad

    def volume_and_grad(self, pts, orientation):
        a, b = pts[:-1], pts[1:]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        vol = orientation * 0.5 * float(np.sum(cross))
        grad = np.zeros_like(pts)
        rot_next = np.stack([pts[1:, 1], -pts[1:, 0]], axis=1)     # -rot90(v_{i+1})
        rot_prev = np.stack([-pts[:-1, 1], pts[:-1, 0]], axis=1)   # +rot90(v_{i-1})
        grad[:-1] += rot_next
        grad[1:] += rot_prev
        return vol, orientation * 0.5 * grad

    def vertex_weights(self, pts):
        lengths = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
        w = np.zeros(len(pts))
        w[:-1] += lengths / 2.0
        w[1:] += lengths / 2.0
        return w

    def feasible(self, pts):
        scale = max(1.0, float(np.max(np.abs(pts))))
        for p in pts[1:-1]:
            if not contains(self.cone, p, tol=1e-9 * scale):
                return False
        if chain_self_intersects(pts, closed=False):
            return False
        return True

    def diagnostics(self, pts, orientation):
        frame = _chain_frame(pts, False, orientation)
        hbar = float(np.sum(frame.curvature * frame.weights) / np.sum(frame.weights))
        spread = float(np.max(np.abs(frame.curvature - hbar)) / max(abs(hbar), 1e-300))
        contact = 0.0
        for idx, t in ((0, self._t0), (-1, self._t1)):
            nu = np.array([0.0, 1.0]) if t >= 0.0 else np.array(
                [math.sin(self.theta), -math.cos(self.theta)])
            contact = max(contact, abs(float(frame.normals[idx] @ nu)))
        return hbar, spread, contact

    def attach_params(self, t0, t1):
        self._t0, self._t1 = t0, t1

    def redistribute(self, pts):
        seg = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        target = np.linspace(0.0, s[-1], len(pts))
        out = np.stack([np.interp(target, s, pts[:, 0]), np.interp(target, s, pts[:, 1])], axis=1)
        out[0], out[-1] = pts[0], pts[-1]
        return out

    def to_surface(self, pts):
        return polyline_surface(self.cone, pts, closed=False)

    def initial_points(self, kind, resolution, volume, rng):
        theta = self.theta
        if kind == "vertex_cap":
            r = math.sqrt(2.0 * volume / theta)
            phi = np.linspace(0.0, theta, resolution + 1)
            return r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        if kind == "boundary_halfball":
            r = math.sqrt(2.0 * volume / math.pi)
            d = 2.0 * r if theta >= math.pi else 2.0 * r / math.sin(theta)
            phi = np.linspace(0.0, math.pi, resolution + 1)
            return np.stack([d + r * np.cos(phi), r * np.sin(phi)], axis=1)
        # random blob: star-shaped radial perturbation of the vertex cap
        r = math.sqrt(2.0 * volume / theta)
        phi = np.linspace(0.0, theta, resolution + 1)
        noise = _band_noise(resolution + 1, rng, amplitude=0.3)
        radii = r * (1.0 + noise)
        pts = np.stack([radii * np.cos(phi), radii * np.sin(phi)], axis=1)
        area = 0.5 * abs(np.sum(pts[:-1, 0] * pts[1:, 1] - pts[:-1, 1] * pts[1:, 0]))
        return pts * math.sqrt(volume / area)


class _MeridianChain:
    """Meridian chain for axisymmetric surfaces in a 3D circular cone.

    First endpoint stays on the axis of revolution (free height), last
    endpoint slides along the slanted wall by its distance from the vertex.
    """

    representation = "meridian"

    def __init__(self, cone):
        shape = cone.shape
        if isinstance(shape, Circular):
            self.alpha = shape.alpha
        elif isinstance(shape, HalfSpace) and cone.ambient_dim == 3:
            self.alpha = math.pi / 2.0
        else:
            raise OptimizationError("axisymmetric optimization needs a 3D circular cone")
        self.cone = cone
        self.slant = np.array([math.sin(self.alpha), math.cos(self.alpha)])

    def wall_point(self, t):
        return t * self.slant

    def wall_dir(self, t):
        return self.slant

    def wall_param(self, p):
        return max(float(p @ self.slant), 1e-12)

    def perimeter_and_grad(self, pts):
        e = pts[1:] - pts[:-1]
        lengths = np.linalg.norm(e, axis=1)
        unit = e / lengths[:, None]
        rho_bar = (pts[:-1, 0] + pts[1:, 0]) / 2.0
        area = float(np.sum(2.0 * math.pi * rho_bar * lengths))
        grad = np.zeros_like(pts)
        grad[:-1] -= 2.0 * math.pi * rho_bar[:, None] * unit
        grad[1:] += 2.0 * math.pi * rho_bar[:, None] * unit
        grad[:-1, 0] += math.pi * lengths
        grad[1:, 0] += math.pi * lengths
        return area, grad

    def volume_and_grad(self, pts, orientation):
        a, b = pts[:-1], pts[1:]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        rho_sum = a[:, 0] + b[:, 0]
        vol = orientation * math.pi / 3.0 * float(np.sum(cross * rho_sum))
        grad = np.zeros_like(pts)
        # d/da [cross(a,b)] = (b_z, -b_rho); d/db = (-a_z, a_rho)
        da = np.stack([b[:, 1] * rho_sum + cross, -b[:, 0] * rho_sum], axis=1)
        db = np.stack([-a[:, 1] * rho_sum + cross, a[:, 0] * rho_sum], axis=1)
        grad[:-1] += da
        grad[1:] += db
        return vol, orientation * math.pi / 3.0 * grad

    def vertex_weights(self, pts):
        lengths = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
        seg_area = 2.0 * math.pi * (pts[:-1, 0] + pts[1:, 0]) / 2.0 * lengths
        w = np.zeros(len(pts))
        w[:-1] += seg_area / 2.0
        w[1:] += seg_area / 2.0
        # the axis endpoint weight degenerates with rho; keep steps finite there
        return np.maximum(w, 1e-3 * np.max(w))

    def feasible(self, pts):
        if np.any(pts[1:-1, 0] <= 1e-12):
            return False
        scale = max(1.0, float(np.max(np.abs(pts))))
        for rho, z in pts[1:-1]:
            if not contains(self.cone, np.array([rho, 0.0, z]), tol=1e-9 * scale):
                return False
        if chain_self_intersects(pts, closed=False):
            return False
        return True

    def diagnostics(self, pts, orientation):
        frame = _chain_frame(pts, False, orientation, reflect_axis=True)
        rho = pts[:, 0]
        on_axis = rho <= 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            kappa_p = np.where(on_axis, frame.curvature,
                               -frame.normals[:, 0] / np.where(on_axis, 1.0, rho))
        h = (frame.curvature + kappa_p) / 2.0
        seg_area = 2.0 * math.pi * (rho[:-1] + rho[1:]) / 2.0 * frame.lengths
        w = np.zeros(len(pts))
        w[:-1] += seg_area / 2.0
        w[1:] += seg_area / 2.0
        hbar = float(np.sum(h * w) / np.sum(w))
        spread = float(np.max(np.abs(h - hbar)) / max(abs(hbar), 1e-300))
        nu = np.array([-math.cos(self.alpha), math.sin(self.alpha)])
        contact = abs(float(frame.normals[-1] @ nu))
        return hbar, spread, contact

    def attach_params(self, t0, t1):
        self._t0, self._t1 = t0, t1

    def redistribute(self, pts):
        seg = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        target = np.linspace(0.0, s[-1], len(pts))
        out = np.stack([np.interp(target, s, pts[:, 0]), np.interp(target, s, pts[:, 1])], axis=1)
        out[0], out[-1] = pts[0], pts[-1]
        out[1:-1, 0] = np.maximum(out[1:-1, 0], 1e-10)
        return out

    def to_surface(self, pts):
        return axisymmetric_surface(self.cone, pts)

    def initial_points(self, kind, resolution, volume, rng):
        omega = solid_angle(self.cone)
        r = radius_for_volume(omega, 2, volume)
        t = np.linspace(0.0, self.alpha, resolution + 1)
        if kind == "boundary_halfball":
            if abs(self.alpha - math.pi / 2.0) > 1e-12:
                raise OptimizationError(
                    "boundary_halfball initializer needs a flat wall (half-space cone)"
                )
            kind = "vertex_cap"  # the two coincide there
        if kind == "vertex_cap":
            pts = r * np.stack([np.sin(t), np.cos(t)], axis=1)
        else:
            noise = _band_noise(resolution + 1, rng, amplitude=0.3)
            radii = r * (1.0 + noise)
            pts = np.stack([radii * np.sin(t), radii * np.cos(t)], axis=1)
            vol = math.pi / 3.0 * abs(float(np.sum(
                (pts[:-1, 0] * pts[1:, 1] - pts[:-1, 1] * pts[1:, 0])
                * (pts[:-1, 0] + pts[1:, 0]))))
            pts *= (volume / vol) ** (1.0 / 3.0)
        pts[0, 0] = 0.0
        return pts


def _band_noise(count, rng, amplitude, modes=4):
    s = np.linspace(0.0, 1.0, count)
    coeffs = rng.uniform(-1.0, 1.0, modes)
    wave = sum(c * np.cos((k + 1) * math.pi * s) for k, c in enumerate(coeffs))
    peak = np.max(np.abs(wave))
    if peak == 0.0:
        return np.zeros(count)
    return amplitude * wave / peak


# -- the descent loop ----------------------------------------------------------------


def _phase_resolutions(resolution):
    # halve while the segment count divides evenly; midpoint refinement is exact
    phases = [resolution]
    while phases[0] % 2 == 0 and phases[0] >= 48:
        phases.insert(0, phases[0] // 2)
    return phases


def _refine_chain(pts, factor):
    out = []
    for i in range(len(pts) - 1):
        out.append(pts[i])
        for s in range(1, factor):
            lam = s / factor
            out.append((1 - lam) * pts[i] + lam * pts[i + 1])
    out.append(pts[-1])
    return np.asarray(out)


def _single_restart(cone, config, restart_index):
    problem = (_PlanarChain if cone.ambient_dim == 2 else _MeridianChain)(cone)
    rng = np.random.default_rng([config.rng_seed, restart_index])
    vt = config.target_volume
    resolutions = _phase_resolutions(config.resolution)
    pts = problem.initial_points(config.initializer, resolutions[0], vt, rng)

    # orientation fixed once from the initializer
    vol_plus, _ = problem.volume_and_grad(pts, 1)
    orientation = 1 if vol_plus >= 0.0 else -1

    comp = candidate_profile(cone, vt)
    lam_mult = cone.n / comp.winners[0].radius  # warm start at n*H of the winner
    mu = config.penalty_initial

    planar = problem.representation == "planar"
    tA = problem.wall_param(pts[0]) if planar else 0.0
    tB = problem.wall_param(pts[-1])
    problem.attach_params(tA, tB)

    def wall_positions(points, ta, tb):
        points = points.copy()
        if planar:
            points[0] = problem.wall_point(ta)
        else:
            points[0, 0] = 0.0  # axis endpoint: rho pinned, z free
        points[-1] = problem.wall_point(tb)
        return points

    pts = wall_positions(pts, tA, tB)

    def evaluate(points):
        perim, gperim = problem.perimeter_and_grad(points)
        vol, gvol = problem.volume_and_grad(points, orientation)
        c = vol - vt
        al = perim - lam_mult * c + 0.5 * mu * c * c
        gal = gperim + (mu * c - lam_mult) * gvol
        return perim, vol, al, gal

    def descent_direction(points, gal, ta, tb):
        weights = problem.vertex_weights(points)
        direction = -gal / weights[:, None]
        if planar:
            da = float(direction[0] @ problem.wall_dir(ta))
            direction[0] = da * problem.wall_dir(ta)
        else:
            direction[0] = np.array([0.0, direction[0, 1]])
            da = direction[0, 1]
        db = float(direction[-1] @ problem.wall_dir(tb))
        direction[-1] = db * problem.wall_dir(tb)
        gnorm = float(np.max(np.linalg.norm(direction, axis=1)))
        return direction, da, db, gnorm

    trace = []
    it = 0
    converged = False
    rejected_in_a_row = 0
    fatal = False
    for phase_idx, res in enumerate(resolutions):
        if phase_idx > 0:
            pts = _refine_chain(pts, 2)
        h_min = float(np.min(np.linalg.norm(pts[1:] - pts[:-1], axis=1)))
        dt_max = 0.45 * config.step_size * h_min * h_min
        dt = dt_max
        final_phase = phase_idx == len(resolutions) - 1
        # smooth modes only relax at coarse resolution (steps scale with h^2),
        # so every phase polishes to the same tolerance and the coarsest phase
        # owns half the iteration budget
        gtol = config.grad_tolerance
        remaining = config.max_iterations - it
        if final_phase:
            phase_budget = max(remaining, 1)
        elif phase_idx == 0:
            phase_budget = max(remaining // 2, 1)
        else:
            phase_budget = max(remaining // (len(resolutions) - phase_idx), 1)
        used = 0
        while used < phase_budget:
            perim, vol, al, gal = evaluate(pts)
            direction, dA, dB, gnorm = descent_direction(pts, gal, tA, tB)

            problem.attach_params(tA, tB)
            hbar, spread, contact = problem.diagnostics(pts, orientation)
            trace.append((it, perim, vol, gnorm, contact, spread))

            feasible_now = abs(vol - vt) <= config.volume_tolerance * vt
            if gnorm <= gtol and feasible_now:
                if final_phase:
                    converged = True
                break

            accepted = False
            while True:
                tA_trial = tA + dt * dA if planar else tA
                tB_trial = tB + dt * dB
                trial = pts + dt * direction
                if not planar:
                    tB_trial = max(tB_trial, 1e-9)
                trial = wall_positions(trial, tA_trial, tB_trial)
                perim_t, vol_t, al_t, _ = evaluate(trial)
                # monotone up to roundoff slack: near the constrained optimum the
                # multiplier polish needs perimeter fluctuations at the 1e-10 scale
                ok = (
                    perim_t <= perim + 1e-10 * max(perim, 1.0)
                    and al_t <= al
                    and problem.feasible(trial)
                )
                if _DEBUG is not None and not ok:
                    _DEBUG.append((it, dt, perim_t - perim, al_t - al, problem.feasible(trial)))
                if ok:
                    pts = trial
                    tA, tB = tA_trial, tB_trial
                    dt = min(dt * 1.2, dt_max)
                    rejected_in_a_row = 0
                    accepted = True
                    break
                dt *= 0.5
                rejected_in_a_row += 1
                if rejected_in_a_row >= MAX_CONSECUTIVE_REJECTIONS:
                    break
            it += 1
            used += 1
            if rejected_in_a_row >= MAX_CONSECUTIVE_REJECTIONS:
                fatal = True
                break
            if accepted and it % 25 == 0:
                lengths = np.linalg.norm(pts[1:] - pts[:-1], axis=1)
                if float(np.max(lengths) / np.min(lengths)) > 2.0:
                    pts = problem.redistribute(pts)
                    pts = wall_positions(pts, tA, tB)
            # outer multiplier update once the inner residual has settled
            if accepted and gnorm <= gtol * 2.0 and not feasible_now:
                _, vol_now, _, _ = evaluate(pts)
                lam_mult = lam_mult + mu * (vt - vol_now)
                mu = min(mu * config.penalty_growth, 1e7)
        if fatal:
            break

    perim, vol, al, gal = evaluate(pts)
    problem.attach_params(tA, tB)
    hbar, spread, contact = problem.diagnostics(pts, orientation)
    _, _, _, gnorm = descent_direction(pts, gal, tA, tB)
    trace.append((it, perim, vol, gnorm, contact, spread))
    if fatal:
        converged = False
    surface = problem.to_surface(pts)
    return {
        "surface": surface,
        "trace": trace,
        "converged": converged and abs(vol - vt) <= config.volume_tolerance * vt,
        "multiplier": lam_mult,
        "perimeter": perim,
        "volume": vol,
        "fatal": fatal,
    }


def minimize(cone, config):
    """Minimize relative perimeter at fixed volume; returns the best restart."""
    if cone.ambient_dim not in (2, 3):
        raise OptimizationError("optimization supports ambient dimension 2 and 3 only")
    if cone.ambient_dim == 3 and not isinstance(cone.shape, (Circular, HalfSpace)):
        raise OptimizationError("3D optimization is restricted to circular cones")
    results = []
    for restart in range(config.restarts):
        results.append(_single_restart(cone, config, restart))
    if all(r["fatal"] for r in results):
        raise OptimizationError("all restarts failed: steps rejected 40 times in a row")
    best_idx = min(range(len(results)),
                   key=lambda i: results[i]["perimeter"] if not results[i]["fatal"] else math.inf)
    best = results[best_idx]
    comp = candidate_profile(cone, config.target_volume)
    gap = (best["perimeter"] - comp.winner_perimeter) / comp.winner_perimeter
    summaries = tuple(
        {
            "restart": i,
            "perimeter": r["perimeter"],
            "volume": r["volume"],
            "converged": r["converged"],
            "fatal": r["fatal"],
        }
        for i, r in enumerate(results)
    )
    return OptimizationRun(
        config=config,
        cone=cone,
        trace=tuple(best["trace"]),
        final_surface=best["surface"],
        converged=best["converged"],
        multiplier=best["multiplier"],
        best_candidate_gap=gap,
        restart_index=best_idx,
        restart_summaries=summaries,
    )


def stationarity_report(run):
    """Stationarity diagnostics of a finished run; flags non-converged input."""
    from .stability import curvature_spread as _spread
    from .surfaces import contact_angle_residual, quantities

    q = quantities(run.final_surface)
    hbar = q.mean_curvature_avg
    n = run.cone.n
    gap = abs(run.multiplier - n * hbar) / abs(n * hbar)
    return StationarityReport(
        curvature_spread=_spread(q),
        contact_angle_residual=contact_angle_residual(run.final_surface),
        multiplier_vs_H_gap=gap,
        mean_curvature=hbar,
        warning=None if run.converged else "run did not converge; values are diagnostic only",
    )


# -- volume sweeps --------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    volume: float
    perimeter: float
    candidate_perimeter: float
    gap: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    power_law_slope: float
    power_law_intercept: float
    linearity_residual: float


def _sweep_one(args):
    cone_json, volume, config_json = args
    cone = ConeSpec.from_json(cone_json)
    config = OptimizationConfig(**{**config_json, "target_volume": volume})
    try:
        run = minimize(cone, config)
        comp = candidate_profile(cone, volume)
        perim = run.trace[-1][1]
        return SweepRow(volume, perim, comp.winner_perimeter,
                        (perim - comp.winner_perimeter) / comp.winner_perimeter,
                        run.converged)
    except Exception as exc:  # failed rows are flagged, the sweep continues
        comp = candidate_profile(cone, volume)
        return SweepRow(volume, math.nan, comp.winner_perimeter, math.nan, False, str(exc))


def sweep_workers():
    raw = os.environ.get("CONE_ISO_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        count = 1
    if count == 0:
        return os.cpu_count() or 1
    return max(count, 1)


def profile_sweep(cone, volumes, config):
    """One constrained minimization per volume plus a power-law fit.

    Fits P^((n+1)/n) against V over the successful rows and reports the
    slope and the maximum relative deviation from the affine fit.
    """
    volumes = [float(v) for v in volumes]
    for v in volumes:
        if v <= 0.0:
            raise ValueError("sweep volumes must be positive")
    tasks = [(cone.to_json(), v, {**config.to_json(), "target_volume": v}) for v in volumes]
    workers = sweep_workers()
    if workers > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    good = [r for r in rows if r.error is None and math.isfinite(r.perimeter)]
    n = cone.n
    if len(good) >= 2:
        vs = np.array([r.volume for r in good])
        fs = np.array([r.perimeter ** ((n + 1) / n) for r in good])
        slope, intercept = np.polyfit(vs, fs, 1)
        fit = slope * vs + intercept
        residual = float(np.max(np.abs(fs - fit) / np.abs(fs)))
    else:
        slope, intercept, residual = math.nan, math.nan, math.nan
    return SweepResult(tuple(rows), float(slope), float(intercept), residual)


SWEEP_CSV_HEADER = ["volume", "perimeter_numerical", "perimeter_candidate", "gap", "converged"]


def sweep_csv(result):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(SWEEP_CSV_HEADER)
    for r in result.rows:
        writer.writerow([
            f"{r.volume:.17g}", f"{r.perimeter:.17g}", f"{r.candidate_perimeter:.17g}",
            f"{r.gap:.17g}", str(int(r.converged)),
        ])
    return buf.getvalue()
