"""Footstep localization by fitting exponential energy attenuation.

A footstep at (x, y) with source energy E deposits energy E * exp(-beta * r_i)
at a sensor r_i meters away. Given the per-sensor energies of one event, the
four unknowns (x, y, E, beta) are recovered by damped Gauss-Newton least
squares with an analytic Jacobian. E and beta are optimized in log space,
which keeps them positive without explicit constraints.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    FootstepEvent,
    LocationEstimate,
    SensorArray,
    VibrationRecord,
    samples_for,
    zone_sensors,
)
from .energy import EventDetectorConfig, detect_events, event_energy, windowed_energy
from .errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    InvalidArgumentError,
)
from .ingest import GroundTruthPath

log = logging.getLogger(__name__)

_R_FLOOR = 1e-12  # avoids 0/0 in the direction term when the source sits on a sensor
_LOG_CLIP = 60.0  # |log E|, |log beta| cap; keeps exp() finite during wild trial steps


def forward_energy(
    x: float, y: float, source_energy: float, attenuation: float, sensors: SensorArray
) -> np.ndarray:
    """Predicted event energy at every sensor of the array."""
    if source_energy < 0:
        raise InvalidArgumentError(f"source_energy must be >= 0, got {source_energy}")
    if attenuation < 0:
        raise InvalidArgumentError(f"attenuation must be >= 0, got {attenuation}")
    if not all(math.isfinite(v) for v in (x, y, source_energy, attenuation)):
        raise InvalidArgumentError("forward model parameters must be finite")
    pos = sensors.positions()
    r = np.hypot(x - pos[:, 0], y - pos[:, 1])
    return source_energy * np.exp(-attenuation * r)


def forward_jacobian(
    x: float, y: float, source_energy: float, attenuation: float, sensors: SensorArray
) -> np.ndarray:
    """Analytic Jacobian of :func:`forward_energy` w.r.t. (x, y, E, beta).

    Shape (n_sensors, 4); column order matches the parameter order above.
    """
    pos = sensors.positions()
    dx = x - pos[:, 0]
    dy = y - pos[:, 1]
    r = np.hypot(dx, dy)
    rs = np.maximum(r, _R_FLOOR)
    e = np.exp(-attenuation * r)
    m = source_energy * e
    return np.column_stack(
        [
            -m * attenuation * dx / rs,
            -m * attenuation * dy / rs,
            e,
            -m * r,
        ]
    )


@dataclass(frozen=True)
class FitConfig:
    """Solver controls for the attenuation fit."""

    max_iterations: int = 500
    gradient_tol: float = 1e-13
    step_tol: float = 1e-14
    damping_init: float = 1e-3
    multistart_count: int = 5
    zone_margin: float = 2.0
    plausibility_bound: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        for name in ("gradient_tol", "step_tol", "damping_init", "plausibility_bound"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.multistart_count < 1:
            raise InvalidArgumentError("multistart_count must be >= 1")
        if self.zone_margin < 0:
            raise InvalidArgumentError("zone_margin must be nonnegative")


@dataclass
class _StartResult:
    theta: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def _residual(theta: np.ndarray, pos: np.ndarray, obs: np.ndarray) -> np.ndarray:
    energy = math.exp(theta[2])
    beta = math.exp(theta[3])
    r = np.hypot(theta[0] - pos[:, 0], theta[1] - pos[:, 1])
    return energy * np.exp(-beta * r) - obs


def _jacobian(theta: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Jacobian in the optimization parameterization (x, y, log E, log beta)."""
    energy = math.exp(theta[2])
    beta = math.exp(theta[3])
    dx = theta[0] - pos[:, 0]
    dy = theta[1] - pos[:, 1]
    r = np.hypot(dx, dy)
    rs = np.maximum(r, _R_FLOOR)
    m = energy * np.exp(-beta * r)
    return np.column_stack(
        [
            -m * beta * dx / rs,
            -m * beta * dy / rs,
            m,  # dm/d(log E) = m
            -m * beta * r,  # dm/d(log beta) = -m * beta * r
        ]
    )


def _run_start(
    pos: np.ndarray, obs: np.ndarray, start: np.ndarray, config: FitConfig
) -> _StartResult:
    theta = start.copy()
    res = _residual(theta, pos, obs)
    cost = 0.5 * float(res @ res)
    lam = config.damping_init
    perfect = 1e-13 * max(1.0, float(np.linalg.norm(obs)))
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        jac = _jacobian(theta, pos)
        grad = jac.T @ res
        if np.abs(grad).max() < config.gradient_tol:
            converged = True
            iterations -= 1  # no step taken this round
            break
        hess = jac.T @ jac
        diag = np.diag(hess).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1.0))

        accepted = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(hess + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 4.0
                continue
            trial = theta + delta
            trial[2:] = np.clip(trial[2:], -_LOG_CLIP, _LOG_CLIP)
            trial_res = _residual(trial, pos, obs)
            trial_cost = 0.5 * float(trial_res @ trial_res)
            if trial_cost < cost:
                step = float(np.linalg.norm(trial - theta))
                theta, res, cost = trial, trial_res, trial_cost
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                if np.linalg.norm(res) <= perfect:
                    converged = True  # residual at float noise; nothing left to fit
                # trust the step criterion only once damping is negligible,
                # otherwise heavily damped (hence tiny) steps fake convergence
                elif lam <= 1e-6 and step < config.step_tol * (
                    float(np.linalg.norm(theta)) + config.step_tol
                ):
                    converged = True
                break
            lam *= 4.0
            if lam > 1e12:
                break
        if not accepted or converged:
            break

    return _StartResult(
        theta=theta,
        residual_norm=float(np.linalg.norm(res)),
        iterations=iterations,
        converged=converged,
    )


def _initial_attenuation(pos: np.ndarray, obs: np.ndarray) -> float:
    """Rough beta from energy ratios, assuming the source sits at the
    strongest sensor; the median over the other sensors is robust enough to
    land the solver in the right basin."""
    best = int(np.argmax(obs))
    estimates = []
    for i in range(len(obs)):
        if i == best or obs[i] <= 0:
            continue
        r = float(np.hypot(*(pos[best] - pos[i])))
        if r > 0 and obs[i] < obs[best]:
            estimates.append(math.log(obs[best] / obs[i]) / r)
    if not estimates:
        return 0.3
    return float(min(max(np.median(estimates), 0.05), 2.0))


def _grid_seeds(
    pos: np.ndarray,
    obs: np.ndarray,
    margin: float,
    resolution: int = 16,
    n_seeds: int = 3,
) -> list[np.ndarray]:
    """Full-parameter seeds from a coarse position grid.

    For a fixed position the model is linear in (log E, beta):
    log E_i = log E - beta * r_i. Solving that weighted least-squares problem
    per grid point and scoring the true residual finds the global basin even
    when the source lies outside the sensor hull, where the sensor-position
    starts all fall into an interior local minimum. The basin can be much
    narrower than a grid cell, so the best few well-separated cells are all
    returned rather than the single winner.
    """
    xmin, ymin = pos.min(axis=0) - margin
    xmax, ymax = pos.max(axis=0) + margin
    gx = np.linspace(xmin, xmax, resolution)
    gy = np.linspace(ymin, ymax, resolution)
    log_obs = np.log(obs)
    w = obs / obs.sum()
    cell = max((xmax - xmin), (ymax - ymin)) / (resolution - 1)

    scored = []
    for x in gx:
        for y in gy:
            r = np.hypot(x - pos[:, 0], y - pos[:, 1])
            # weighted LS for log E_i = a - beta * r_i
            rm = float((w * r).sum())
            lm = float((w * log_obs).sum())
            var = float((w * (r - rm) ** 2).sum())
            if var <= 1e-12:
                continue
            beta = -float((w * (r - rm) * (log_obs - lm)).sum()) / var
            beta = min(max(beta, 1e-3), 3.0)
            a = lm + beta * rm
            res = math.exp(a) * np.exp(-beta * r) - obs
            scored.append((float(res @ res), x, y, a, math.log(beta)))

    seeds: list[np.ndarray] = []
    for _, x, y, a, log_beta in sorted(scored, key=lambda s: s[0]):
        if len(seeds) >= n_seeds:
            break
        if all(math.hypot(x - s[0], y - s[1]) >= 1.5 * cell for s in seeds):
            seeds.append(np.array([x, y, a, log_beta]))
    return seeds


def _check_geometry(pos: np.ndarray) -> None:
    centered = pos - pos.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[0] == 0 or svals[-1] < 1e-9 * svals[0]:
        raise DegenerateGeometryError(
            "sensor positions are collinear; the fit cannot resolve both coordinates"
        )


def _initial_states(pos: np.ndarray, obs: np.ndarray, config: FitConfig) -> list[np.ndarray]:
    """Multistart states: the energy-weighted centroid, the highest-energy
    sensor positions (up to multistart_count in total), plus the grid seeds."""
    centroid = pos.mean(axis=0)
    weighted = (obs[:, None] * pos).sum(axis=0) / obs.sum()
    e0 = float(obs.max())
    beta0 = _initial_attenuation(pos, obs)
    starts_xy = [weighted]
    for idx in np.argsort(-obs):
        # nudge off the exact sensor position, where the direction term degenerates
        p = pos[idx]
        starts_xy.append(p + 0.01 * (centroid - p) + 1e-2)
    starts_xy = starts_xy[: config.multistart_count]

    starts = [np.array([sx, sy, math.log(e0), math.log(beta0)]) for sx, sy in starts_xy]
    # extra data-driven seeds; sensor-anchored starts alone miss sources
    # outside the sensor hull
    starts.extend(_grid_seeds(pos, obs, config.zone_margin))
    return starts


def fit_source(
    energies: dict[str, float], sensors: SensorArray, config: FitConfig | None = None
) -> LocationEstimate:
    """Fit (x, y, E, beta) to observed per-sensor energies.

    Only sensors present in ``energies`` with a strictly positive value are
    used; at least four are required. The solver runs from several starting
    points (array centroid of the usable sensors, then the highest-energy
    sensor positions) and returns the lowest-residual result, tie-broken by
    iteration count and then start order. The returned position is clamped to
    the usable sensors' bounding box inflated by ``zone_margin``; a clamped
    fit is reported as non-converged because the free optimum lies outside.
    """
    config = config or FitConfig()
    usable = [(s, float(energies[s.id])) for s in sensors if energies.get(s.id, 0.0) > 0.0]
    if len(usable) < 4:
        raise InsufficientDataError(
            f"need at least 4 sensors with positive energy, have {len(usable)}"
        )
    pos = np.array([[s.x, s.y] for s, _ in usable])
    obs = np.array([e for _, e in usable])
    _check_geometry(pos)

    starts = _initial_states(pos, obs, config)
    results = [_run_start(pos, obs, start, config) for start in starts]

    # lowest residual wins; within float-level residual ties prefer converged
    # runs, then the fewest iterations, then start order
    floor = min(r.residual_norm for r in results)
    tie = floor * (1 + 1e-9) + 1e-300
    best_idx = min(
        range(len(results)),
        key=lambda i: (
            results[i].residual_norm > tie,
            not results[i].converged,
            results[i].residual_norm,
            results[i].iterations,
            i,
        ),
    )
    best = results[best_idx]

    x, y = float(best.theta[0]), float(best.theta[1])
    xmin, ymin, xmax, ymax = (
        pos[:, 0].min() - config.zone_margin,
        pos[:, 1].min() - config.zone_margin,
        pos[:, 0].max() + config.zone_margin,
        pos[:, 1].max() + config.zone_margin,
    )
    cx = min(max(x, xmin), xmax)
    cy = min(max(y, ymin), ymax)
    converged = best.converged
    residual_norm = best.residual_norm
    if (cx, cy) != (x, y):
        clamped = best.theta.copy()
        clamped[0], clamped[1] = cx, cy
        residual_norm = float(np.linalg.norm(_residual(clamped, pos, obs)))
        converged = False
        x, y = cx, cy

    return LocationEstimate(
        x=x,
        y=y,
        source_energy=math.exp(float(best.theta[2])),
        attenuation=math.exp(float(best.theta[3])),
        residual_norm=residual_norm,
        iterations=best.iterations,
        converged=converged,
    )


def localize_event(
    event: FootstepEvent,
    sensors: SensorArray,
    zone: str,
    config: FitConfig | None = None,
) -> LocationEstimate:
    """Localize one event against the non-noisy sensors of a zone.

    Energies are normalized by their maximum before fitting (position and
    attenuation are invariant to overall scale), then the fitted source energy
    and residual are scaled back. A fit whose residual exceeds
    ``plausibility_bound`` times the observed energy norm is flagged
    ``high_residual`` but never dropped.
    """
    config = config or FitConfig()
    zone_array = zone_sensors(sensors, zone)
    available = {
        s.id: float(event.per_sensor_energy[s.id])
        for s in zone_array
        if s.id in event.per_sensor_energy
    }
    peak = max(available.values(), default=0.0)
    if peak <= 0.0:
        raise InsufficientDataError("event carries no positive energy in this zone")
    normalized = {sid: e / peak for sid, e in available.items()}
    estimate = fit_source(normalized, zone_array, config)

    obs_norm = math.sqrt(sum(v * v for v in normalized.values() if v > 0))
    flagged = estimate.residual_norm > config.plausibility_bound * obs_norm
    return replace(
        estimate,
        source_energy=estimate.source_energy * peak,
        residual_norm=estimate.residual_norm * peak,
        high_residual=flagged,
    )


@dataclass(frozen=True)
class PathPoint:
    time: float
    estimate: LocationEstimate


@dataclass(frozen=True)
class PathEstimate:
    """A localized walk: one point per converged event, plus the RMSE against
    ground truth when the events carried their true locations."""

    points: tuple[PathPoint, ...]
    rmse: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        times = [p.time for p in self.points]
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidArgumentError("path point times must be nondecreasing")


def reconstruct_path(
    events: list[FootstepEvent],
    sensors: SensorArray,
    zone: str,
    config: FitConfig | None = None,
) -> PathEstimate:
    """Localize a time-sorted event sequence, dropping non-converged fits."""
    times = [e.time for e in events]
    if any(b < a for a, b in zip(times, times[1:])):
        raise InvalidArgumentError("events must be sorted by time")
    points = []
    errors = []
    for event in events:
        estimate = localize_event(event, sensors, zone, config)
        if not estimate.converged:
            continue
        points.append(PathPoint(event.time, estimate))
        if event.truth_location is not None:
            tx, ty = event.truth_location
            errors.append((estimate.x - tx) ** 2 + (estimate.y - ty) ** 2)
    rmse = math.sqrt(sum(errors) / len(errors)) if errors else None
    return PathEstimate(points=tuple(points), rmse=rmse)


@dataclass(frozen=True)
class SweepRow:
    window_s: float
    rmse: float | None
    n_events: int
    n_scored: int = 0  # converged fits that had ground truth to score against
    error: str | None = None


def rmse_vs_window_size(
    record: VibrationRecord,
    truth: GroundTruthPath | None,
    window_sizes: list[float],
    sensors: SensorArray,
    zone: str,
    config: FitConfig | None = None,
    detector: EventDetectorConfig | None = None,
    event_duration: float = 0.5,
) -> list[SweepRow]:
    """Run the full pipeline per window size and report the localization RMSE.

    Each row runs windowed_energy -> detect_events -> localize_event on its
    own window length; the RMSE compares converged fits against the truth
    path interpolated at the event times. Pipeline failures are recorded in
    the row, not raised, so one bad size cannot kill the sweep.
    """
    if any(w <= 0 for w in window_sizes):
        raise InvalidArgumentError("window sizes must be positive")
    if any(b <= a for a, b in zip(window_sizes, window_sizes[1:])):
        raise InvalidArgumentError("window sizes must be strictly ascending")

    rows = []
    for size in window_sizes:
        try:
            window_len = max(1, samples_for(size, record.sample_rate))
            series = windowed_energy(record, window_len)
            events = detect_events(series, detector)
            if not events:
                rows.append(SweepRow(window_s=size, rmse=None, n_events=0))
                continue
            errors = []
            for event in events:
                aggregated = event_energy(series, event.window_index, event_duration)
                enriched = FootstepEvent(
                    window_index=event.window_index,
                    time=event.time,
                    per_sensor_energy=aggregated.energies,
                )
                try:
                    estimate = localize_event(enriched, sensors, zone, config)
                except InsufficientDataError:
                    continue
                if not estimate.converged or truth is None:
                    continue
                tx, ty = truth.interpolate(event.time)
                errors.append((estimate.x - float(tx)) ** 2 + (estimate.y - float(ty)) ** 2)
            rmse = math.sqrt(sum(errors) / len(errors)) if errors else None
            rows.append(
                SweepRow(window_s=size, rmse=rmse, n_events=len(events), n_scored=len(errors))
            )
        except Exception as exc:  # recorded, not raised
            log.warning("window size %s failed: %s", size, exc)
            rows.append(SweepRow(window_s=size, rmse=None, n_events=0, error=str(exc)))
    return rows


def write_path_csv(path_estimate: PathEstimate, path) -> None:
    """Export ``t,x,y,E_s,beta,residual,converged`` one row per path point."""
    with open(path, "w", newline="") as fh:
        fh.write("t,x,y,E_s,beta,residual,converged\n")
        for p in path_estimate.points:
            est = p.estimate
            fh.write(
                ",".join(
                    [
                        "%.10g" % p.time,
                        "%.10g" % est.x,
                        "%.10g" % est.y,
                        "%.10g" % est.source_energy,
                        "%.10g" % est.attenuation,
                        "%.10g" % est.residual_norm,
                        "1" if est.converged else "0",
                    ]
                )
                + "\n"
            )


def write_localization_sweep_csv(rows: list[SweepRow], path) -> None:
    """Export ``window_s,rmse_m,n_events``; rmse is empty when unavailable."""
    with open(path, "w", newline="") as fh:
        fh.write("window_s,rmse_m,n_events\n")
        for row in rows:
            rmse = "" if row.rmse is None else "%.10g" % row.rmse
            fh.write("%.10g,%s,%d\n" % (row.window_s, rmse, row.n_events))
