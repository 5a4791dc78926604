"""Gesture model equations, closed-form solution, and simulators.

The core model drives a constriction variable x toward a spatial target
with acceleration ``rapidity * v - v**2 / (target - x)``. It follows
from two assumptions: velocity is proportional to remaining distance
(point attractor), and the distance-to-velocity ratio decays
exponentially at rate ``rapidity``.

Also provided: the classical damped mass-spring baseline, the paper
trail of every simulated trajectory (unit-step scheme vs. a
high-accuracy Runge-Kutta reference), and a residual diagnostic that
checks whether a trajectory's distance/velocity ratio actually decays
exponentially.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal import SampledSeries, Trajectory

__all__ = [
    "GestureParams",
    "MsdParams",
    "SimulationError",
    "model_accel",
    "attractor_velocity",
    "msd_accel",
    "closed_form_state",
    "closed_form_trajectory",
    "simulate_euler",
    "simulate_rk4",
    "lambda_decay_residual",
    "rapidity_per_second",
]

# Guard radius around the target where the model acceleration blows up.
EPS_TARGET = 1e-9

DEFAULT_MAX_STEPS = 10_000

# Divergence guard for the unit-step scheme: the continuous model never
# grows past its initial distance scale, so anything this large is a
# numerical blow-up.
_DIVERGENCE_LIMIT = 1e9


class SimulationError(RuntimeError):
    """A simulation left the model's valid regime (singularity, target
    crossing, divergence, or step-cap overflow)."""


@dataclass(frozen=True)
class GestureParams:
    """Control parameters of the nonlinear gesture model.

    ``target`` is the spatial attractor in mm; ``rapidity`` is the decay
    rate of the distance/velocity ratio, in 1/sample at the token's
    sampling rate.
    """

    target: float
    rapidity: float

    def __post_init__(self):
        if not (self.rapidity > 0):
            raise ValueError(f"rapidity must be > 0, got {self.rapidity}")
        if not (math.isfinite(self.target) and math.isfinite(self.rapidity)):
            raise ValueError("parameters must be finite")


@dataclass(frozen=True)
class MsdParams:
    """Damped mass-spring baseline parameters (mass fixed at 1).

    ``stiffness`` in 1/sample^2, ``damping`` in 1/sample, ``target`` in mm.
    """

    stiffness: float
    damping: float
    target: float
    mass: float = 1.0

    def __post_init__(self):
        if not (self.stiffness > 0):
            raise ValueError(f"stiffness must be > 0, got {self.stiffness}")
        if self.damping < 0:
            raise ValueError(f"damping must be >= 0, got {self.damping}")
        if self.mass != 1.0:
            raise ValueError("mass is fixed at 1")


def rapidity_per_second(rapidity_per_sample: float, fs: float) -> float:
    """Convert a per-sample rapidity to 1/s for sampling rate ``fs``."""
    return rapidity_per_sample * fs


def model_accel(x, v, params: GestureParams):
    """Model acceleration ``rapidity * v - v**2 / (target - x)``.

    Accepts scalars or arrays. Raises :class:`SimulationError` when the
    state is within ``EPS_TARGET`` of the target, where the expression
    is singular.
    """
    gap = params.target - np.asarray(x, dtype=float)
    if np.any(np.abs(gap) <= EPS_TARGET):
        raise SimulationError(
            f"state within {EPS_TARGET} mm of target {params.target}; "
            "acceleration is singular there"
        )
    v = np.asarray(v, dtype=float)
    out = params.rapidity * v - v * v / gap
    return float(out) if out.ndim == 0 else out


def attractor_velocity(x, lam, target: float):
    """Point-attractor velocity ``(target - x) / lam`` for ratio ``lam > 0``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("distance/velocity ratio must be strictly positive")
    out = (target - np.asarray(x, dtype=float)) / lam
    return float(out) if out.ndim == 0 else out


def msd_accel(x, v, params: MsdParams):
    """Damped mass-spring acceleration ``(k*(target - x) - b*v) / m`` with m = 1."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    out = params.stiffness * (params.target - x) - params.damping * v
    return float(out) if out.ndim == 0 else out


def _initial_ratio(x0: float, v0: float, params: GestureParams) -> float:
    if v0 == 0:
        raise ValueError("initial velocity must be nonzero")
    lam0 = (params.target - x0) / v0
    if not (lam0 > 0):
        raise ValueError(
            f"initial distance/velocity ratio must be positive, got {lam0}; "
            "the movement must start toward the target"
        )
    return lam0


def closed_form_state(
    n: int,
    x0: float,
    v0: float,
    params: GestureParams,
    step_samples: float = 1.0,
    fs: float = 100.0,
) -> SampledSeries:
    """Analytic state trajectory of the gesture model.

    Evaluates ``x(t) = target - (target - x0) * exp((1 - exp(r*t)) / (r*lam0))``
    at ``t = i * step_samples`` for ``i = 0..n-1``, where ``lam0`` is the
    initial distance/velocity ratio ``(target - x0) / v0``. Cross-checked
    against the Runge-Kutta integrator in the test suite before use as
    an oracle.
    """
    lam0 = _initial_ratio(x0, v0, params)
    r = params.rapidity
    t = np.arange(n, dtype=float) * step_samples
    x = params.target - (params.target - x0) * np.exp((1.0 - np.exp(r * t)) / (r * lam0))
    return SampledSeries(x, step_samples / fs, unit="mm")


def closed_form_trajectory(
    n: int,
    x0: float,
    v0: float,
    params: GestureParams,
    step_samples: float = 1.0,
    fs: float = 100.0,
) -> Trajectory:
    """Analytic trajectory with exact velocity and acceleration.

    Velocity follows from the point-attractor relation with the
    exponentially decaying ratio; acceleration is the model's own
    expression evaluated on the analytic state and velocity.
    """
    state = closed_form_state(n, x0, v0, params, step_samples, fs)
    lam0 = _initial_ratio(x0, v0, params)
    r = params.rapidity
    t = np.arange(n, dtype=float) * step_samples
    lam = lam0 * np.exp(-r * t)
    v = (params.target - state.values) / lam
    a = model_accel(state.values, v, params)
    dt = step_samples / fs
    return Trajectory(
        state,
        SampledSeries(v, dt, unit="mm/sample"),
        SampledSeries(a, dt, unit="mm/sample^2"),
        step_samples=step_samples,
        provenance="closed_form",
    )


def _check_start(x0: float, v0: float, stop_speed: float, params: GestureParams):
    if not (stop_speed > 0):
        raise ValueError(f"stop_speed must be > 0, got {stop_speed}")
    if abs(v0) < stop_speed:
        raise ValueError(
            f"|v0| = {abs(v0)} already below stop_speed {stop_speed}"
        )
    if abs(params.target - x0) <= EPS_TARGET:
        raise SimulationError("initial state coincides with the target")


def simulate_euler(
    x0: float,
    v0: float,
    params: GestureParams,
    stop_speed: float,
    max_steps: int = DEFAULT_MAX_STEPS,
    fs: float = 100.0,
) -> Trajectory:
    """Per-sample unit-step simulation of the gesture model.

    At each sample: acceleration from the model, then
    ``v[n+1] = v[n] + a[n]`` and ``x[n+1] = x[n] + v[n+1]``. Samples are
    kept while ``|v| >= stop_speed``. This is the first-order scheme
    used for simulate-and-compare scoring; use :func:`simulate_rk4` when
    integrator accuracy matters.

    Raises
    ------
    SimulationError
        If the state crosses the target, the velocity diverges, or the
        step cap is exceeded before the stopping speed is reached.
    """
    _check_start(x0, v0, stop_speed, params)
    gap_sign = 1.0 if params.target > x0 else -1.0
    r, target = params.rapidity, params.target

    xs, vs, accs = [], [], []
    x, v = float(x0), float(v0)
    for _ in range(max_steps):
        gap = target - x
        if abs(gap) <= EPS_TARGET:
            raise SimulationError("state reached the target singularity")
        a = r * v - v * v / gap
        xs.append(x)
        vs.append(v)
        accs.append(a)
        v = v + a
        x = x + v
        if (target - x) * gap_sign < 0:
            raise SimulationError("state crossed the target")
        if abs(v) > _DIVERGENCE_LIMIT:
            raise SimulationError("velocity diverged")
        if abs(v) < stop_speed:
            break
    else:
        raise SimulationError(f"step cap {max_steps} exceeded")

    dt = 1.0 / fs
    return Trajectory(
        SampledSeries(xs, dt, unit="mm"),
        SampledSeries(vs, dt, unit="mm/sample"),
        SampledSeries(accs, dt, unit="mm/sample^2"),
        provenance="euler",
    )


def simulate_rk4(
    x0: float,
    v0: float,
    params: GestureParams,
    dt: float = 0.001,
    stop_speed: float = 1e-3,
    max_steps: int = 20_000_000,
    fs: float = 100.0,
    on_grid: bool = True,
    accel=None,
) -> Trajectory:
    """Classical 4th-order Runge-Kutta integration of the model.

    ``dt`` is the integration step as a fraction of one sample; it is
    snapped so that a whole number of steps spans each sample. With
    ``on_grid=True`` (default) the result is decimated to the integer
    sample grid; otherwise the full fine-step trajectory is returned
    with ``step_samples`` set accordingly. Velocities stay in mm/sample
    either way.

    ``accel`` may override the acceleration field (signature
    ``accel(x, v)``), e.g. to integrate the mass-spring baseline with
    the same machinery; by default the gesture model is used.

    Raises
    ------
    SimulationError
        On target crossing or step-cap overflow.
    """
    if not (dt > 0):
        raise ValueError(f"dt must be > 0, got {dt}")
    steps_per_sample = max(int(round(1.0 / dt)), 1)
    h = 1.0 / steps_per_sample

    if accel is None:
        _check_start(x0, v0, stop_speed, params)
        r, target = params.rapidity, params.target
        eps = EPS_TARGET

        def accel(x, v, _r=r, _t=target, _e=eps):
            gap = _t - x
            if abs(gap) <= _e:
                raise SimulationError("state reached the target singularity")
            return _r * v - v * v / gap

        check_crossing = True
    else:
        if not (stop_speed > 0) or abs(v0) < stop_speed:
            raise ValueError("need |v0| >= stop_speed > 0")
        check_crossing = False

    gap_sign = 1.0 if params.target > x0 else -1.0
    target = params.target

    xs, vs, accs = [float(x0)], [float(v0)], [accel(x0, v0)]
    x, v = float(x0), float(v0)
    half = h / 2.0
    sixth = h / 6.0
    for _ in range(max_steps):
        a1 = accel(x, v)
        x2, v2 = x + half * v, v + half * a1
        a2 = accel(x2, v2)
        x3, v3 = x + half * v2, v + half * a2
        a3 = accel(x3, v3)
        x4, v4 = x + h * v3, v + h * a3
        a4 = accel(x4, v4)
        x = x + sixth * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if check_crossing and (target - x) * gap_sign < 0:
            raise SimulationError("state crossed the target")
        if abs(v) < stop_speed:
            break
        xs.append(x)
        vs.append(v)
        accs.append(accel(x, v))
    else:
        raise SimulationError(f"step cap {max_steps} exceeded")

    x_arr = np.array(xs)
    v_arr = np.array(vs)
    a_arr = np.array(accs)
    if on_grid:
        x_arr = x_arr[::steps_per_sample]
        v_arr = v_arr[::steps_per_sample]
        a_arr = a_arr[::steps_per_sample]
        step, series_dt = 1.0, 1.0 / fs
    else:
        step, series_dt = h, h / fs
    return Trajectory(
        SampledSeries(x_arr, series_dt, unit="mm"),
        SampledSeries(v_arr, series_dt, unit="mm/sample"),
        SampledSeries(a_arr, series_dt, unit="mm/sample^2"),
        step_samples=step,
        provenance="rk4",
    )


def lambda_decay_residual(traj: Trajectory, params: GestureParams) -> float:
    """Maximum mismatch of the exponential-decay identity along a trajectory.

    Computes the distance/velocity ratio ``lam = (target - x) / v`` on
    the trajectory, differentiates it by central differences on interior
    points, and returns ``max |d(lam)/dt + rapidity * lam|``. Exact
    model trajectories satisfy the identity up to second-order
    discretization error; unrelated trajectories produce large
    residuals.

    Raises
    ------
    ValueError
        If any velocity sample is zero.
    """
    x = traj.state.values
    v = traj.velocity.values
    if x.size < 3:
        raise ValueError("need at least 3 samples to differentiate the ratio")
    if np.any(v == 0):
        raise ValueError("zero velocity sample: ratio undefined")
    lam = (params.target - x) / v
    dlam = (lam[2:] - lam[:-2]) / (2.0 * traj.step_samples)
    return float(np.max(np.abs(dlam + params.rapidity * lam[1:-1])))
