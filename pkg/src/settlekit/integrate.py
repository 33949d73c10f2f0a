"""Pathwise fixed-step RK4 integration with settling detection.

The realized disturbance is piecewise constant (zero-order hold on the noise
grid), so one integration step never straddles a noise jump: the step size h
must divide the noise grid step, and the held value for a step is the one in
force at the step's start.  Within each step the vector field is smooth and
classical RK4 applies at full order.

Near the origin the cube-root gains make explicit schemes chatter with
amplitude about (h/2)^(3/2); once the state enters the absorption ball it is
clamped to exactly 0 and stays there (valid because drift and gain vanish at
the origin).  The config validator keeps the absorption radius above the
chatter floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from . import defaults
from .errors import EvaluatorError
from .fileio import write_csv, write_json
from .noise import NoisePath
from .systems import ConditionReport, SystemModel


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = defaults.STEP
    horizon: float = 10.0
    eps_settle: float = defaults.EPS_SETTLE
    eps_absorb: Optional[float] = None   # None -> max(1e-6, (h/2)^(3/2))
    absorb_at_origin: bool = True

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step h must be positive")
        if self.eps_settle <= 0:
            raise ValueError("eps_settle must be positive")
        floor = chatter_floor(self.h)
        if self.eps_absorb is None:
            object.__setattr__(self, "eps_absorb", floor)
        elif self.eps_absorb < floor:
            raise ValueError(
                f"eps_absorb={self.eps_absorb:g} sits below the chatter floor "
                f"{floor:g} for h={self.h:g}; absorption would never trigger")
        if self.eps_absorb >= self.eps_settle:
            raise ValueError("eps_absorb must be smaller than eps_settle")


def chatter_floor(h: float) -> float:
    """Smallest safe absorption radius for cube-root drifts at step h."""
    return max(defaults.EPS_ABSORB_MIN, (0.5 * h) ** 1.5)


@dataclass(frozen=True)
class Trajectory:
    """One integrated sample path with settling metadata."""

    t0: float
    h: float
    states: np.ndarray            # (n_points, n)
    seed: int
    settled: bool
    settle_time: Optional[float]
    blowup: bool = False
    blowup_time: Optional[float] = None
    absorb_index: Optional[int] = None
    eps_settle: float = defaults.EPS_SETTLE

    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.states.shape[0])

    @property
    def n(self) -> int:
        return self.states.shape[1]


def rk4_step(model: SystemModel, x: np.ndarray, t: float, h: float,
             xi: np.ndarray) -> np.ndarray:
    """One classical RK4 step with the noise value held across the step.

    Broadcasts over leading batch axes of x / xi.
    """
    k1 = model.field(x, t, xi)
    k2 = model.field(x + (0.5 * h) * k1, t + 0.5 * h, xi)
    k3 = model.field(x + (0.5 * h) * k2, t + 0.5 * h, xi)
    k4 = model.field(x + h * k3, t + h, xi)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def steps_per_cell(h: float, h_noise: float) -> int:
    """Integer ratio h_noise / h; raises if h does not divide h_noise."""
    m = h_noise / h
    m_int = int(round(m))
    if m_int < 1 or abs(m - m_int) > 1e-9 * max(1.0, m):
        raise ValueError(
            f"integrator step h={h:g} must be an integer divisor of the "
            f"noise grid step h_noise={h_noise:g}")
    return m_int


def integrate_path(model: SystemModel, path: NoisePath, x0,
                   cfg: IntegratorConfig) -> Trajectory:
    """Integrate xdot = f + g xi along one realized noise path.

    The state is clamped to exactly 0 once it enters the absorption ball
    (and then stays 0); integration stops with a blow-up marker if any
    component exceeds the blow-up threshold.  NaN from an evaluator at a
    finite state raises EvaluatorError.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({model.n},)")
    if path.dimension != model.l:
        raise ValueError(f"noise dimension {path.dimension} != model l={model.l}")
    m = steps_per_cell(cfg.h, path.h)
    t0 = path.t0
    span = cfg.horizon - t0
    if span <= 0:
        raise ValueError("horizon must exceed the path start time")
    n_steps = int(round(span / cfg.h))
    if abs(n_steps * cfg.h - span) > 1e-9 * max(1.0, abs(cfg.horizon)):
        raise ValueError("horizon - t0 must be an integer multiple of h")
    if path.t_end < cfg.horizon - 1e-9:
        raise ValueError("noise path does not cover the horizon")

    states = np.empty((n_steps + 1, model.n))
    x = x0.copy()
    absorbed = False
    absorb_index = None
    if cfg.absorb_at_origin and float(np.linalg.norm(x)) <= cfg.eps_absorb:
        x = np.zeros(model.n)
        absorbed = True
        absorb_index = 0
    states[0] = x

    blowup = False
    blowup_time = None
    last = n_steps
    for j in range(n_steps):
        if absorbed:
            states[j + 1] = 0.0
            continue
        t = t0 + j * cfg.h
        xi = path.values[j // m]
        x_next = rk4_step(model, x, t, cfg.h, xi)
        if not np.all(np.isfinite(x_next)):
            if np.any(np.isnan(x_next)) and not np.any(np.isinf(x_next)):
                raise EvaluatorError(
                    f"evaluator returned NaN at t={t + cfg.h:g}", x=x.copy(), t=t)
            blowup = True
            blowup_time = t + cfg.h
            last = j
            break
        if np.max(np.abs(x_next)) > defaults.BLOWUP_THRESHOLD:
            blowup = True
            blowup_time = t + cfg.h
            last = j
            break
        if cfg.absorb_at_origin and float(np.linalg.norm(x_next)) <= cfg.eps_absorb:
            x_next = np.zeros(model.n)
            absorbed = True
            absorb_index = j + 1
        x = x_next
        states[j + 1] = x

    states = states[:last + 1]
    traj = Trajectory(t0=t0, h=cfg.h, states=states, seed=path.seed,
                      settled=False, settle_time=None, blowup=blowup,
                      blowup_time=blowup_time, absorb_index=absorb_index,
                      eps_settle=cfg.eps_settle)
    if not blowup:
        st = detect_settling(traj, cfg.eps_settle)
        traj = replace(traj, settled=st is not None, settle_time=st)
    return traj


def detect_settling(traj: Trajectory, eps_settle: float) -> Optional[float]:
    """Earliest grid time from which the state stays inside the settling ball.

    Returns None (censored) if the final state is still outside.
    """
    if traj.blowup:
        raise ValueError("cannot detect settling on a blown-up trajectory")
    if eps_settle <= 0:
        raise ValueError("eps_settle must be positive")
    norms = np.linalg.norm(traj.states, axis=1)
    outside = norms > eps_settle
    if not outside.any():
        return float(traj.t0)
    last_out = int(np.nonzero(outside)[0][-1])
    if last_out == len(norms) - 1:
        return None
    return float(traj.t0 + (last_out + 1) * traj.h)


def _cumulative_simpson_uniform(y: np.ndarray, h: float) -> np.ndarray:
    """Cumulative Simpson on a uniform grid; trapezoid for 2-point segments."""
    if y.shape[0] == 1:
        return np.zeros_like(y)
    if y.shape[0] == 2:
        out = np.zeros_like(y)
        out[1] = 0.5 * h * (y[0] + y[1])
        return out
    return cumulative_simpson(y, dx=h, axis=0, initial=0.0)


def check_integral_form(traj: Trajectory, model: SystemModel, path: NoisePath,
                        tol: float) -> ConditionReport:
    """Reconstruct x(t) = x(t0) + int f + int g xi from the stored states and
    compare at every grid point (up to absorption, which intentionally clamps
    the state off the integral identity).

    The drift integral uses cumulative Simpson across the whole grid; the
    noise integral factors the held value out of each noise cell and applies
    Simpson to the smooth gain factor inside the cell.  Pass iff the largest
    residual is at most tol * (1 + max |x|).
    """
    if traj.blowup:
        raise ValueError("cannot check a blown-up trajectory")
    n_cmp = traj.states.shape[0] if traj.absorb_index is None \
        else max(traj.absorb_index, 1)
    states = traj.states[:n_cmp]
    times = traj.times()[:n_cmp]
    m = steps_per_cell(traj.h, path.h)

    f_vals = np.asarray(model.f(states, times[:, None]))
    drift_part = _cumulative_simpson_uniform(f_vals, traj.h)

    g_vals = np.asarray(model.g(states, times[:, None]))
    noise_part = np.zeros_like(states)
    acc = np.zeros(model.n)
    n_nodes = n_cmp
    n_cells = (n_nodes - 2) // m + 1 if n_nodes > 1 else 0
    for c in range(n_cells):
        lo = c * m
        hi = min(lo + m, n_nodes - 1)
        seg = g_vals[lo:hi + 1].reshape(hi - lo + 1, model.n * model.l)
        iseg = _cumulative_simpson_uniform(seg, traj.h)
        iseg = iseg.reshape(hi - lo + 1, model.n, model.l)
        contrib = np.einsum("kij,j->ki", iseg, path.values[c])
        noise_part[lo:hi + 1] = acc + contrib
        acc = acc + contrib[-1]

    residual = states - (states[0] + drift_part + noise_part)
    max_resid = float(np.max(np.abs(residual))) if n_cmp > 0 else 0.0
    scale = 1.0 + float(np.max(np.abs(states))) if n_cmp > 0 else 1.0
    worst_idx = int(np.argmax(np.max(np.abs(residual), axis=1))) if n_cmp > 0 else 0
    margin = tol * scale - max_resid
    return ConditionReport(n_samples=n_cmp, worst_margin=margin,
                           violations=((float(times[worst_idx]), max_resid),),
                           tolerance=0.0)


def uniqueness_probe(model: SystemModel, path: NoisePath, x0, delta0: float,
                     cfg: IntegratorConfig) -> float:
    """Max divergence between trajectories from x0 and x0 + delta0*e1 on the
    same noise path (0 exactly when delta0 = 0, by determinism)."""
    if delta0 < 0:
        raise ValueError("delta0 must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    xb = x0.copy()
    xb[0] += delta0
    ta = integrate_path(model, path, x0, cfg)
    tb = integrate_path(model, path, xb, cfg)
    n = min(ta.states.shape[0], tb.states.shape[0])
    gap = np.linalg.norm(ta.states[:n] - tb.states[:n], axis=1)
    return float(np.max(gap))


def trajectory_to_csv(traj: Trajectory, csv_path, sidecar_path=None) -> None:
    """Write t,x_1,...,x_n CSV plus a JSON sidecar with settling metadata."""
    header = ["t"] + [f"x_{i + 1}" for i in range(traj.n)]
    columns = [traj.times()] + [traj.states[:, i] for i in range(traj.n)]
    write_csv(csv_path, header, columns)
    if sidecar_path is not None:
        write_json(sidecar_path, {
            "settled": traj.settled,
            "settle_time": traj.settle_time,
            "seed": traj.seed,
            "blowup": traj.blowup,
            "blowup_time": traj.blowup_time,
        })
