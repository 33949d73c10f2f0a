"""Finite-time certificates: sandwich bounds, drift/gain inequalities, the
rate transform theta, settling-time bounds, and the decay envelope.

A certificate packages a Lyapunov function V with a rate r and constants
(c1, c2, K) asserting, for the forced system xdot = f + g xi with
sup E|xi|^2 < K:

    alpha1(|x|) <= V(x) <= alpha2(|x|)
    gradV(x) . f(x,t) <= -c1 r(V(x)),   |gradV(x) . g(x,t)| <= c2 r(V(x))

with the standing constant condition c1 > 2 c2 sqrt(K).  The transform
theta(v) = integral_0^v dv'/r(v') is finite at finite v when 1/r is
integrable at 0; its inverse drives the finite-extinction envelope

    envelope(dt) = alpha1^-1( theta^-1( theta(alpha2(|x0|)) - (c1 - 2 c2 sqrt(K)) dt ) )

which reaches exactly 0 at dt = theta(alpha2(|x0|)) / (c1 - 2 c2 sqrt(K)),
and the expected-settling-time bound theta(V(x0)) / (c1 - 2 c2 sqrt(K)).

The default rate is the power family r(v) = v^gamma with 0 <= gamma < 1,
for which theta and its inverse are closed-form; a general rate evaluator is
admitted with quadrature fallbacks and a heuristic integrability check.
Class-K-infinity bounds are restricted to power laws a*s^b so the envelope
stays in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ConstantConditionError, RateIntegralError
from .systems import ConditionReport, SystemModel


@dataclass(frozen=True)
class PowerLaw:
    """s -> a * s^b on s >= 0; strictly increasing with closed-form inverse."""

    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("power law needs a > 0 and b > 0")

    def __call__(self, s):
        return self.a * np.asarray(s, dtype=float) ** self.b

    def inverse(self, y):
        return (np.asarray(y, dtype=float) / self.a) ** (1.0 / self.b)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b}


def _half_square_norm_v(x):
    return 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def _half_square_norm_grad(x):
    return np.asarray(x, dtype=float)


def _half_square_arctan_v(x):
    a = np.arctan(np.asarray(x, dtype=float)[..., 0])
    return 0.5 * a * a


def _half_square_arctan_grad(x):
    z = np.asarray(x, dtype=float)[..., 0]
    return (np.arctan(z) / (1.0 + z * z))[..., None]


LYAPUNOV_FUNCTIONS = {
    "half-square-norm": (_half_square_norm_v, _half_square_norm_grad),
    "half-square-arctan": (_half_square_arctan_v, _half_square_arctan_grad),
}


@dataclass(frozen=True)
class Certificate:
    """Lyapunov data (V, gradV, rate, constants, class-K-infinity bounds)."""

    state_dim: int
    V: Callable
    gradV: Callable
    c1: float
    c2: float
    noise_bound: float                  # the K of the mean-square bound
    alpha1: PowerLaw
    alpha2: PowerLaw
    gamma: Optional[float] = None       # power rate r(v) = v^gamma
    rate_fn: Optional[Callable] = None  # general rate, used when gamma is None
    rate_integrable: bool = False       # caller-asserted integrability of 1/r at 0
    lyapunov_name: str = ""

    def __post_init__(self):
        if (self.gamma is None) == (self.rate_fn is None):
            raise ValueError("specify exactly one of gamma or rate_fn")
        if self.gamma is not None and not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")
        if self.noise_bound < 0:
            raise ValueError("noise bound K must be nonnegative")
        if self.c1 <= 2.0 * self.c2 * math.sqrt(self.noise_bound):
            raise ConstantConditionError(
                f"constant condition violated: need c1 > 2 c2 sqrt(K), got "
                f"c1={self.c1:g}, 2 c2 sqrt(K)={2 * self.c2 * math.sqrt(self.noise_bound):g}")
        zero = np.zeros(self.state_dim)
        if abs(float(self.V(zero))) > 1e-12:
            raise ValueError("V(0) must vanish (within 1e-12)")
        if float(np.max(np.abs(self.gradV(zero)))) > 1e-12:
            raise ValueError("gradV(0) must vanish (within 1e-12)")
        s = np.logspace(-6, 3, 37)
        if np.any(self.alpha1(s) > self.alpha2(s) * (1.0 + 1e-12)):
            raise ValueError("alpha1 must not exceed alpha2")

    @property
    def decay_rate(self) -> float:
        """The positive envelope slope c1 - 2 c2 sqrt(K)."""
        return self.c1 - 2.0 * self.c2 * math.sqrt(self.noise_bound)

    def rate(self, v):
        if self.gamma is not None:
            return np.asarray(v, dtype=float) ** self.gamma
        return self.rate_fn(v)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "c1": self.c1, "c2": self.c2,
                "K": self.noise_bound, "alpha1": self.alpha1.to_dict(),
                "alpha2": self.alpha2.to_dict(), "V": self.lyapunov_name}


def certificate_from_dict(data: dict, state_dim: int) -> Certificate:
    """Build a certificate from its JSON form (V given by builtin name)."""
    name = data.get("V", "")
    if name not in LYAPUNOV_FUNCTIONS:
        raise ValueError(f"unknown Lyapunov function name: {name!r} "
                         f"(known: {sorted(LYAPUNOV_FUNCTIONS)})")
    v_fn, grad_fn = LYAPUNOV_FUNCTIONS[name]
    return Certificate(
        state_dim=state_dim, V=v_fn, gradV=grad_fn,
        c1=float(data["c1"]), c2=float(data["c2"]),
        noise_bound=float(data["K"]),
        alpha1=PowerLaw(**data["alpha1"]), alpha2=PowerLaw(**data["alpha2"]),
        gamma=float(data["gamma"]), lyapunov_name=name)


# ---------------------------------------------------------------------------
# The rate transform theta and its inverse
# ---------------------------------------------------------------------------

_QUAD_SEGMENT = 60.0
_QUAD_S_MAX = 700.0   # exp(-s) stays normal below this


def _theta_quadrature(rate_fn: Callable, v: float) -> float:
    """theta(v) for a general rate by quadrature in log coordinates.

    With u = exp(-s) the singular end u -> 0 maps to s -> infinity; segments
    of the transformed integral are accumulated until they stop contributing.
    Raises RateIntegralError when the refinement has not converged by
    u ~ 1e-300 (1/r not integrable at 0, or too slowly integrable to tell).
    """
    s0 = -math.log(v)

    def integrand(s):
        u = math.exp(-s)
        return u / rate_fn(u)

    total = 0.0
    s = s0
    while s < _QUAD_S_MAX:
        s_next = min(s + _QUAD_SEGMENT, _QUAD_S_MAX)
        seg, _ = quad(integrand, s, s_next, limit=200)
        total += seg
        if seg <= 1e-12 * max(1.0, abs(total)):
            return total
        s = s_next
    raise RateIntegralError(
        "integral of 1/r does not converge at 0 "
        f"(last refinement segment still contributed {seg:g}); the rate "
        "fails the integrability condition")


def theta(cert: Certificate, v: float) -> float:
    """theta(v) = integral_0^v dv'/r(v'); closed form for the power rate."""
    if v < 0:
        raise ValueError("v must be nonnegative")
    if v == 0.0:
        return 0.0
    if cert.gamma is not None:
        return v ** (1.0 - cert.gamma) / (1.0 - cert.gamma)
    return _theta_quadrature(cert.rate_fn, float(v))


def theta_inverse(cert: Certificate, y: float) -> float:
    """Inverse of theta; closed form for the power rate, bracketed root
    finding (relative tolerance ~1e-15) otherwise."""
    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0.0:
        return 0.0
    if cert.gamma is not None:
        return ((1.0 - cert.gamma) * y) ** (1.0 / (1.0 - cert.gamma))
    hi = 1.0
    for _ in range(200):
        if theta(cert, hi) >= y:
            break
        hi *= 2.0
        if hi > 1e12:
            raise ValueError(f"theta_inverse target {y:g} not bracketed below v=1e12")
    return float(brentq(lambda v: theta(cert, v) - y, 0.0, hi,
                        xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=200))


# ---------------------------------------------------------------------------
# Sampled verification
# ---------------------------------------------------------------------------

def _ball_samples(rng, dim: int, radius: float, count: int) -> np.ndarray:
    direction = rng.standard_normal((count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return direction * radii[:, None]


def _deterministic_extras(dim: int, radius: float) -> np.ndarray:
    """Axis and diagonal points at geometric radii (worst cases for the
    built-in examples sit on the axes) plus points at radius min(1, R)."""
    radii = [radius * 10.0 ** (-k) for k in range(5)] + [min(1.0, radius)]
    points = []
    for r in radii:
        for i in range(dim):
            e = np.zeros(dim)
            e[i] = r
            points.append(e.copy())
            points.append(-e)
        diag = np.full(dim, r / math.sqrt(dim))
        points.append(diag)
        points.append(-diag)
    return np.asarray(points)


@dataclass(frozen=True)
class SandwichReport:
    lower: ConditionReport   # V - alpha1(|x|) >= 0
    upper: ConditionReport   # alpha2(|x|) - V >= 0

    @property
    def passed(self) -> bool:
        return self.lower.passed and self.upper.passed


@dataclass(frozen=True)
class DriftReport:
    drift: ConditionReport   # -gradV.f - c1 r(V) >= 0
    gain: ConditionReport    # c2 r(V) - |gradV.g| >= 0

    @property
    def passed(self) -> bool:
        return self.drift.passed and self.gain.passed


def _report(samples, margins, tol: float) -> ConditionReport:
    worst = float(np.min(margins))
    bad = np.where(margins < -tol)[0]
    violations = tuple(tuple(samples[i]) for i in bad[:10])
    return ConditionReport(n_samples=len(samples), worst_margin=worst,
                           violations=violations, tolerance=tol)


def verify_sandwich(cert: Certificate, box_radius: float, n: int, tol: float,
                    seed: int) -> SandwichReport:
    """Sample the ball and check alpha1(|x|) <= V(x) <= alpha2(|x|)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = np.vstack([_ball_samples(rng, cert.state_dim, box_radius, n),
                   _deterministic_extras(cert.state_dim, box_radius)])
    norms = np.linalg.norm(x, axis=1)
    v = cert.V(x)
    return SandwichReport(lower=_report(x, v - cert.alpha1(norms), tol),
                          upper=_report(x, cert.alpha2(norms) - v, tol))


def verify_drift(cert: Certificate, model: SystemModel, box_radius: float,
                 n: int, t_grid, tol: float, seed: int) -> DriftReport:
    """Sample (x, t) and check the two rate inequalities of the certificate."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = np.vstack([_ball_samples(rng, cert.state_dim, box_radius, n),
                   _deterministic_extras(cert.state_dim, box_radius)])
    grad = cert.gradV(x)
    rv = cert.rate(cert.V(x))
    worst_d, worst_g = np.inf, np.inf
    viol_d, viol_g = [], []
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    for t in t_grid:
        lf = np.einsum("...i,...i->...", grad, model.f(x, t))
        lg = np.linalg.norm(np.einsum("...i,...il->...l", grad, model.g(x, t)), axis=-1)
        md = -lf - cert.c1 * rv
        mg = cert.c2 * rv - lg
        for margins, store in ((md, viol_d), (mg, viol_g)):
            bad = np.where(margins < -tol)[0]
            for idx in bad[:10 - len(store)]:
                store.append((tuple(x[idx]), float(t)))
        worst_d = min(worst_d, float(np.min(md)))
        worst_g = min(worst_g, float(np.min(mg)))
    n_total = len(x) * len(t_grid)
    return DriftReport(
        drift=ConditionReport(n_total, worst_d, tuple(viol_d), tol),
        gain=ConditionReport(n_total, worst_g, tuple(viol_g), tol))


# ---------------------------------------------------------------------------
# Settling bound and decay envelope
# ---------------------------------------------------------------------------

def settling_bound(cert: Certificate, v0: float) -> float:
    """Upper bound on the expected settling time from Lyapunov level v0:
    theta(v0) / (c1 - 2 c2 sqrt(K))."""
    if v0 < 0:
        raise ValueError("v0 must be nonnegative")
    return theta(cert, v0) / cert.decay_rate


@dataclass(frozen=True)
class Envelope:
    """Deterministic decay envelope for |x(t)| with finite extinction time."""

    cert: Certificate
    x0_norm: float
    theta0: float = field(init=False)
    t_ext: float = field(init=False)

    def __post_init__(self):
        th0 = theta(self.cert, float(self.cert.alpha2(self.x0_norm)))
        object.__setattr__(self, "theta0", th0)
        object.__setattr__(self, "t_ext", th0 / self.cert.decay_rate)

    def value(self, t_minus_t0: float) -> float:
        y = self.theta0 - self.cert.decay_rate * t_minus_t0
        if y <= 0.0:
            return 0.0
        return float(self.cert.alpha1.inverse(theta_inverse(self.cert, y)))


def decay_envelope(cert: Certificate, x0_norm: float, t_minus_t0: float) -> float:
    """Envelope alpha1^-1(theta^-1(theta(alpha2(|x0|)) - rate * dt)); exactly 0
    from the extinction time on, nonincreasing in dt."""
    if x0_norm < 0 or t_minus_t0 < 0:
        raise ValueError("arguments must be nonnegative")
    return Envelope(cert, x0_norm).value(t_minus_t0)


# ---------------------------------------------------------------------------
# Empirical constant fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    c1: float
    c2: float
    certifiable: bool
    n_samples: int


def fit_constants(model: SystemModel, V: Callable, gradV: Callable, gamma: float,
                  box_radius: float, n: int, t_grid, seed: int) -> FitResult:
    """Tightest empirical constants for the power-rate inequalities:

        c1 = inf over samples of -(gradV.f) / V^gamma
        c2 = sup over samples of |gradV.g| / V^gamma

    The origin is excluded (0/0); ``certifiable`` is False when c1 <= 0,
    i.e. the Lyapunov candidate fails on the sampled set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    dim = model.n
    x = np.vstack([_ball_samples(rng, dim, box_radius, n),
                   _deterministic_extras(dim, box_radius)])
    x = x[np.linalg.norm(x, axis=1) > 1e-12]
    grad = gradV(x)
    vpow = np.asarray(V(x)) ** gamma
    c1_fit, c2_fit = np.inf, 0.0
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    for t in t_grid:
        lf = np.einsum("...i,...i->...", grad, model.f(x, t))
        lg = np.linalg.norm(np.einsum("...i,...il->...l", grad, model.g(x, t)), axis=-1)
        c1_fit = min(c1_fit, float(np.min(-lf / vpow)))
        c2_fit = max(c2_fit, float(np.max(lg / vpow)))
    return FitResult(c1=c1_fit, c2=c2_fit, certifiable=bool(c1_fit > 0),
                     n_samples=len(x) * len(t_grid))
