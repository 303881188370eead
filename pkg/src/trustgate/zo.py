"""Gradient-free optimizers over black-box objectives.

Three estimators are provided. SPSA perturbs every coordinate at once with
a Rademacher draw and reads a full gradient estimate out of two objective
evaluations, which makes its cost independent of the problem dimension.
The two zeroth-order variants probe random Gaussian directions around the
current point: ZO-SGD steps along the averaged directional estimate,
ZO-sign along its elementwise sign.

`optimize` drives any of the three with a best-so-far rule: zeroth-order
objective readings fluctuate, so the best evaluated point is tracked and
returned instead of the final iterate. An optional fixed-point format
quantizes every evaluated point, every objective reading, and every
parameter update, emulating execution on saturating integer hardware.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .fixedpoint import FixedPointFormat, snap

_SEED_MASK = (1 << 64) - 1

Objective = Callable[[np.ndarray], float]


class ObjectiveEvaluationError(RuntimeError):
    """Objective raised or could not be evaluated; message carries the iteration."""


class NonFiniteObjectiveError(ObjectiveEvaluationError):
    """Objective returned nan or inf at a probe point."""


class ZoMethod(enum.Enum):
    SPSA = "spsa"
    ZO_SGD = "zo-sgd"
    ZO_SIGN = "zo-sign"


@dataclass(frozen=True)
class SpsaGains:
    """Gain sequences a_k = a/(A+k+1)^alpha and c_k = c/(k+1)^gamma."""

    a: float = 0.02
    A: float = 10.0
    alpha: float = 0.602
    c: float = 0.1
    gamma: float = 0.101

    def __post_init__(self):
        if min(self.a, self.A, self.alpha, self.c, self.gamma) < 0:
            raise ValueError("SPSA gains must be nonnegative")

    def a_k(self, k: int) -> float:
        return self.a / (self.A + k + 1) ** self.alpha

    def c_k(self, k: int) -> float:
        return self.c / (k + 1) ** self.gamma


@dataclass(frozen=True)
class ZoGains:
    """Smoothing radius, direction-sample count, and step size for ZO methods."""

    mu: float = 0.01
    q: int = 4
    step: float = 0.01

    def __post_init__(self):
        if self.mu < 0 or self.step < 0:
            raise ValueError("mu and step must be nonnegative")
        if self.q < 1:
            raise ValueError("q must be >= 1")


@dataclass(frozen=True)
class ZoConfig:
    method: ZoMethod = ZoMethod.SPSA
    iterations: int = 100
    spsa: SpsaGains = SpsaGains()
    zo: ZoGains = ZoGains()
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


class OptimizeResult(NamedTuple):
    theta_best: np.ndarray
    f_best: float
    trace: list[float]
    f_initial: float


def _iteration_rng(seed: int, k: int) -> np.random.Generator:
    # (seed, k) entropy pair: runs with larger budgets share the seed stream
    # prefix of shorter runs, so a longer run revisits the same iterates.
    return np.random.default_rng((seed & _SEED_MASK, k))


def _rademacher(rng: np.random.Generator, d: int) -> np.ndarray:
    return rng.integers(0, 2, size=d).astype(np.float64) * 2.0 - 1.0


def _unit_directions(rng: np.random.Generator, q: int, d: int) -> np.ndarray:
    u = rng.standard_normal((q, d))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return u / norms


def _checked(value, where: str) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteObjectiveError(f"non-finite objective value {value!r} at {where}")
    return value


def _call(f: Objective, point: np.ndarray, where: str) -> float:
    try:
        value = f(point)
    except ObjectiveEvaluationError:
        raise
    except Exception as exc:
        raise ObjectiveEvaluationError(f"objective evaluation failed at {where}: {exc}") from exc
    return _checked(value, where)


def spsa_gradient(f: Objective, theta, c_k: float, seed: int) -> np.ndarray:
    """Simultaneous-perturbation gradient estimate from exactly two evaluations.

    Draws a Rademacher direction from ``seed`` and returns
    [f(theta + c_k d) - f(theta - c_k d)] / (2 c_k d_i) per coordinate.
    """
    if c_k <= 0:
        raise ValueError("c_k must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    delta = _rademacher(np.random.default_rng(seed & _SEED_MASK), theta.size)
    f_plus = _call(f, theta + c_k * delta, "spsa probe +")
    f_minus = _call(f, theta - c_k * delta, "spsa probe -")
    # 1/delta_i == delta_i for Rademacher entries.
    return (f_plus - f_minus) / (2.0 * c_k) * delta


def zo_sgd_gradient(f: Objective, theta, mu: float, q: int, seed: int) -> np.ndarray:
    """Average of q two-point directional estimates along unit Gaussian directions.

    Uses 1 + q evaluations: the base point once, then one probe per direction.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if q < 1:
        raise ValueError("q must be >= 1")
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.size
    rng = np.random.default_rng(seed & _SEED_MASK)
    directions = _unit_directions(rng, q, d)
    f_base = _call(f, theta, "zo base point")
    grad = np.zeros(d)
    for j, u in enumerate(directions):
        f_probe = _call(f, theta + mu * u, f"zo probe {j}")
        grad += (f_probe - f_base) / mu * u
    return grad * (d / q)


def zo_sign_step(f: Objective, theta, mu: float, q: int, step: float, seed: int) -> np.ndarray:
    """One sign-descent step: theta - step * sign(zo_sgd_gradient), sign(0) = 0."""
    theta = np.asarray(theta, dtype=np.float64)
    return theta - step * np.sign(zo_sgd_gradient(f, theta, mu, q, seed))


def optimize(
    f: Objective,
    theta0,
    cfg: ZoConfig,
    fixed: FixedPointFormat | None = None,
) -> OptimizeResult:
    """Run the configured method for ``cfg.iterations`` iterations.

    Tracks the best point among everything actually evaluated (the start
    point plus each iteration's probe/base points), so ``f_best`` never
    exceeds the starting objective. ``trace[k]`` is the lowest objective
    reading of iteration k, hence f_best == min(f_initial, min(trace)).

    Degenerate zero gains are allowed and leave the start point untouched
    (a zero perturbation radius yields an exactly-zero difference, which is
    treated as a zero gradient estimate rather than 0/0).

    With ``fixed`` set, every evaluated point, objective reading, and
    parameter update is snapped to the format's grid first.

    Evaluation counts: SPSA uses 1 + 2T objective calls; ZO-SGD and
    ZO-sign use 1 + (1 + q)T.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    if fixed is not None:
        theta = snap(theta, fixed)

    def evaluate(point: np.ndarray, where: str) -> float:
        if fixed is not None:
            point = snap(point, fixed)
        value = _call(f, point, where)
        if fixed is not None:
            value = snap(value, fixed)
        return value

    d = theta.size
    f_initial = evaluate(theta, "initial evaluation")
    best_val = f_initial
    best_theta = theta.copy()
    trace: list[float] = []

    def consider(point: np.ndarray, value: float) -> None:
        nonlocal best_val, best_theta
        if value < best_val:
            best_val = value
            best_theta = point.copy()

    for k in range(cfg.iterations):
        rng = _iteration_rng(cfg.seed, k)
        if cfg.method is ZoMethod.SPSA:
            a_k, c_k = cfg.spsa.a_k(k), cfg.spsa.c_k(k)
            delta = _rademacher(rng, d)
            plus = theta + c_k * delta
            minus = theta - c_k * delta
            if fixed is not None:
                plus, minus = snap(plus, fixed), snap(minus, fixed)
            f_plus = evaluate(plus, f"iteration {k} probe +")
            f_minus = evaluate(minus, f"iteration {k} probe -")
            consider(plus, f_plus)
            consider(minus, f_minus)
            grad = (f_plus - f_minus) / (2.0 * c_k) * delta if c_k > 0 else np.zeros(d)
            theta = theta - a_k * grad
            trace.append(min(f_plus, f_minus))
        else:
            gains = cfg.zo
            f_base = evaluate(theta, f"iteration {k} base point")
            consider(theta, f_base)
            directions = _unit_directions(rng, gains.q, d)
            grad = np.zeros(d)
            lowest = f_base
            for j, u in enumerate(directions):
                probe = theta + gains.mu * u
                if fixed is not None:
                    probe = snap(probe, fixed)
                f_probe = evaluate(probe, f"iteration {k} probe {j}")
                consider(probe, f_probe)
                lowest = min(lowest, f_probe)
                if gains.mu > 0:
                    grad += (f_probe - f_base) / gains.mu * u
            grad *= d / gains.q
            if cfg.method is ZoMethod.ZO_SIGN:
                theta = theta - gains.step * np.sign(grad)
            else:
                theta = theta - gains.step * grad
            trace.append(lowest)
        if fixed is not None:
            theta = snap(theta, fixed)

    return OptimizeResult(best_theta, best_val, trace, f_initial)


def write_trace_csv(result: OptimizeResult, path) -> None:
    """Dump (iteration, objective, best_so_far) rows; iteration 0 is the start point."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "objective", "best_so_far"])
        best = result.f_initial
        writer.writerow([0, repr(result.f_initial), repr(best)])
        for k, value in enumerate(result.trace, start=1):
            best = min(best, value)
            writer.writerow([k, repr(value), repr(best)])


def read_trace_csv(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        next(reader)
        return [(int(row[0]), float(row[1]), float(row[2])) for row in reader]
