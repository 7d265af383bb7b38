"""
Scaled conjugate gradient minimization.

Conjugate directions with a scaled Hessian-vector estimate taken by finite
differencing the gradient along the search direction. The scale lambda acts
like a trust region: the comparison ratio between the actual and the
predicted decrease halves it above ``shrink_above`` and quadruples it below
``grow_below``; steps that do not lower the objective are rejected.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, InputError

__all__ = [
    "HistoryEntry",
    "ScgConfig",
    "ScgResult",
    "ScgState",
    "scg_minimize",
]

logger = logging.getLogger("larp.scg")
history_logger = logging.getLogger("larp.training.history")

REASON_MAX_ITERS = "max_iters"
REASON_GRADIENT_TOL = "gradient_tol"
REASON_STALLED = "stalled"


@dataclass(frozen=True, slots=True)
class ScgConfig:
    max_iters: int = 200
    initial_lambda: float = 1e-6
    lambda_max: float = 1e20
    lambda_min: float = 1e-15
    tol: float = 1e-5
    sigma0: float = 1e-4
    shrink_above: float = 0.75
    grow_below: float = 0.25
    # Accepted steps between restarts to steepest descent; None = parameter count.
    restart_interval: int | None = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be non-negative, got {self.max_iters}")
        if not 0 <= self.lambda_min <= self.initial_lambda <= self.lambda_max:
            raise ConfigError("lambda bounds must satisfy 0 <= lambda_min <= initial_lambda <= lambda_max")
        if self.tol < 0 or self.sigma0 <= 0:
            raise ConfigError("tol must be non-negative and sigma0 positive")
        if not 0 < self.grow_below <= self.shrink_above < 1:
            raise ConfigError("ratio thresholds must satisfy 0 < grow_below <= shrink_above < 1")
        if self.restart_interval is not None and self.restart_interval < 1:
            raise ConfigError(f"restart_interval must be positive, got {self.restart_interval}")


@dataclass(slots=True)
class ScgState:
    params: np.ndarray
    direction: np.ndarray
    lam: float
    success: bool = True
    ratio: float = 0.0
    iteration: int = 0


@dataclass(frozen=True, slots=True)
class HistoryEntry:
    iteration: int
    loss: float
    grad_norm: float
    accepted: bool


@dataclass(frozen=True)
class ScgResult:
    params: np.ndarray
    loss: float
    history: list[HistoryEntry] = field(default_factory=list)
    iterations: int = 0
    reason: str = REASON_MAX_ITERS


def _record(history, iteration, loss, grad_norm, accepted):
    history.append(HistoryEntry(iteration, loss, grad_norm, accepted))
    history_logger.info("%d\t%.17g\t%.17g", iteration, loss, grad_norm)


def scg_minimize(fun, grad, x0, config=None):
    """
    Minimize ``fun`` from ``x0`` given its gradient ``grad``.

    ``history`` holds one entry per iteration (plus the starting point) with
    the loss at the current parameters, so its losses never increase.
    """
    config = config or ScgConfig()
    x = np.array(x0, dtype=np.float64)
    restart = config.restart_interval or x.size
    f_old = float(fun(x))
    if not math.isfinite(f_old):
        raise InputError(f"objective is not finite at the starting point ({f_old!r})")
    g_new = np.asarray(grad(x), dtype=np.float64)
    g_old = g_new
    state = ScgState(params=x, direction=-g_new, lam=config.initial_lambda)
    history = []
    _record(history, 0, f_old, float(np.linalg.norm(g_new)), True)

    reason = REASON_MAX_ITERS
    successes = 0
    mu = kappa = theta = 0.0
    if np.linalg.norm(g_new) < config.tol:
        reason = REASON_GRADIENT_TOL
    else:
        for iteration in range(1, config.max_iters + 1):
            state.iteration = iteration
            direction = state.direction
            if state.success:
                mu = float(direction @ g_new)
                if mu >= 0:
                    direction = -g_new
                    mu = float(direction @ g_new)
                kappa = float(direction @ direction)
                if kappa == 0.0:
                    reason = REASON_GRADIENT_TOL
                    break
                sigma = config.sigma0 / math.sqrt(kappa)
                g_plus = np.asarray(grad(state.params + sigma * direction), dtype=np.float64)
                theta = float(direction @ (g_plus - g_new)) / sigma

            # Scale the curvature estimate; force it positive if needed.
            delta = theta + state.lam * kappa
            if delta <= 0:
                delta = state.lam * kappa
                state.lam -= theta / kappa
            alpha = -mu / delta
            x_new = state.params + alpha * direction
            f_new = float(fun(x_new))
            ratio = 2.0 * (f_new - f_old) / (alpha * mu) if math.isfinite(f_new) else -math.inf
            state.ratio = ratio
            state.success = ratio > 0
            state.direction = direction

            if state.success:
                successes += 1
                state.params = x_new
                f_old = f_new
                g_old = g_new
                g_new = np.asarray(grad(x_new), dtype=np.float64)
            grad_norm = float(np.linalg.norm(g_new))
            _record(history, iteration, f_old, grad_norm, state.success)

            if state.success and grad_norm < config.tol:
                reason = REASON_GRADIENT_TOL
                break
            if ratio < config.grow_below:
                state.lam *= 4.0
                if state.lam > config.lambda_max:
                    logger.info("lambda exceeded %g at iteration %d; stopping", config.lambda_max, iteration)
                    reason = REASON_STALLED
                    break
            elif ratio > config.shrink_above:
                state.lam = max(0.5 * state.lam, config.lambda_min)

            if successes == restart:
                state.direction = -g_new
                successes = 0
            elif state.success:
                gamma = float((g_old - g_new) @ g_new) / mu
                state.direction = gamma * direction - g_new

    logger.info("scg finished after %d iterations (%s), loss %.6g", state.iteration, reason, f_old)
    return ScgResult(
        params=state.params,
        loss=f_old,
        history=history,
        iterations=state.iteration,
        reason=reason,
    )
