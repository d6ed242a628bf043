"""Gradient descent with step-size backoff and multi-restart selection.

The protocol: a fixed step budget, uniform random initialization over
[0, 2pi], and, whenever a proposed step increases the cost, shrinking the
step size and repeating the step (the retry consumes budget).  The best of
several independently seeded restarts is kept.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int = 1000
    step_size: float = 0.05
    backoff: float = 0.7
    backoff_enabled: bool = True
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one step")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if not 0.0 < self.backoff < 1.0:
            raise ValueError("backoff factor must lie in (0, 1)")
        if self.restarts < 1:
            raise ValueError("need at least one restart")


@dataclass(eq=False)
class OptTrace:
    """Per-step record of one descent run.

    ``costs[0]`` is the initial cost; ``costs[k]`` the (accepted or retained)
    cost after step k.  ``accepted[k]`` marks whether step k+1 moved.
    """

    costs: np.ndarray
    accepted: np.ndarray
    final_params: np.ndarray
    final_cost: float
    restart_index: int = 0
    seed: int = 0
    status: str = "ok"

    @property
    def steps_used(self) -> int:
        return len(self.accepted)


def random_init(n_params: int, seed: int) -> np.ndarray:
    """i.i.d. uniform draws over [0, 2pi); deterministic per seed."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 2.0 * np.pi, size=n_params)


def descend(cost_fn, grad_fn, init, config: OptimizerConfig) -> OptTrace:
    """Gradient descent with backoff-and-retry on cost increases.

    Each retry counts against the step budget, so the runtime is bounded by
    ``config.steps`` gradient-step proposals.  A non-finite cost or gradient
    aborts the run and returns the trace accumulated so far.
    """
    x = np.array(init, dtype=float)
    eta = config.step_size
    cost = float(cost_fn(x))
    costs = [cost]
    accepted = []
    status = "ok"
    if not np.isfinite(cost):
        return OptTrace(np.array(costs), np.array(accepted, dtype=bool), x, cost, status="nan")
    grad = np.asarray(grad_fn(x), dtype=float)
    for _ in range(config.steps):
        if not np.all(np.isfinite(grad)):
            status = "nan"
            break
        proposal = x - eta * grad
        new_cost = float(cost_fn(proposal))
        if not np.isfinite(new_cost):
            status = "nan"
            break
        if config.backoff_enabled and new_cost > cost:
            eta *= config.backoff
            accepted.append(False)
            costs.append(cost)
        else:
            x = proposal
            cost = new_cost
            grad = np.asarray(grad_fn(x), dtype=float)
            accepted.append(True)
            costs.append(cost)
    return OptTrace(
        costs=np.array(costs),
        accepted=np.array(accepted, dtype=bool),
        final_params=x,
        final_cost=cost,
        status=status,
    )


def multi_restart(cost_fn, grad_fn, n_params: int, config: OptimizerConfig) -> OptTrace:
    """Best of ``config.restarts`` descents from seeds seed, seed+1, ...

    Deterministic for a fixed base seed; ties resolve to the lowest restart
    index.
    """
    best = None
    for k in range(config.restarts):
        seed = config.seed + k
        trace = descend(cost_fn, grad_fn, random_init(n_params, seed), config)
        trace.restart_index = k
        trace.seed = seed
        if best is None or trace.final_cost < best.final_cost:
            best = trace
    return best
