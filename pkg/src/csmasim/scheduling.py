"""Backoff-rate update rules for queue-driven scheduling.

Two flavors.  The diminishing-step rule lengthens epochs as ceil(exp(sqrt(j)))
and steps by 1/j with no projection; it is stochastic gradient ascent on the
fit objective from gibbs.  The constant-step rule adds a slack epsilon to the
arrival estimate, uses a fixed step, and projects onto the box
[-n/eps, n/eps]^n.  The published step/window constants are reproduced
verbatim so the tests can pin them, but they are astronomically conservative;
desk runs override the epoch length and step through the experiment config.

The potential used to reason about the constant-step rule is the fit
objective at the slack-padded rates minus the squared distance to its
maximizer.  It is negative on the box, bounded below by -16 n^3 / eps^2, and
never decreases when a step is clipped back onto the box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conflict_graph import IndependentSetFamily
from .gibbs import BackoffSolution, log_likelihood, solve_backoff


def epoch_params(j: int) -> tuple[int, float]:
    """(epoch length, step size) for diminishing-step epoch j >= 1.

    Length ceil(exp(sqrt(j))) keeps epoch boundaries on unit-interval
    boundaries; step 1/j gives the usual square-summable-not-summable
    schedule.
    """
    if j < 1:
        raise ValueError("epoch index starts at 1")
    return math.ceil(math.exp(math.sqrt(j))), 1.0 / j


def update_diminishing(r, lam_hat, s_hat, j: int) -> np.ndarray:
    """r + (1/j)(lam_hat - s_hat), no projection."""
    if j < 1:
        raise ValueError("epoch index starts at 1")
    r = np.asarray(r, dtype=float)
    return r + (np.asarray(lam_hat, float) - np.asarray(s_hat, float)) / j


def update_projected(r, lam_hat, s_hat, epsilon: float, alpha: float,
                     n: int) -> np.ndarray:
    """Constant-step update with slack, clipped to the box [-n/eps, n/eps]."""
    if epsilon <= 0:
        raise ValueError("slack epsilon must be positive")
    r = np.asarray(r, dtype=float)
    stepped = r + alpha * (np.asarray(lam_hat, float) + epsilon
                           - np.asarray(s_hat, float))
    box = n / epsilon
    return np.clip(stepped, -box, box)


@dataclass(frozen=True)
class ConstantStepPlan:
    epoch_length: float  # exp(c (n^2/eps) log(n/eps)); inf once it overflows
    step: float          # eps^2 / (72 n^2 (K+1)^2)
    window: int          # ceil(48*16*72 n^5 / eps^6) epochs to reach the guarantee
    box: float           # n/eps projection radius


def constant_step_plan(n: int, epsilon: float, peak: float = 1.0,
                       c: float = 1.0) -> ConstantStepPlan:
    """Published constants for the constant-step rule.

    peak is the largest per-interval arrival increment (the Lipschitz scale
    of the queue paths).  The epoch length and window are far beyond desk
    scale for any epsilon < 1; they exist to be printed and overridden.
    """
    if n <= 3:
        raise ValueError("the constant-step analysis assumes more than 3 nodes")
    if not 0 < epsilon:
        raise ValueError("slack epsilon must be positive")
    if peak <= 0:
        raise ValueError("peak increment must be positive")
    exponent = c * (n * n / epsilon) * math.log(n / epsilon)
    length = math.inf if exponent > 700.0 else math.exp(exponent)
    step = epsilon ** 2 / (72.0 * n * n * (peak + 1.0) ** 2)
    window = math.ceil(48 * 16 * 72 * n ** 5 / epsilon ** 6)
    return ConstantStepPlan(epoch_length=length, step=step, window=window,
                            box=n / epsilon)


def fitted_reference(family: IndependentSetFamily, rates, epsilon: float
                     ) -> BackoffSolution:
    """Maximizer of the fit objective at the slack-padded rates."""
    if epsilon <= 0:
        raise ValueError("slack epsilon must be positive")
    return solve_backoff(family, np.asarray(rates, float) + epsilon)


def lyapunov_potential(family: IndependentSetFamily, r, rates, epsilon: float,
                       *, reference: BackoffSolution | None = None) -> float:
    """Fit objective at rates+eps minus squared distance to its maximizer.

    Negative everywhere; on the box [-n/eps, n/eps]^n it stays above
    potential_lower_bound and never decreases when a stepped point is
    clipped back onto the box.  Pass a precomputed reference to avoid
    re-solving inside per-epoch loops.
    """
    r = np.asarray(r, dtype=float)
    if reference is None:
        reference = fitted_reference(family, rates, epsilon)
    padded = np.asarray(rates, float) + epsilon
    value = log_likelihood(family, r, padded)
    return float(value - np.sum((r - reference.r) ** 2))


def potential_lower_bound(n: int, epsilon: float) -> float:
    """-16 n^3 / eps^2, the floor of the potential on the projection box."""
    if epsilon <= 0:
        raise ValueError("slack epsilon must be positive")
    return -16.0 * n ** 3 / epsilon ** 2
