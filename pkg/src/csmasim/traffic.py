"""Arrival processes and exact queueing over piecewise-constant schedules.

Work is fluid: a transmitting node drains its queue at rate 1 while backlog
remains.  Discrete arrivals land at the END of each unit interval; controlled
(congestion-mode) arrivals accrue continuously.  The integrator is exact on
the piecewise-linear queue paths, splitting pieces where a queue hits zero,
so departures carry the busy indicator while offered service does not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import Trajectory
from .conflict_graph import schedule_nodes

ARRIVAL_KINDS = ("scaled-bernoulli", "binomial", "controlled")


@dataclass(frozen=True)
class ArrivalSpec:
    """Per-node arrival process; increments live in [0, peak] with Pr(0) > 0."""

    kind: str
    rates: np.ndarray
    peak: float = 1.0

    def __post_init__(self):
        if self.kind not in ARRIVAL_KINDS:
            raise ValueError(f"unknown arrival kind {self.kind!r}; choices {ARRIVAL_KINDS}")
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("rates must be a nonempty 1-d vector")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValueError("rates must be finite and nonnegative")
        if not self.peak > 0:
            raise ValueError("peak increment must be positive")
        if self.kind == "controlled":
            if np.any(rates > 1.0):
                raise ValueError("controlled arrivals are fluid rates in [0, 1]")
        else:
            if np.any(rates > self.peak):
                raise ValueError("mean rate above the peak increment is impossible")
            if np.any(rates == self.peak):
                raise ValueError(
                    "rate equal to the peak forces an arrival every interval "
                    "(violates Pr(increment=0) > 0)")
            if self.kind == "binomial" and (self.peak != int(self.peak) or self.peak < 1):
                raise ValueError("binomial arrivals need an integer peak >= 1")
        rates = rates.copy()
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def n(self) -> int:
        return self.rates.size


def sample_unit_arrivals(spec: ArrivalSpec, rng: np.random.Generator) -> np.ndarray:
    """Work arriving over one unit interval, per node."""
    return sample_epoch_arrivals(spec, 1, rng)[0]


def sample_epoch_arrivals(spec: ArrivalSpec, length: int,
                          rng: np.random.Generator) -> np.ndarray:
    """(length, n) matrix of per-interval increments."""
    if length < 1:
        raise ValueError("epoch length must be >= 1 unit interval")
    p = spec.rates / spec.peak
    if spec.kind == "scaled-bernoulli":
        return (rng.random((length, spec.n)) < p) * spec.peak
    if spec.kind == "binomial":
        return rng.binomial(int(spec.peak), p, size=(length, spec.n)).astype(float)
    # controlled: deterministic unit mass, one rate per interval
    return np.tile(spec.rates, (length, 1))


@dataclass
class QueueState:
    """Running per-node work ledger: queue = arrived - departed at all times."""

    queue: np.ndarray
    departed: np.ndarray
    arrived: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, n: int) -> "QueueState":
        return cls(queue=np.zeros(n), departed=np.zeros(n), arrived=np.zeros(n))

    def conservation_error(self) -> float:
        return float(np.abs(self.arrived - self.departed - self.queue).max())


@dataclass(frozen=True)
class EpochFlowStats:
    actual_service: np.ndarray  # work departed per node over the epoch
    peak_queue: np.ndarray      # max backlog per node within the epoch


def integrate_epoch(state: QueueState, traj: Trajectory, *,
                    deposits: np.ndarray | None = None,
                    inflow: np.ndarray | None = None) -> EpochFlowStats:
    """Advance queues across one epoch's trajectory, updating `state` in place.

    deposits: (T, n) increments landing at the end of each unit interval
    (requires an integer-length trajectory).  inflow: (n,) continuous rates.
    Exactly one of the two may be given; neither means no arrivals.
    """
    n = traj.n
    if deposits is not None and inflow is not None:
        raise ValueError("choose unit-interval deposits or continuous inflow, not both")
    duration = traj.duration
    dep_times: list[float] = []
    dep_cols: list[int] = []
    dep_vals: list[float] = []
    if deposits is not None:
        deposits = np.asarray(deposits, dtype=float)
        T = int(round(duration))
        if abs(duration - T) > 0.0 or deposits.shape != (T, n):
            raise ValueError("unit-interval deposits need an integer-length epoch "
                             f"and shape ({T}, {n})")
        rows, cols = np.nonzero(deposits)
        dep_times = [float(k + 1) for k in rows]
        dep_cols = [int(c) for c in cols]
        dep_vals = [float(v) for v in deposits[rows, cols]]
    flow = None
    if inflow is not None:
        flow = np.asarray(inflow, dtype=float)
        if flow.shape != (n,) or np.any(flow < 0) or np.any(flow > 1.0):
            raise ValueError("continuous inflow rates must lie in [0, 1]")
        flow = flow.tolist()

    q = state.queue.tolist()
    arrived = state.arrived.tolist()
    actual = [0.0] * n
    peak = q[:]
    ndep = len(dep_times)
    ptr = 0

    for t0, t1, mask in traj.segments():
        tx = schedule_nodes(mask)
        cursor = t0
        while True:
            target = t1
            if ptr < ndep and dep_times[ptr] < target:
                target = dep_times[ptr]
            dt = target - cursor
            if dt > 0.0:
                if flow is None:
                    for i in tx:
                        qi = q[i]
                        if qi > 0.0:
                            if qi <= dt:
                                actual[i] += qi
                                q[i] = 0.0
                            else:
                                actual[i] += dt
                                q[i] = qi - dt
                else:
                    tx_set = set(tx)
                    for i in range(n):
                        a = flow[i]
                        if i in tx_set:
                            qi = q[i]
                            if qi > 0.0:
                                empty_in = qi / (1.0 - a) if a < 1.0 else math.inf
                                if empty_in <= dt:
                                    actual[i] += qi + a * dt
                                    q[i] = 0.0
                                else:
                                    actual[i] += dt
                                    q[i] = qi + (a - 1.0) * dt
                            elif a > 0.0:
                                actual[i] += a * dt  # served as it arrives
                        elif a > 0.0:
                            q[i] += a * dt
                            if q[i] > peak[i]:
                                peak[i] = q[i]
                cursor = target
            if ptr < ndep and dep_times[ptr] <= cursor:
                while ptr < ndep and dep_times[ptr] <= cursor:
                    c = dep_cols[ptr]
                    v = dep_vals[ptr]
                    q[c] += v
                    arrived[c] += v
                    if q[c] > peak[c]:
                        peak[c] = q[c]
                    ptr += 1
                continue
            if cursor >= t1:
                break

    if flow is not None:
        for i in range(n):
            arrived[i] += flow[i] * duration
    state.queue = np.asarray(q)
    state.arrived = np.asarray(arrived)
    state.departed = state.departed + np.asarray(actual)
    state.t += duration
    return EpochFlowStats(actual_service=np.asarray(actual), peak_queue=np.asarray(peak))


def empirical_rates(traj: Trajectory, arrivals_total, window: float
                    ) -> tuple[np.ndarray, np.ndarray]:
    """(arrival-rate estimate, offered-service estimate) over the window.

    Offered service integrates the raw transmit indicator (no busy indicator)
    by direct per-node accumulation, independent of the occupancy aggregator.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    busy = [0.0] * traj.n
    for t0, t1, mask in traj.segments():
        dt = t1 - t0
        for i in schedule_nodes(mask):
            busy[i] += dt
    lam_hat = np.asarray(arrivals_total, dtype=float) / window
    return lam_hat, np.asarray(busy) / window
