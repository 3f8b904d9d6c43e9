"""Price-based congestion control and the entropy-regularized rate program.

Nodes maintain nonnegative prices.  Each epoch a node picks the rate in
[0, 1] maximizing beta*U(y) - price*y, then nudges its price by the gap
between the rate it asked for and the service it saw.  The diminishing-step
variant uses steps 1/j and a positive-part projection; the constant-step
variant keeps prices in a box [0, beta*V + alpha] where V bounds the utility
slopes at zero.

Certification side: the offline program maximizes sum U_i(lambda_i) plus
(1/beta) times the schedule entropy over the capacity polytope.  Its dual in
the price vector is the log partition function plus the per-node best-response
values, minimized by projected gradient.  The unregularized optimum comes from
an away-step Frank-Wolfe over the independent-set polytope, giving the
log(family size)/beta utility-gap bound a computable left-hand side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conflict_graph import IndependentSetFamily, max_weight_independent_set
from .errors import ConvergenceFailure
from .gibbs import GibbsDistribution, log_partition, service_rates, stationary_distribution

UTILITY_FAMILIES = ("log-shifted", "weighted-log-shifted", "alpha-fair-shifted")


@dataclass(frozen=True)
class UtilityFunction:
    """Strictly increasing concave utility on [0, 1] with finite slope at 0.

    log-shifted: log(shift + y) - log(shift).  weighted-log-shifted: the same
    times weight.  alpha-fair-shifted: ((shift+y)^(1-a) - shift^(1-a))/(1-a)
    with fairness a >= 0, a != 1 (a = 0 degrades to linear).  The shift keeps
    the derivative at zero finite, which the price-box bounds need.
    """

    family: str = "log-shifted"
    shift: float = 1.0
    weight: float = 1.0
    fairness: float = 0.0

    def __post_init__(self):
        if self.family not in UTILITY_FAMILIES:
            raise ValueError(f"unknown utility family {self.family!r}; choices {UTILITY_FAMILIES}")
        if not self.shift > 0:
            raise ValueError("shift must be positive (keeps the slope at 0 finite)")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        if self.fairness < 0 or self.fairness == 1.0:
            raise ValueError("fairness must be >= 0 and != 1")

    def value(self, y: float) -> float:
        d = self.shift
        if self.family == "log-shifted":
            return math.log(d + y) - math.log(d)
        if self.family == "weighted-log-shifted":
            return self.weight * (math.log(d + y) - math.log(d))
        a = self.fairness
        return ((d + y) ** (1.0 - a) - d ** (1.0 - a)) / (1.0 - a)

    def derivative(self, y: float) -> float:
        d = self.shift
        if self.family == "log-shifted":
            return 1.0 / (d + y)
        if self.family == "weighted-log-shifted":
            return self.weight / (d + y)
        return (d + y) ** (-self.fairness)

    @property
    def initial_slope(self) -> float:
        return self.derivative(0.0)


def initial_slope_bound(utilities) -> float:
    """Largest derivative at zero across nodes (the V of the price box)."""
    return max(u.initial_slope for u in utilities)


def default_beta(n: int, epsilon: float) -> float:
    """Default entropy weight 4n/eps."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return 4.0 * n / epsilon


def best_response(u: UtilityFunction, beta: float, price: float) -> float:
    """argmax over y in [0,1] of beta*U(y) - price*y.

    Log families solve beta*U'(y) = price in closed form; the fairness family
    bisects the monotone derivative (50 halvings).  Endpoints win whenever the
    derivative never crosses zero inside the interval.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if price < 0:
        raise ValueError("prices are nonnegative")
    if price == 0.0:
        return 1.0
    if u.family in ("log-shifted", "weighted-log-shifted"):
        w = u.weight if u.family == "weighted-log-shifted" else 1.0
        return min(1.0, max(0.0, beta * w / price - u.shift))
    if beta * u.derivative(0.0) <= price:
        return 0.0
    if beta * u.derivative(1.0) >= price:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if beta * u.derivative(mid) > price:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def best_response_value(u: UtilityFunction, beta: float, price: float) -> float:
    """max over y in [0,1] of beta*U(y) - price*y."""
    y = best_response(u, beta, price)
    return beta * u.value(y) - price * y


def best_responses(utilities, beta: float, prices) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    return np.array([best_response(u, beta, p) for u, p in zip(utilities, prices, strict=True)])


def total_utility(utilities, rates) -> float:
    rates = np.asarray(rates, dtype=float)
    return float(sum(u.value(y) for u, y in zip(utilities, rates, strict=True)))


def update_prices_diminishing(prices, rates, s_hat, j: int) -> np.ndarray:
    """[price + (rate - observed service)/j]_+ componentwise."""
    if j < 1:
        raise ValueError("epoch index starts at 1")
    prices = np.asarray(prices, dtype=float)
    stepped = prices + (np.asarray(rates, float) - np.asarray(s_hat, float)) / j
    return np.maximum(stepped, 0.0)


def update_prices_constant(prices, rates, s_hat, alpha: float) -> np.ndarray:
    """[price - alpha*observed]_+ + alpha*rate componentwise.

    Stays inside [0, beta*V + alpha]: once a price exceeds beta*V the best
    response is 0, so the rate term adds nothing and the price shrinks.
    """
    if alpha <= 0:
        raise ValueError("step alpha must be positive")
    prices = np.asarray(prices, dtype=float)
    drained = np.maximum(prices - alpha * np.asarray(s_hat, float), 0.0)
    return drained + alpha * np.asarray(rates, float)


def price_box_bound(utilities, beta: float, alpha: float) -> float:
    """beta*V + alpha, the invariant ceiling for constant-step prices."""
    return beta * initial_slope_bound(utilities) + alpha


def constant_price_epoch_length(n: int, beta: float, alpha: float,
                                utilities, epsilon: float, c: float = 1.0) -> float:
    """Published epoch length for the constant-step variant.

    exp(c*beta*n*V) * c*(beta*V+alpha)*n^2/(beta*eps); inf once the
    exponential overflows.  Desk runs override this through the config.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    v = initial_slope_bound(utilities)
    exponent = c * beta * n * v
    factor = c * (beta * v + alpha) * n * n / (beta * epsilon)
    if exponent > 700.0:
        return math.inf
    return math.exp(exponent) * factor


def dual_value(family: IndependentSetFamily, utilities, beta: float, prices) -> float:
    """log partition at the prices plus the summed best-response values."""
    prices = np.asarray(prices, dtype=float)
    inner = sum(best_response_value(u, beta, p)
                for u, p in zip(utilities, prices, strict=True))
    return float(log_partition(family, prices) + inner)


def dual_gradient(family: IndependentSetFamily, utilities, beta: float, prices
                  ) -> np.ndarray:
    """service_rates(prices) - best_responses(prices); both maximizers unique."""
    prices = np.asarray(prices, dtype=float)
    return service_rates(family, prices) - best_responses(utilities, beta, prices)


@dataclass(frozen=True)
class DualSolution:
    prices: np.ndarray
    distribution: GibbsDistribution
    rates: np.ndarray          # best responses at the optimal prices
    value: float               # dual objective at the optimum
    residual: float            # projected-gradient sup norm at exit
    iterations: int


def solve_dual_optimum(family: IndependentSetFamily, utilities, beta: float,
                       *, tol: float = 1e-8, max_iter: int = 50_000) -> DualSolution:
    """Minimize the dual over nonnegative prices by projected gradient.

    Armijo backtracking on the projected step; terminates when the projected
    gradient sup norm drops to tol.  At exit service_rates(prices) >= rates
    - tol holds componentwise (prices at zero absorb any strict surplus).
    """
    if len(utilities) != family.n:
        raise ValueError("need one utility per node")
    r = np.zeros(family.n)
    value = dual_value(family, utilities, beta, r)
    step = 1.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        g = dual_gradient(family, utilities, beta, r)
        residual = float(np.abs(r - np.maximum(r - g, 0.0)).max())
        if residual <= tol:
            dist = stationary_distribution(family, r)
            return DualSolution(prices=r, distribution=dist,
                                rates=best_responses(utilities, beta, r),
                                value=value, residual=residual, iterations=it)
        step = min(step * 2.0, 1e6)
        while True:
            trial = np.maximum(r - step * g, 0.0)
            move = trial - r
            trial_value = dual_value(family, utilities, beta, trial)
            if trial_value <= value - 1e-4 / step * float(np.dot(move, move)):
                r, value = trial, trial_value
                break
            step *= 0.5
            if step < 1e-16:
                raise ConvergenceFailure(
                    f"dual descent stalled at residual {residual:.3e} (tol {tol:.1e})")
    raise ConvergenceFailure(
        f"dual descent hit the iteration cap at residual {residual:.3e} (tol {tol:.1e})")


@dataclass(frozen=True)
class UtilityOptimum:
    rates: np.ndarray
    value: float
    gap: float                 # linearized ascent gap at exit
    weights: dict              # schedule mask -> convex weight realizing rates
    iterations: int


def solve_utility_optimum(family: IndependentSetFamily, utilities,
                          *, tol: float = 1e-8, max_iter: int = 200_000
                          ) -> UtilityOptimum:
    """Maximize total utility over the independent-set polytope.

    Away-step Frank-Wolfe: the linear oracle is max_weight_independent_set,
    the away vertex is the worst active one, and the step size comes from
    bisecting the directional derivative (concavity makes it monotone).
    Away steps restore linear convergence, which plain Frank-Wolfe lacks and
    which the 1e-8 default gap needs.
    """
    if len(utilities) != family.n:
        raise ValueError("need one utility per node")
    matrix = family.matrix
    start = family.size - 1  # any vertex works; take the last enumerated one
    weights = {start: 1.0}
    lam = matrix[start].copy()

    def grad(point):
        return np.array([u.derivative(y) for u, y in zip(utilities, point, strict=True)])

    def line_search(point, direction, gamma_max):
        def slope(gamma):
            moved = point + gamma * direction
            return float(np.dot(grad(moved), direction))
        if slope(gamma_max) >= 0.0:
            return gamma_max
        lo, hi = 0.0, gamma_max
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if slope(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    gap = math.inf
    for it in range(1, max_iter + 1):
        g = grad(lam)
        fw_idx, _ = max_weight_independent_set(family, g)
        fw_row = family.position(fw_idx)
        gap = float(np.dot(g, matrix[fw_row] - lam))
        if gap <= tol:
            value = total_utility(utilities, lam)
            return UtilityOptimum(rates=lam, value=value, gap=gap,
                                  weights={family.masks[k]: w for k, w in weights.items()},
                                  iterations=it)
        away_row = max(weights, key=lambda k: -float(np.dot(g, matrix[k])))
        away_gap = float(np.dot(g, lam - matrix[away_row]))
        if gap >= away_gap:
            direction = matrix[fw_row] - lam
            gamma = line_search(lam, direction, 1.0)
            if gamma >= 1.0:
                weights = {fw_row: 1.0}
            else:
                weights = {k: w * (1.0 - gamma) for k, w in weights.items()}
                weights[fw_row] = weights.get(fw_row, 0.0) + gamma
        else:
            w_away = weights[away_row]
            direction = lam - matrix[away_row]
            gamma = line_search(lam, direction, w_away / (1.0 - w_away))
            weights = {k: w * (1.0 + gamma) for k, w in weights.items()}
            weights[away_row] -= gamma  # hits 0 exactly when the step is maximal
        weights = {k: w for k, w in weights.items() if w > 1e-15}
        total = sum(weights.values())
        weights = {k: w / total for k, w in weights.items()}
        lam = np.zeros(family.n)
        for k, w in weights.items():
            lam += w * matrix[k]
    raise ConvergenceFailure(
        f"rate optimization hit the iteration cap at gap {gap:.3e} (tol {tol:.1e})")


@dataclass(frozen=True)
class GapCertificate:
    gap: float            # optimal total utility minus achieved total utility
    bound: float          # log(family size) / beta
    optimal_rates: np.ndarray
    achieved_utility: float
    optimal_utility: float

    def holds(self, slack: float = 0.0) -> bool:
        return self.gap <= self.bound + slack


def utility_gap_certificate(family: IndependentSetFamily, utilities, beta: float,
                            achieved_rates, *, tol: float = 1e-8) -> GapCertificate:
    """Compare achieved rates against the polytope optimum.

    The entropy term the prices implicitly optimize is at most log(family
    size), so the utility sacrificed is at most log(family size)/beta.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    best = solve_utility_optimum(family, utilities, tol=tol)
    achieved = total_utility(utilities, achieved_rates)
    return GapCertificate(gap=best.value - achieved,
                          bound=math.log(family.size) / beta,
                          optimal_rates=best.rates,
                          achieved_utility=achieved,
                          optimal_utility=best.value)
