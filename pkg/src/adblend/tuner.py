"""Data-driven virtual-bid selection.

The tuner treats an epoch of logged impressions as a fixed environment.
For any virtual bid it solves the per-impression allocation problem and
averages the winning tuples' ad-CTR and ad-revenue terms, tracing a point
on the attainable (engagement, revenue) frontier. The utopia point is the
pair of per-objective maxima averaged the same way: the best the platform
could do if it cared about each objective alone. Tuning minimizes the
normalized L2 distance between frontier point and utopia point, by golden
section search for the scalar bid and by simultaneous-perturbation
stochastic approximation for the vector extension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .allocator import (
    VirtualBid,
    ad_ctr_sum,
    ad_revenue_sum,
    bids_of,
    optimize_impression,
)
from .core import Impression, generate_tuples
from .errors import NormalizationError, ValidationError

PHI = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class UtopiaPoint:
    """Componentwise-best averages: max ad-CTR mass and max ad revenue."""

    u_ctr: float
    u_rev: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "u_ctr", float(self.u_ctr))
        object.__setattr__(self, "u_rev", float(self.u_rev))


@dataclass(frozen=True)
class FrontierPoint:
    """Average optimized ad-CTR mass and ad revenue at one virtual bid."""

    v: VirtualBid
    mean_ctr: float
    mean_rev: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean_ctr", float(self.mean_ctr))
        object.__setattr__(self, "mean_rev", float(self.mean_rev))


@dataclass(frozen=True)
class SpsaHyperparams:
    """Gain schedules and iteration cap for SPSA.

    a_k = a / (k + stability)^alpha, c_k = c / k^gamma, k = 1..max_iter.
    """

    a: float = 0.4
    c: float = 0.1
    stability: float = 50.0
    alpha: float = 0.602
    gamma: float = 0.101
    max_iter: int = 2000

    def __post_init__(self) -> None:
        if self.a <= 0 or self.c <= 0:
            raise ValidationError("spsa gains a and c must be > 0")
        if not (0 < self.alpha <= 1) or not (0 < self.gamma <= 1):
            raise ValidationError("spsa exponents must lie in (0, 1]")
        if self.stability < 0:
            raise ValidationError("spsa stability constant must be >= 0")
        if self.max_iter < 1:
            raise ValidationError("spsa iteration cap must be >= 1")


@dataclass(frozen=True)
class TuneResult:
    """Tuned virtual bid plus diagnostics from the search."""

    v: VirtualBid
    distance: float
    utopia: UtopiaPoint
    trace: tuple[tuple[FrontierPoint, float], ...]  # (point, distance) in eval order


def utopia_point(log: Sequence[Impression], model, n_prime: int) -> UtopiaPoint:
    """Per-impression maxima of ad-CTR mass and ad revenue, averaged.

    The revenue coordinate equals the frontier's mean revenue at v = 0 by
    construction; the CTR coordinate maximizes raw ad-CTR mass (the common
    virtual-bid factor cancels out of the normalized distance).

    Raises:
        ValidationError: empty log.
    """
    if not log:
        raise ValidationError("impression log must be nonempty")
    total_ctr = 0.0
    total_rev = 0.0
    for imp in log:
        bids = bids_of(imp)
        tuples = generate_tuples(imp, n_prime)
        batch = getattr(model, "predict_batch", None)
        if batch is not None:
            rows = batch(imp, tuples)
        else:
            rows = [model.predict(imp, mt) for mt in tuples]
        best_ctr = -math.inf
        best_rev = -math.inf
        for i, mt in enumerate(tuples):
            c = ad_ctr_sum(mt, rows[i])
            r = ad_revenue_sum(mt, rows[i], bids)
            if c > best_ctr:
                best_ctr = c
            if r > best_rev:
                best_rev = r
        total_ctr += best_ctr
        total_rev += best_rev
    n = len(log)
    return UtopiaPoint(u_ctr=total_ctr / n, u_rev=total_rev / n)


def frontier_point(
    log: Sequence[Impression], model, n_prime: int, v: VirtualBid
) -> FrontierPoint:
    """Solve every impression at virtual bid v and average the outcomes."""
    if not log:
        raise ValidationError("impression log must be nonempty")
    total_ctr = 0.0
    total_rev = 0.0
    for imp in log:
        res = optimize_impression(imp, model, v, n_prime)
        total_ctr += res.ad_ctr_sum
        total_rev += res.v_ir
    n = len(log)
    return FrontierPoint(v=v, mean_ctr=total_ctr / n, mean_rev=total_rev / n)


def distance_to_utopia(p: FrontierPoint, u: UtopiaPoint) -> float:
    """Normalized L2 distance between a frontier point and the utopia point.

    Raises:
        NormalizationError: a utopia coordinate is zero (undefined scaling).
    """
    if u.u_ctr == 0 or u.u_rev == 0:
        raise NormalizationError(
            f"utopia coordinates must be nonzero, got ({u.u_ctr}, {u.u_rev})"
        )
    return math.sqrt((p.mean_ctr / u.u_ctr - 1.0) ** 2 + (p.mean_rev / u.u_rev - 1.0) ** 2)


def golden_search(
    f: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-6,
    max_iter: int = 100,
) -> float:
    """Golden-section line search for the minimum of f on [a, b].

    Interior points sit at a + d/phi and b - d/phi for d = b - a; each
    iteration keeps the subinterval containing the better (lower) interior
    evaluation, stopping when the interval is narrower than tol or the
    iteration cap is hit. Returns the final lower endpoint.

    Raises:
        ValidationError: a >= b, tol <= 0, or max_iter < 1.
    """
    a, b = float(bracket[0]), float(bracket[1])
    if a >= b:
        raise ValidationError(f"bracket must satisfy a < b, got [{a}, {b}]")
    if tol <= 0:
        raise ValidationError(f"tol must be > 0, got {tol}")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    d = b - a
    upper = a + d / PHI
    lower = b - d / PHI
    for _ in range(max_iter):
        if f(lower) < f(upper):
            b = upper
        else:
            a = lower
        d = b - a
        upper = a + d / PHI
        lower = b - d / PHI
        if abs(b - a) < tol:
            break
    return a


def spsa(
    f: Callable[[np.ndarray], float],
    theta0: Sequence[float],
    h: SpsaHyperparams,
    seed: int,
    bounds: Optional[tuple[Sequence[float], Sequence[float]]] = None,
) -> np.ndarray:
    """Simultaneous-perturbation stochastic approximation.

    Each iteration draws a Rademacher direction, evaluates f at the two
    symmetric perturbations (exactly two evaluations per iteration), forms
    the elementwise gradient estimate, and steps against it. When bounds
    are given, both the perturbed evaluation points and the iterate are
    projected into the box. Deterministic for a fixed seed.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    if theta.ndim != 1 or theta.size == 0:
        raise ValidationError("theta0 must be a nonempty 1-D vector")
    lo = hi = None
    if bounds is not None:
        lo = np.asarray(bounds[0], dtype=np.float64)
        hi = np.asarray(bounds[1], dtype=np.float64)
        if lo.shape != theta.shape or hi.shape != theta.shape:
            raise ValidationError("bounds must match theta0's shape")
        theta = np.clip(theta, lo, hi)
    rng = np.random.default_rng(seed)
    for k in range(1, h.max_iter + 1):
        a_k = h.a / (k + h.stability) ** h.alpha
        c_k = h.c / k**h.gamma
        delta = rng.integers(0, 2, size=theta.size).astype(np.float64) * 2.0 - 1.0
        theta_plus = theta + c_k * delta
        theta_minus = theta - c_k * delta
        if lo is not None:
            theta_plus = np.clip(theta_plus, lo, hi)
            theta_minus = np.clip(theta_minus, lo, hi)
        y_plus = f(theta_plus)
        y_minus = f(theta_minus)
        g = (y_plus - y_minus) / (2.0 * c_k * delta)
        theta = theta - a_k * g
        if lo is not None:
            theta = np.clip(theta, lo, hi)
    return theta


def tune_virtual_bid(
    log: Sequence[Impression],
    model,
    n_prime: int,
    method: str = "golden",
    *,
    bracket: Optional[tuple[float, float]] = None,
    tol: float = 1e-4,
    max_iter: int = 100,
    spsa_params: Optional[SpsaHyperparams] = None,
    theta0: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> TuneResult:
    """Find the virtual bid whose frontier point lies nearest utopia.

    The golden path searches the scalar bid over the bracket (default
    [0, 10 * max bid in the log]); the spsa path searches the virtual-bid
    vector within the same per-component box. Frontier evaluations are
    memoized by bid value, and the evaluation trace is recorded in call
    order for diagnostics.
    """
    if not log:
        raise ValidationError("impression log must be nonempty")
    if bracket is None:
        max_bid = max(a.bid_cpc for imp in log for a in imp.ads)
        bracket = (0.0, 10.0 * max_bid)
    lo_b, hi_b = float(bracket[0]), float(bracket[1])
    if lo_b < 0:
        raise ValidationError(f"bracket lower bound must be >= 0, got {lo_b}")
    if hi_b < lo_b:
        raise ValidationError(f"bracket upper bound {hi_b} < lower bound {lo_b}")

    utopia = utopia_point(log, model, n_prime)
    trace: list[tuple[FrontierPoint, float]] = []
    cache: dict[tuple[float, ...], float] = {}

    def objective_vec(vec: Sequence[float]) -> float:
        key = tuple(float(x) for x in vec)
        hit = cache.get(key)
        if hit is not None:
            return hit
        point = frontier_point(log, model, n_prime, VirtualBid.from_vector(key))
        dist = distance_to_utopia(point, utopia)
        cache[key] = dist
        trace.append((point, dist))
        return dist

    if lo_b == hi_b:
        # Degenerate bracket pins the bid outright.
        best = VirtualBid(lo_b)
        dist = objective_vec((lo_b,))
        return TuneResult(v=best, distance=dist, utopia=utopia, trace=tuple(trace))

    if method == "golden":
        v_star = golden_search(
            lambda x: objective_vec((x,)), (lo_b, hi_b), tol=tol, max_iter=max_iter
        )
        best = VirtualBid(v_star)
        dist = objective_vec((v_star,))
    elif method == "spsa":
        h = spsa_params or SpsaHyperparams(max_iter=max_iter)
        start = np.asarray(
            theta0 if theta0 is not None else [(lo_b + hi_b) / 2.0], dtype=np.float64
        )
        dim = start.size
        box = (np.full(dim, lo_b), np.full(dim, hi_b))
        theta = spsa(objective_vec, start, h, seed=seed, bounds=box)
        best = VirtualBid.from_vector(theta)
        dist = objective_vec(tuple(theta))
    else:
        raise ValidationError(f"unknown tuning method {method!r}")

    return TuneResult(v=best, distance=dist, utopia=utopia, trace=tuple(trace))
