"""Lipschitz-continuous minimum S-T cut.

Every cut program uses the convention y_{t0} - y_{s0} = 1 with S on the low
side, and threshold rounding returns A_tau = {v : y_v <= tau}. The interval
between the anchors is enforced as y_{s0} <= y_v <= y_{t0}.

Tape draw order (part of the coupling contract):

* ``threshold_round``: one draw, the threshold.
* ``cut_expmech``: the Lambda_2 draw, the exponential-mechanism draw, then the
  threshold draw.
* ``cut_kway``: k threshold draws in order, then one draw for r.
* ``cut_naive_baseline``: one draw, the threshold.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .enforce_types import enforce_types
from .exceptions import InstanceError, ParameterError, SolverConvergenceError
from .graph_core import (CutInstance, WeightedGraph, anchor_range, laplacian, laplacian_extremes,
                         weight_floor)
from .prox_solver import ConstraintSet, RegularizedProgram, quadratic, solve
from .settings import setting
from .tape import RandomTape, inverse_cdf

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]


@dataclass
class CutFractional:
    """Fractional cut y over the vertices and the box it was solved on."""
    y: np.ndarray
    epsilon: float
    interval: Interval
    objective_f: float
    centered: bool = True
    lambda2: float = 0.0
    iterations: int = 0
    converged: bool = True

    def violations(self, inst: CutInstance, tol: float = 1e-6) -> List[str]:
        y, lo, hi = self.y, self.interval[0], self.interval[1]
        found = []
        if abs(y[inst.t0] - y[inst.s0] - 1.0) > tol:
            found.append("y_t0 - y_s0 != 1")
        if self.centered and abs(y.sum()) > tol:
            found.append("<1, y> != 0")
        if y.min() < lo - tol or y.max() > hi + tol:
            found.append("y outside the interval")
        if any(abs(y[s] - y[inst.s0]) > tol for s in inst.S):
            found.append("y not constant on S")
        if any(abs(y[t] - y[inst.t0]) > tol for t in inst.T):
            found.append("y not constant on T")
        if y.min() < y[inst.s0] - tol or y.max() > y[inst.t0] + tol:
            found.append("y outside [y_s0, y_t0]")
        return found


@dataclass
class CutResult:
    A: FrozenSet[int]
    weight: float
    feasible: bool
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def indicator(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        if self.A:
            x[sorted(self.A)] = 1.0
        return x


def fractional_cut_value(g: WeightedGraph, y: np.ndarray) -> float:
    """f_w(y) = sum_uv w_uv |y_u - y_v|."""
    us, vs = g.endpoints()
    return float(g.weights @ np.abs(y[us] - y[vs]))


def cut_result(inst: CutInstance, A: Iterable[int], **diagnostics) -> CutResult:
    A = frozenset(int(v) for v in A)
    return CutResult(A, inst.graph.cut_weight(A), inst.is_feasible(A), dict(diagnostics))


def threshold_set(y: np.ndarray, tau: float) -> FrozenSet[int]:
    return frozenset(int(v) for v in np.flatnonzero(y <= tau))


def _cut_constraints(inst: CutInstance, lo: float, hi: float, centered: bool) -> ConstraintSet:
    n, s0, t0 = inst.n, inst.s0, inst.t0
    cs = ConstraintSet(n, np.full(n, lo), np.full(n, hi))

    def unit(*pairs):
        row = np.zeros(n)
        for v, coef in pairs:
            row[v] += coef
        return row

    cs.add_hyperplane(unit((t0, 1.0), (s0, -1.0)), 1.0)
    for s in sorted(inst.S - {s0}):
        cs.add_hyperplane(unit((s, 1.0), (s0, -1.0)), 0.0)
    for t in sorted(inst.T - {t0}):
        cs.add_hyperplane(unit((t, 1.0), (t0, -1.0)), 0.0)
    if centered:
        cs.add_hyperplane(np.ones(n), 0.0)
    for v in range(n):
        if v in inst.S or v in inst.T:
            continue
        cs.add_halfspace(unit((s0, 1.0), (v, -1.0)), 0.0)
        cs.add_halfspace(unit((v, 1.0), (t0, -1.0)), 0.0)
    return cs


def _start_point(inst: CutInstance, low_value: float, high_value: float) -> np.ndarray:
    y = np.full(inst.n, low_value)
    y[sorted(inst.T)] = high_value
    return y


def _snap_terminals(inst: CutInstance, y: np.ndarray) -> np.ndarray:
    y = y.copy()
    y[sorted(inst.S)] = y[inst.s0]
    y[sorted(inst.T)] = y[inst.t0]
    return y


def _cut_program(inst: CutInstance, cs: ConstraintSet, g_value, g_gradient,
                 sigma: float, lsmooth: float) -> RegularizedProgram:
    g = inst.graph
    return RegularizedProgram(
        dim=inst.n, g_value=g_value, g_gradient=g_gradient, sigma=sigma, lsmooth=lsmooth,
        constraints=cs, abs_terms=(g.incidence_matrix().T, g.weights))


def _solve_cut_program(inst: CutInstance, program: RegularizedProgram, y0: np.ndarray,
                       tol: Optional[float]):
    result = solve(program, y0, tol=tol)
    if not result.converged:
        raise SolverConvergenceError(
            f"cut program did not converge after {result.iterations} iterations", last_iterate=result.x)
    return _snap_terminals(inst, result.x), result


def _fractional_setup(inst: CutInstance, eps: float, interval: Optional[Tuple[float, float]],
                      centered: bool):
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    lo, hi = (-1.0, 1.0) if interval is None else (float(interval[0]), float(interval[1]))
    if centered:
        anchors = anchor_range(inst, lo, hi)
        if anchors is None:
            raise ParameterError(f"interval [{lo}, {hi}] admits no feasible fractional cut")
        y0 = _start_point(inst, anchors[0], anchors[0] + 1.0)
    elif not (lo <= hi - 1.0):
        raise ParameterError(f"interval [{lo}, {hi}] is shorter than the anchor gap 1")
    else:
        y0 = _start_point(inst, lo, lo + 1.0)
    spectrum = laplacian_extremes(inst.graph) if inst.n >= 2 else None
    lam2 = spectrum.lambda2 if spectrum else 0.0
    lam_max = spectrum.lambda_max if spectrum else 0.0
    sigma = eps * max(lam2, weight_floor())
    g_value, g_gradient = quadratic(eps * laplacian(inst.graph))
    program = _cut_program(inst, _cut_constraints(inst, lo, hi, centered), g_value, g_gradient,
                           sigma, max(eps * lam_max, sigma))
    return program, y0, (lo, hi), lam2


def cut_program(inst: CutInstance, eps: float, interval: Optional[Tuple[float, float]] = None,
                centered: bool = True) -> RegularizedProgram:
    """The program ``solve_fractional`` minimizes, for trajectory and certificate checks."""
    return _fractional_setup(inst, eps, interval, centered)[0]


@enforce_types
def solve_fractional(inst: CutInstance, eps: float, interval: Optional[Tuple[float, float]] = None,
                     tol: Optional[float] = None, centered: bool = True) -> CutFractional:
    """Laplacian-regularized fractional cut on the box ``interval`` (default [-1, 1]).

    Minimizes f_w(y) + (eps/2) y^T L_w y; the regularizer is eps*lambda2 strongly
    convex on <1, y> = 0 and eps*lambda_n smooth.
    """
    program, y0, (lo, hi), lam2 = _fractional_setup(inst, eps, interval, centered)
    if lam2 == 0.0:
        logger.warning("graph is disconnected (lambda2 = 0); stability bounds are vacuous")
    y, result = _solve_cut_program(inst, program, y0, tol)
    frac = CutFractional(y, eps, (lo, hi), fractional_cut_value(inst.graph, y), centered,
                         lam2, result.iterations, result.converged)
    logger.debug("fractional cut on [%g, %g]: f_w(y) = %.6g", lo, hi, frac.objective_f)
    return frac


def solve_balanced_fractional(inst: CutInstance, beta: float, eps: float,
                              tol: Optional[float] = None) -> CutFractional:
    """Fractional cut restricted to the box [-1 + beta, 1 - beta]."""
    if not 0 < beta < 0.5:
        raise ParameterError(f"beta must lie in (0, 1/2), got {beta}")
    return solve_fractional(inst, eps, (-1.0 + beta, 1.0 - beta), tol)


def solve_naive_fractional(inst: CutInstance, Lambda: float, tol: Optional[float] = None) -> CutFractional:
    """Anchored LP y_{s0} = 0, y_{t0} = 1, y in [0, 1] with the regularizer (Lambda/2)||y||^2."""
    if not Lambda > 0:
        raise ParameterError(f"Lambda must be positive, got {Lambda}")
    n, s0, t0 = inst.n, inst.s0, inst.t0
    cs = ConstraintSet(n, np.zeros(n), np.ones(n))
    for anchor, value in ((s0, 0.0), (t0, 1.0)):
        row = np.zeros(n)
        row[anchor] = 1.0
        cs.add_hyperplane(row, value)
    for terminals, anchor in ((inst.S, s0), (inst.T, t0)):
        for v in sorted(terminals - {anchor}):
            row = np.zeros(n)
            row[v], row[anchor] = 1.0, -1.0
            cs.add_hyperplane(row, 0.0)
    g_value, g_gradient = quadratic(np.full(n, Lambda))
    program = _cut_program(inst, cs, g_value, g_gradient, Lambda, Lambda)
    y, result = _solve_cut_program(inst, program, _start_point(inst, 0.0, 1.0), tol)
    return CutFractional(y, Lambda, (0.0, 1.0), fractional_cut_value(inst.graph, y), False,
                         0.0, result.iterations, result.converged)


def threshold_round(frac: CutFractional, inst: CutInstance, tape: RandomTape) -> CutResult:
    """A_tau = {v : y_v <= tau} with tau uniform on the solved interval (one draw)."""
    lo, hi = frac.interval
    tau = lo + tape.uniform() * (hi - lo)
    return cut_result(inst, threshold_set(frac.y, tau), tau=tau)


def expected_threshold_cut(frac: CutFractional, inst: CutInstance) -> Tuple[float, float]:
    """Exact E_tau[cut(A_tau)] and Pr_tau[A_tau feasible] for tau uniform on the interval."""
    lo, hi = frac.interval
    width = hi - lo
    us, vs = inst.graph.endpoints()
    low = np.clip(np.minimum(frac.y[us], frac.y[vs]), lo, hi)
    high = np.clip(np.maximum(frac.y[us], frac.y[vs]), lo, hi)
    expected = float(inst.graph.weights @ (high - low)) / width
    a, b = np.clip([frac.y[inst.s0], frac.y[inst.t0]], lo, hi)
    return expected, float(b - a) / width


# exponential mechanism over size buckets


def expmech_probabilities(theta: Sequence[float], eta: float) -> np.ndarray:
    """Pr[i] proportional to exp(-eta theta_i); infinite entries get probability 0."""
    theta = np.asarray(theta, dtype=float)
    finite = np.isfinite(theta)
    if not finite.any():
        raise ParameterError("exponential mechanism needs at least one finite score")
    weights = np.zeros_like(theta)
    weights[finite] = np.exp(-eta * (theta[finite] - theta[finite].min()))
    return weights / weights.sum()


def expmech_pick(probabilities: np.ndarray, u: float) -> int:
    index = inverse_cdf(probabilities, u)
    if index is None:
        # rounding left u above the last cumulative sum
        index = int(np.flatnonzero(probabilities > 0)[-1])
    return index


def bucket_count(gamma: float) -> int:
    if not 0 < gamma < 1:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    count = round(1.0 / gamma)
    if abs(count * gamma - 1.0) > 1e-9:
        raise ParameterError(f"1/gamma must be an integer, got 1/{gamma} = {1.0 / gamma}")
    return count


def bucket_interval(i: int, gamma: float) -> Interval:
    """Box for size bucket i (1-based): [(i-1) gamma - 1, gamma i]."""
    return (i - 1) * gamma - 1.0, gamma * i


@dataclass
class ExpMechPlan:
    """The per-bucket fractional solutions; computed once per instance."""
    gamma: float
    eps: float
    lambda2: float
    theta: np.ndarray
    fractions: List[Optional[CutFractional]]


def expmech_prepare(inst: CutInstance, gamma: float, eps: Optional[float] = None,
                    tol: Optional[float] = None) -> ExpMechPlan:
    count = bucket_count(gamma)
    if inst.n < 2:
        raise ParameterError("cut_expmech needs n >= 2")
    eps = 1.0 / math.sqrt(inst.n) if eps is None else eps
    lam2 = laplacian_extremes(inst.graph).lambda2
    if lam2 == 0.0:
        raise InstanceError("cut_expmech needs a connected graph (lambda2 = 0)")
    fractions: List[Optional[CutFractional]] = []
    theta = np.full(count, np.inf)
    for i in range(1, count + 1):
        lo, hi = bucket_interval(i, gamma)
        if anchor_range(inst, lo, hi) is None:
            logger.warning("size bucket %d (box [%g, %g]) is infeasible", i, lo, hi)
            fractions.append(None)
            continue
        frac = solve_fractional(inst, eps, (lo, hi), tol)
        fractions.append(frac)
        theta[i - 1] = frac.objective_f
    return ExpMechPlan(gamma, eps, lam2, theta, fractions)


def expmech_round(plan: ExpMechPlan, inst: CutInstance, tape: RandomTape) -> CutResult:
    n = inst.n
    Lambda2 = plan.lambda2 / 2.0 + tape.uniform() * plan.lambda2 / 2.0
    eta = plan.gamma / (plan.eps * Lambda2 * math.sqrt(n))
    probabilities = expmech_probabilities(plan.theta, eta)
    index = expmech_pick(probabilities, tape.uniform())
    frac = plan.fractions[index]
    lo, hi = frac.interval
    tau = lo + tape.uniform() * (hi - lo)
    return cut_result(inst, threshold_set(frac.y, tau), bucket=index + 1, Lambda2=Lambda2,
                      eta=eta, tau=tau, theta=plan.theta.tolist(),
                      probabilities=probabilities.tolist())


@enforce_types
def cut_expmech(inst: CutInstance, gamma: float, tape: RandomTape, eps: Optional[float] = None) -> CutResult:
    """Solve one fractional cut per size bucket, pick a bucket with the exponential
    mechanism at eta = gamma / (eps Lambda_2 sqrt(n)), then threshold-round it."""
    return expmech_round(expmech_prepare(inst, gamma, eps), inst, tape)


# k-way submodularity


def kway_parameters(beta: float, gamma: float) -> Tuple[int, int, int]:
    """(k, r_min, r_max) with k = 4 ceil(12 beta^-2 ln(2/gamma) / 4)."""
    if not 0 < beta < 0.5:
        raise ParameterError(f"beta must lie in (0, 1/2), got {beta}")
    if not 0 < gamma < 1:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    k = 4 * math.ceil(12.0 * math.log(2.0 / gamma) / (beta * beta) / 4.0)
    r_min = math.ceil(k / 2)
    r_max = math.floor((0.5 + beta / 4.0) * k)
    if r_min > r_max:
        raise ParameterError(f"empty range for r: [{r_min}, {r_max}] with k = {k}")
    return k, r_min, r_max


def kway_combine(sets: Sequence[Iterable[int]], r: int) -> FrozenSet[int]:
    """Union over all r-subsets of the sets of their intersection.

    A vertex is in that union exactly when it belongs to at least r of the sets.
    """
    if not 1 <= r <= len(sets):
        raise ParameterError(f"r must lie in [1, {len(sets)}], got {r}")
    counts = Counter(v for s in sets for v in set(s))
    return frozenset(v for v, c in counts.items() if c >= r)


@dataclass
class KwayPlan:
    beta: float
    gamma: float
    k: int
    r_min: int
    r_max: int
    fraction: CutFractional
    balanced: bool


def kway_prepare(inst: CutInstance, beta: float, gamma: float, eps: Optional[float] = None,
                 tol: Optional[float] = None) -> KwayPlan:
    k, r_min, r_max = kway_parameters(beta, gamma)
    eps = setting("algorithms", "kway_eps") if eps is None else eps
    balanced = anchor_range(inst, -1.0 + beta, 1.0 - beta) is not None
    if balanced:
        frac = solve_balanced_fractional(inst, beta, eps, tol)
    else:
        logger.warning("no %g-balanced fractional cut exists; rounding the [-1, 1] solution", beta)
        frac = solve_fractional(inst, eps, (-1.0, 1.0), tol)
    return KwayPlan(beta, gamma, k, r_min, r_max, frac, balanced)


def kway_round(plan: KwayPlan, inst: CutInstance, tape: RandomTape) -> CutResult:
    lo, hi = plan.fraction.interval
    y = plan.fraction.y
    taus = [lo + tape.uniform() * (hi - lo) for _ in range(plan.k)]
    sets = [threshold_set(y, tau) for tau in taus]
    r = plan.r_min + tape.index(plan.r_max - plan.r_min + 1)
    B = kway_combine(sets, r)
    g = inst.graph
    range_cut_sum = sum(g.cut_weight(kway_combine(sets, q)) for q in range(plan.r_min, plan.r_max + 1))
    threshold_cut_sum = sum(g.cut_weight(A) for A in sets)
    return cut_result(inst, B, r=r, k=plan.k, range_size=plan.r_max - plan.r_min + 1,
                      range_cut_sum=range_cut_sum, threshold_cut_sum=threshold_cut_sum,
                      balanced=plan.balanced)


@enforce_types
def cut_kway(inst: CutInstance, beta: float, gamma: float, tape: RandomTape,
             eps: Optional[float] = None) -> CutResult:
    """Round the balanced fractional cut k times and combine with B_{r,k}."""
    return kway_round(kway_prepare(inst, beta, gamma, eps), inst, tape)


@enforce_types
def cut_naive_baseline(inst: CutInstance, Lambda: float, tape: RandomTape) -> CutResult:
    """Unweighted l2-regularized anchored LP with threshold rounding on [0, 1]."""
    frac = solve_naive_fractional(inst, Lambda)
    result = threshold_round(frac, inst, tape)
    result.diagnostics["objective_f"] = frac.objective_f
    return result
