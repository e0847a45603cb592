"""Bipartite b-matching: regularized relaxation and cooperative auction rounding.

The fractional program is

    minimize   -sum_e w_e x_e + (eps/2) sum_e w_e x_e^2
    subject to sum_{e at v} x_e <= b_v for every vertex v,  0 <= x <= 1

solved by proximal gradient (the linear part goes into the prox step).

``auction_round`` reads its tape in three phases, always consuming the same
number of draws so coupled runs stay aligned:

1. seller draws: for each buyer u in vertex order, b_u inverse-CDF draws over
   its neighbors in vertex order with probabilities x_uv / b_u, then "no seller";
2. item draws: for each buyer u in vertex order and each of its b_u slots, one
   draw choosing an item of that slot's seller (ignored for an empty slot or a
   repeated seller, which keeps only its first occurrence);
3. acceptance draws: for each seller v in vertex order and each of its b_v
   items, one draw choosing among that item's bidders in vertex order.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from .enforce_types import enforce_types
from .exceptions import (InstanceError, InstanceTypeError, ParameterError, SolverConvergenceError,
                         SupportTooLargeError)
from .graph_core import WeightedGraph
from .prox_solver import ConstraintSet, RegularizedProgram, quadratic, solve
from .settings import setting
from .tape import RandomTape

logger = logging.getLogger(__name__)


@dataclass
class MatchFractional:
    x: np.ndarray
    epsilon: float
    objective: float
    iterations: int = 0
    converged: bool = True

    def violations(self, g: WeightedGraph, tol: float = 1e-6) -> List[str]:
        found = []
        if self.x.size and (self.x.min() < -tol or self.x.max() > 1 + tol):
            found.append("x outside [0, 1]")
        loads = vertex_loads(g, self.x)
        for v in range(g.n):
            if loads[v] > g.capacity(v) + tol:
                found.append(f"vertex {v} load {loads[v]:.6g} exceeds b = {g.capacity(v)}")
        return found


@dataclass(frozen=True)
class BMatching:
    """Edge indices of a b-matching and their total weight."""
    M: FrozenSet[int]
    weight: float

    @staticmethod
    def from_edges(g: WeightedGraph, edges: Iterable[int]) -> "BMatching":
        M = frozenset(int(e) for e in edges)
        degree = np.zeros(g.n, dtype=int)
        for e in M:
            u, v = g.edges[e]
            degree[u] += 1
            degree[v] += 1
        over = [v for v in range(g.n) if degree[v] > g.capacity(v)]
        if over:
            raise InstanceError(f"vertices {over} exceed their capacity")
        return BMatching(M, float(sum(g.weights[e] for e in M)))

    def indicator(self, m: int) -> np.ndarray:
        x = np.zeros(m)
        if self.M:
            x[sorted(self.M)] = 1.0
        return x


def vertex_loads(g: WeightedGraph, x: np.ndarray) -> np.ndarray:
    loads = np.zeros(g.n)
    us, vs = g.endpoints()
    np.add.at(loads, us, x)
    np.add.at(loads, vs, x)
    return loads


def _require_bipartite(g: WeightedGraph):
    if g.bipartition is None:
        raise InstanceTypeError("matching needs a bipartite graph with a bipartition")


def matching_constraints(g: WeightedGraph) -> ConstraintSet:
    cs = ConstraintSet(g.m, np.zeros(g.m), np.ones(g.m))
    us, vs = g.endpoints()
    for v in range(g.n):
        incident = (us == v) | (vs == v)
        # the box already bounds the load by the degree
        if incident.sum() > g.capacity(v):
            cs.add_halfspace(incident.astype(float), g.capacity(v))
    return cs


def matching_program(g: WeightedGraph, eps: float) -> RegularizedProgram:
    """min -w^T x + (eps/2) sum_e w_e x_e^2 over the capacity polytope."""
    g_value, g_gradient = quadratic(eps * g.weights)
    return RegularizedProgram(
        dim=g.m, g_value=g_value, g_gradient=g_gradient,
        sigma=eps * float(g.weights.min()), lsmooth=eps * float(g.weights.max()),
        constraints=matching_constraints(g), linear_term=-g.weights)


@enforce_types
def solve_matching_fractional(g: WeightedGraph, eps: float, tol: Optional[float] = None) -> MatchFractional:
    """Weighted-l2-regularized fractional b-matching (capacities default to 1)."""
    _require_bipartite(g)
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if g.m == 0:
        return MatchFractional(np.zeros(0), eps, 0.0)
    result = solve(matching_program(g, eps), np.zeros(g.m), tol=tol)
    if not result.converged:
        raise SolverConvergenceError(
            f"matching relaxation did not converge after {result.iterations} iterations",
            last_iterate=result.x)
    x = result.x
    return MatchFractional(x, eps, float(g.weights @ x), result.iterations, result.converged)


def _seller_items(g: WeightedGraph) -> Dict[int, int]:
    return {v: g.capacity(v) for v in sorted(g.bipartition[1])}


@enforce_types
def auction_round(frac: MatchFractional, g: WeightedGraph, tape: RandomTape) -> BMatching:
    """Multi-item cooperative auction rounding of a fractional b-matching."""
    _require_bipartite(g)
    x = np.clip(frac.x, 0.0, 1.0)
    buyers = sorted(g.bipartition[0])
    neighbor_lists = {u: g.neighbors(u) for u in buyers}

    slots: Dict[int, List[Optional[Tuple[int, int]]]] = {}
    for u in buyers:
        b_u = g.capacity(u)
        probabilities = [x[e] / b_u for _, e in neighbor_lists[u]]
        picks = []
        for _ in range(b_u):
            index = tape.choice(probabilities)
            picks.append(None if index is None else neighbor_lists[u][index])
        slots[u] = picks

    bids: Dict[Tuple[int, int], List[int]] = {}
    bid_edge: Dict[Tuple[int, int], int] = {}
    for u in buyers:
        seen = set()
        for pick in slots[u]:
            u_item = tape.uniform()
            if pick is None or pick[0] in seen:
                continue
            seller, edge = pick
            seen.add(seller)
            b_v = g.capacity(seller)
            item = min(int(u_item * b_v), b_v - 1)
            bids.setdefault((seller, item), []).append(u)
            bid_edge[(u, seller)] = edge

    matched = []
    for seller, items in _seller_items(g).items():
        for item in range(items):
            u_accept = tape.uniform()
            bidders = bids.get((seller, item))
            if not bidders:
                continue
            winner = bidders[min(int(u_accept * len(bidders)), len(bidders) - 1)]
            matched.append(bid_edge[(winner, seller)])
    return BMatching.from_edges(g, matched)


def auction_draw_count(g: WeightedGraph) -> int:
    """Number of tape draws ``auction_round`` consumes on ``g``."""
    _require_bipartite(g)
    buyers = sum(g.capacity(u) for u in g.bipartition[0])
    return 2 * buyers + sum(g.capacity(v) for v in g.bipartition[1])


def match_exact_small(g: WeightedGraph) -> BMatching:
    """Maximum-weight b-matching by exhaustive search with capacity pruning."""
    limit = setting("harness", "exact_max_m")
    if g.m > limit:
        raise SupportTooLargeError(f"exact matching supports m <= {limit}, got {g.m}")
    remaining = np.concatenate([np.cumsum(g.weights[::-1])[::-1], [0.0]])
    load = np.zeros(g.n, dtype=int)
    best_weight, best_set = 0.0, []
    chosen: List[int] = []

    def search(e: int, weight: float):
        nonlocal best_weight, best_set
        if weight > best_weight:
            best_weight, best_set = weight, list(chosen)
        if e == g.m or weight + remaining[e] <= best_weight:
            return
        u, v = g.edges[e]
        if load[u] < g.capacity(u) and load[v] < g.capacity(v):
            load[u] += 1
            load[v] += 1
            chosen.append(e)
            search(e + 1, weight + float(g.weights[e]))
            chosen.pop()
            load[u] -= 1
            load[v] -= 1
        search(e + 1, weight)

    search(0, 0.0)
    return BMatching.from_edges(g, best_set)


def matching_distribution(g: WeightedGraph, frac: MatchFractional) -> Dict[FrozenSet[int], float]:
    """Exact output distribution of ``auction_round`` for b == 1.

    Enumerates every seller choice of every buyer and, for each seller, every
    accepted bidder; only small graphs are practical.
    """
    if g.capacities is not None and g.capacities.max() > 1:
        raise ParameterError("exact distribution is implemented for b == 1 only")
    buyers = sorted(g.bipartition[0])
    options = []
    for u in buyers:
        row = [((seller, e), float(frac.x[e])) for seller, e in g.neighbors(u)]
        row.append((None, max(0.0, 1.0 - sum(p for _, p in row))))
        options.append(row)
    distribution: Dict[FrozenSet[int], float] = {}
    for combo in itertools.product(*options):
        probability = float(np.prod([p for _, p in combo]))
        if probability == 0.0:
            continue
        bidders: Dict[int, List[int]] = {}
        for pick, _ in combo:
            if pick is not None:
                bidders.setdefault(pick[0], []).append(pick[1])
        per_seller = [[(e, 1.0 / len(edges)) for e in edges] for edges in bidders.values()]
        for accepted in itertools.product(*per_seller):
            M = frozenset(e for e, _ in accepted)
            share = probability * float(np.prod([p for _, p in accepted]))
            distribution[M] = distribution.get(M, 0.0) + share
    return distribution
