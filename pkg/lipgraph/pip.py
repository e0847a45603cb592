"""Packing integer programs max w^T y s.t. A y <= b, y in {0, 1}^m.

The relaxation adds the regularizer 1/2 sum_i w_i x_i^2; rounding keeps
coordinate i when its own tape draw falls below x_i / gamma, with
gamma = e (c p)^(1/B) and B = min b. Draws are read in index order.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .enforce_types import enforce_types
from .exceptions import (InstanceFormatError, InstanceTypeError, ParameterError, SolverConvergenceError,
                         SupportTooLargeError)
from .graph_core import WeightedGraph
from .prox_solver import ConstraintSet, RegularizedProgram, quadratic, solve
from .settings import setting
from .tape import RandomTape

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PipInstance:
    """Packing instance with A in [0,1]^{p x m}, b >= 1, w > 0 and confidence c >= 1."""
    A: np.ndarray
    b: np.ndarray
    w: np.ndarray
    c: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if A.shape != (b.size, w.size):
            raise ParameterError(f"A has shape {A.shape}, expected ({b.size}, {w.size})")
        if A.size and (A.min() < 0.0 or A.max() > 1.0):
            raise ParameterError("entries of A must lie in [0, 1]")
        if b.size and b.min() < 1.0:
            raise ParameterError(f"budgets must satisfy B ≥ 1, got B = {b.min()}")
        if w.size and w.min() <= 0.0:
            raise ParameterError("weights must be positive")
        if self.c < 1.0:
            raise ParameterError(f"confidence parameter must satisfy c >= 1, got {self.c}")
        for name, value in (("A", A), ("b", b), ("w", w)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    @property
    def B(self) -> float:
        return float(self.b.min())

    def with_weights(self, w) -> "PipInstance":
        return PipInstance(self.A, self.b, w, self.c)

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "w": self.w.tolist(), "c": self.c}


@dataclass
class PipSolution:
    y: np.ndarray
    value: float
    feasible: bool


def pip_solution(inst: PipInstance, y) -> PipSolution:
    y = np.asarray(y, dtype=float)
    return PipSolution(y, float(inst.w @ y), bool(np.all(inst.A @ y <= inst.b + 1e-12)))


def pip_gamma(inst: PipInstance) -> float:
    return math.e * (inst.c * inst.p) ** (1.0 / inst.B)


def pip_program(inst: PipInstance) -> RegularizedProgram:
    cs = ConstraintSet(inst.m, np.zeros(inst.m), np.ones(inst.m))
    for row, budget in zip(inst.A, inst.b):
        # rows whose total is within budget never bind inside the box
        if row.sum() > budget:
            cs.add_halfspace(row, budget)
    g_value, g_gradient = quadratic(inst.w)
    return RegularizedProgram(
        dim=inst.m, g_value=g_value, g_gradient=g_gradient,
        sigma=float(inst.w.min()), lsmooth=float(inst.w.max()),
        constraints=cs, linear_term=-inst.w)


@enforce_types
def solve_pip_fractional(inst: PipInstance, tol: Optional[float] = None) -> np.ndarray:
    result = solve(pip_program(inst), np.zeros(inst.m), tol=tol)
    if not result.converged:
        raise SolverConvergenceError(
            f"PIP relaxation did not converge after {result.iterations} iterations", last_iterate=result.x)
    logger.debug("PIP relaxation converged after %d iterations", result.iterations)
    return result.x


@enforce_types
def round_pip(x: np.ndarray, inst: PipInstance, tape: RandomTape) -> PipSolution:
    """Independent rounding: y_i = 1 iff tau_i < x_i / gamma."""
    gamma = pip_gamma(inst)
    if x.size != inst.m:
        raise ParameterError(f"x has {x.size} entries, expected {inst.m}")
    taus = tape.uniforms(inst.m)
    return pip_solution(inst, (taus < np.clip(x, 0.0, 1.0) / gamma).astype(float))


def pip_exact_small(inst: PipInstance) -> PipSolution:
    """Optimal 0/1 solution by depth-first search with a weight bound."""
    limit = setting("harness", "exact_max_m")
    if inst.m > limit:
        raise SupportTooLargeError(f"exact PIP supports m <= {limit}, got {inst.m}")
    remaining = np.concatenate([np.cumsum(inst.w[::-1])[::-1], [0.0]])
    load = np.zeros(inst.p)
    best = {"value": 0.0, "y": np.zeros(inst.m)}
    y = np.zeros(inst.m)

    def search(i: int, value: float):
        if value > best["value"]:
            best["value"], best["y"] = value, y.copy()
        if i == inst.m or value + remaining[i] <= best["value"]:
            return
        column = inst.A[:, i]
        if np.all(load + column <= inst.b + 1e-12):
            load[:] += column
            y[i] = 1.0
            search(i + 1, value + float(inst.w[i]))
            y[i] = 0.0
            load[:] -= column
        search(i + 1, value)

    search(0, 0.0)
    return pip_solution(inst, best["y"])


def incidence_pip(g: WeightedGraph, c: float = 1.0) -> PipInstance:
    """The b-matching of a bipartite graph as a packing instance (one row per vertex)."""
    if g.bipartition is None:
        raise InstanceTypeError("incidence_pip needs a bipartite graph")
    A = np.abs(g.incidence_matrix())
    b = np.array([g.capacity(v) for v in range(g.n)], dtype=float)
    return PipInstance(A, b, g.weights.copy(), c)


def random_pip_instance(p: int, m: int, rng: np.random.Generator, B: float = 1.0,
                        c: float = 1.0, density: float = 0.5) -> PipInstance:
    A = np.where(rng.random((p, m)) < density, np.round(rng.random((p, m)) * 4) / 4, 0.0)
    w = rng.choice(np.arange(2, 9) / 4.0, size=m)
    return PipInstance(A, np.full(p, float(B)), w, c)


def read_pip_instance(path: Union[str, Path]) -> PipInstance:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"invalid JSON: {e.msg}", e.lineno) from None
    try:
        return PipInstance(np.array(data["A"], dtype=float), np.array(data["b"], dtype=float),
                           np.array(data["w"], dtype=float), float(data.get("c", 1.0)))
    except KeyError as e:
        raise InstanceFormatError(f"PIP instance is missing field {e}") from None


def write_pip_instance(path: Union[str, Path], inst: PipInstance) -> None:
    Path(path).write_text(json.dumps(inst.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
