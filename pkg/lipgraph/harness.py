"""Coupled-run stability measurement and exact oracles.

Every algorithm is registered as a deterministic ``prepare`` step (the
convex solves, run once per instance) and a randomized ``round`` step (run
once per trial). Two runs on an instance and its perturbed copy are coupled by
their tapes:

* ``shared``: both runs read the same stream (trial ``t`` uses spawn ``(t,)``);
* ``independent``: the perturbed run reads spawn ``(t, 1)`` instead.

The mean l1 distance between coupled outputs upper-bounds the earth mover's
distance between the two output distributions, since any coupling does.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .exceptions import (InstanceTypeError, ParameterError, SupportTooLargeError,
                         WeightFloorError)
from .graph_core import (CutInstance, Perturbation, WeightedGraph, lambda2, perturb, weight_floor)
from .matching import auction_round, match_exact_small, solve_matching_fractional
from .min_cut import (CutResult, cut_result, expmech_pick, expmech_prepare, expmech_probabilities,
                      expmech_round, kway_prepare, kway_round, solve_fractional,
                      solve_naive_fractional, threshold_round)
from .pip import PipInstance, pip_exact_small, pip_gamma, round_pip, solve_pip_fractional
from .settings import setting
from .tape import RandomTape
from .trial_pool import TrialSwarm

logger = logging.getLogger(__name__)

Instance = Union[CutInstance, WeightedGraph, PipInstance]

SHARED = "shared"
INDEPENDENT = "independent"
POLICIES = (SHARED, INDEPENDENT)


@dataclass
class AlgorithmParams:
    eps: float
    gamma: float
    beta: float
    kway_gamma: float
    kway_eps: float
    Lambda: float

    @staticmethod
    def from_settings(**overrides) -> "AlgorithmParams":
        params = AlgorithmParams(
            eps=setting("algorithms", "eps"),
            gamma=setting("algorithms", "gamma"),
            beta=setting("algorithms", "beta"),
            kway_gamma=setting("algorithms", "kway_gamma"),
            kway_eps=setting("algorithms", "kway_eps"),
            Lambda=setting("algorithms", "lambda"),
        )
        for key, value in overrides.items():
            if value is None:
                continue
            if not hasattr(params, key):
                raise ParameterError(f"unknown algorithm parameter {key!r}")
            setattr(params, key, float(value))
        return params


@dataclass
class AlgorithmRun:
    """Output vector of one run (indicator or fractional), its objective and feasibility."""
    output: np.ndarray
    objective: float
    feasible: bool


@dataclass(frozen=True)
class Algorithm:
    name: str
    kind: str  # "cut", "match" or "pip"
    prepare: Callable[[Any, AlgorithmParams], Any]
    round: Callable[[Any, Any, RandomTape], AlgorithmRun]
    bound: Callable[[Any, AlgorithmParams], Optional[float]]
    randomized: bool = True


def _cut_run(inst: CutInstance, result: CutResult) -> AlgorithmRun:
    return AlgorithmRun(result.indicator(inst.n), result.weight, result.feasible)


def _cut_lambda2(inst: CutInstance) -> float:
    return lambda2(inst.graph)


def _over_lambda2(value: float, inst: CutInstance) -> Optional[float]:
    lam2 = _cut_lambda2(inst)
    return None if lam2 == 0.0 else value / lam2


def _match_bound(g: WeightedGraph, eps: float) -> float:
    return 2.0 * math.sqrt(g.m) / float(g.weights.min()) * (1.0 + 1.0 / eps)


def _fractional_cut_round(frac, inst, tape):
    return AlgorithmRun(frac.y.copy(), frac.objective_f, True)


def _exact_cut_round(result, inst, tape):
    return _cut_run(inst, result)


def _match_fractional_round(frac, g, tape):
    return AlgorithmRun(frac.x.copy(), frac.objective, True)


def _match_auction_round(frac, g, tape):
    matching = auction_round(frac, g, tape)
    return AlgorithmRun(matching.indicator(g.m), matching.weight, True)


def _pip_fractional_round(x, inst, tape):
    return AlgorithmRun(x.copy(), float(inst.w @ x), True)


def _pip_round(x, inst, tape):
    solution = round_pip(x, inst, tape)
    return AlgorithmRun(solution.y, solution.value, solution.feasible)


def _build_registry() -> Dict[str, Algorithm]:
    algorithms = [
        Algorithm("cut-fractional", "cut",
                  lambda inst, p: solve_fractional(inst, p.eps),
                  _fractional_cut_round,
                  lambda inst, p: _over_lambda2(math.sqrt(inst.n) / p.eps, inst),
                  randomized=False),
        Algorithm("cut-threshold", "cut",
                  lambda inst, p: solve_fractional(inst, p.eps),
                  lambda frac, inst, tape: _cut_run(inst, threshold_round(frac, inst, tape)),
                  lambda inst, p: _over_lambda2(math.sqrt(inst.n) / p.eps, inst)),
        Algorithm("cut-expmech", "cut",
                  lambda inst, p: expmech_prepare(inst, p.gamma),
                  lambda plan, inst, tape: _cut_run(inst, expmech_round(plan, inst, tape)),
                  lambda inst, p: _over_lambda2(float(inst.n), inst)),
        Algorithm("cut-kway", "cut",
                  lambda inst, p: kway_prepare(inst, p.beta, p.kway_gamma, p.kway_eps),
                  lambda plan, inst, tape: _cut_run(inst, kway_round(plan, inst, tape)),
                  lambda inst, p: _over_lambda2(
                      math.sqrt(inst.n) * math.log(1.0 / p.kway_gamma) / p.beta ** 2, inst)),
        Algorithm("cut-naive", "cut",
                  lambda inst, p: solve_naive_fractional(inst, p.Lambda),
                  lambda frac, inst, tape: _cut_run(inst, threshold_round(frac, inst, tape)),
                  lambda inst, p: inst.n / p.Lambda),
        Algorithm("cut-exact", "cut",
                  lambda inst, p: mincut_exact(inst),
                  _exact_cut_round,
                  lambda inst, p: None,
                  randomized=False),
        Algorithm("match-fractional", "match",
                  lambda g, p: solve_matching_fractional(g, p.eps),
                  _match_fractional_round,
                  lambda g, p: _match_bound(g, p.eps),
                  randomized=False),
        Algorithm("match-auction", "match",
                  lambda g, p: solve_matching_fractional(g, p.eps),
                  _match_auction_round,
                  lambda g, p: 2.0 * _match_bound(g, p.eps)),
        Algorithm("pip-fractional", "pip",
                  lambda inst, p: solve_pip_fractional(inst),
                  _pip_fractional_round,
                  lambda inst, p: math.sqrt(inst.m) / float(inst.w.min()),
                  randomized=False),
        Algorithm("pip-round", "pip",
                  lambda inst, p: solve_pip_fractional(inst),
                  _pip_round,
                  lambda inst, p: math.sqrt(inst.m) / (float(inst.w.min()) * pip_gamma(inst))),
    ]
    return {a.name: a for a in algorithms}


ALGORITHMS: Dict[str, Algorithm] = _build_registry()


def get_algorithm(name: str) -> Algorithm:
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise ParameterError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None


def _check_kind(algo: Algorithm, inst: Instance):
    expected = {"cut": CutInstance, "match": WeightedGraph, "pip": PipInstance}[algo.kind]
    if not isinstance(inst, expected):
        raise InstanceTypeError(f"{algo.name} needs a {expected.__name__}, got {type(inst).__name__}")


def instance_weights(inst: Instance) -> np.ndarray:
    if isinstance(inst, CutInstance):
        return inst.graph.weights
    if isinstance(inst, WeightedGraph):
        return inst.weights
    return inst.w


def instance_with_weights(inst: Instance, weights) -> Instance:
    weights = np.asarray(weights, dtype=float)
    if weights.size and weights.min() <= weight_floor():
        edge = int(np.argmin(weights))
        raise WeightFloorError(f"weight {edge} would drop to {weights[edge]}", edge=edge)
    if isinstance(inst, CutInstance):
        return inst.with_graph(inst.graph.with_weights(weights))
    return inst.with_weights(weights)


def perturb_instance(inst: Instance, pert: Perturbation) -> Instance:
    if isinstance(inst, CutInstance):
        return inst.with_graph(perturb(inst.graph, pert))
    if isinstance(inst, WeightedGraph):
        return perturb(inst, pert)
    weights = instance_weights(inst).copy()
    if not 0 <= pert.edge < weights.size:
        raise ParameterError(f"weight index {pert.edge} out of range [0, {weights.size})")
    weights[pert.edge] += pert.delta
    return instance_with_weights(inst, weights)


def instance_digest(inst: Instance) -> str:
    if isinstance(inst, PipInstance):
        payload = json.dumps(inst.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
    return inst.digest()


# coupled runs


@dataclass
class StabilityReport:
    algorithm: str
    instance_digest: str
    delta: float
    trials: int
    mean_output_distance: float
    distance_sem: float
    lipschitz_quotient: float
    feasibility_rate: float
    objective_mean: float
    objective_sem: float
    theory_bound: Optional[float]
    tape_policy: str
    seed: int
    distances: List[float] = field(default_factory=list, repr=False)
    objectives: List[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("distances")
        data.pop("objectives")
        return data

    def within_bound(self, slack: float, z: Optional[float] = None) -> bool:
        """quotient <= slack * theory_bound once z standard errors are allowed for."""
        if self.theory_bound is None:
            return True
        z = setting("harness", "z_level") if z is None else z
        if self.delta == 0:
            return self.mean_output_distance <= z * self.distance_sem
        return self.lipschitz_quotient - z * self.distance_sem / self.delta <= slack * self.theory_bound


def mean_and_sem(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0, 0.0
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _trial_tapes(seed: int, t: int, policy: str) -> Tuple[RandomTape, RandomTape]:
    master = RandomTape(seed=seed)
    tape = master.spawn(t)
    return tape, (tape.twin() if policy == SHARED else master.spawn(t, 1))


def coupled_runs(algo: Union[str, Algorithm], inst: Instance, inst_tilde: Instance, trials: int,
                 policy: str = SHARED, seed: int = 0, params: Optional[AlgorithmParams] = None,
                 jobs: int = 1) -> StabilityReport:
    """Run ``algo`` on both instances under the tape policy and compare outputs."""
    algo = get_algorithm(algo) if isinstance(algo, str) else algo
    _check_kind(algo, inst)
    _check_kind(algo, inst_tilde)
    if policy not in POLICIES:
        raise ParameterError(f"tape policy must be one of {POLICIES}, got {policy!r}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    params = AlgorithmParams.from_settings() if params is None else params
    state = algo.prepare(inst, params)
    state_tilde = algo.prepare(inst_tilde, params)

    def trial(t: int):
        tape, tape_tilde = _trial_tapes(seed, t, policy)
        run = algo.round(state, inst, tape)
        run_tilde = algo.round(state_tilde, inst_tilde, tape_tilde)
        return float(np.abs(run.output - run_tilde.output).sum()), run.objective, run.feasible

    with TrialSwarm(jobs) as swarm:
        outcomes = swarm.map(trial, trials)
    distances = [d for d, _, _ in outcomes]
    objectives = [o for _, o, _ in outcomes]
    delta = float(np.abs(instance_weights(inst) - instance_weights(inst_tilde)).sum())
    mean_distance, sem_distance = mean_and_sem(distances)
    mean_objective, sem_objective = mean_and_sem(objectives)
    report = StabilityReport(
        algorithm=algo.name, instance_digest=instance_digest(inst), delta=delta, trials=trials,
        mean_output_distance=mean_distance, distance_sem=sem_distance,
        lipschitz_quotient=mean_distance / delta if delta > 0 else 0.0,
        feasibility_rate=float(np.mean([f for _, _, f in outcomes])),
        objective_mean=mean_objective, objective_sem=sem_objective,
        theory_bound=algo.bound(inst, params), tape_policy=policy, seed=seed,
        distances=distances, objectives=objectives)
    logger.debug("%s: delta %.3g, mean distance %.4g +- %.2g", algo.name, delta, mean_distance, sem_distance)
    return report


def estimate_lipschitz(algo: Union[str, Algorithm], inst: Instance, pert: Perturbation,
                       trials: Optional[int] = None, policy: str = SHARED, seed: int = 0,
                       params: Optional[AlgorithmParams] = None, jobs: int = 1,
                       max_relative_delta: Optional[float] = None) -> StabilityReport:
    """Coupled-run estimate of the pointwise Lipschitz quotient at one perturbation."""
    trials = setting("harness", "trials") if trials is None else trials
    if trials < setting("harness", "min_trials"):
        raise ParameterError(f"trials must be >= {setting('harness', 'min_trials')}, got {trials}")
    cap = setting("harness", "max_relative_delta") if max_relative_delta is None else max_relative_delta
    weights = instance_weights(inst)
    if not 0 <= pert.edge < weights.size:
        raise ParameterError(f"weight index {pert.edge} out of range [0, {weights.size})")
    if abs(pert.delta) > cap * weights[pert.edge] * (1 + 1e-12):
        raise ParameterError(
            f"|delta| = {abs(pert.delta)} exceeds {cap} x w_e = {cap * weights[pert.edge]}")
    return coupled_runs(algo, inst, perturb_instance(inst, pert), trials, policy, seed, params, jobs)


@dataclass
class LipschitzTrend:
    reports: List[StabilityReport]
    monotone: bool


def lipschitz_trend(algo: Union[str, Algorithm], inst: Instance, edge: int,
                    trials: Optional[int] = None, policy: str = SHARED, seed: int = 0,
                    params: Optional[AlgorithmParams] = None, jobs: int = 1,
                    relative_deltas: Optional[Sequence[float]] = None) -> LipschitzTrend:
    """Quotients at decreasing relative perturbations of one weight.

    The trend is flagged non-monotone when the quotients neither only grow nor
    only shrink as delta decreases.
    """
    if relative_deltas is None:
        relative_deltas = setting("harness", "trend_relative_deltas")
    relative_deltas = sorted(relative_deltas, reverse=True)
    w_e = float(instance_weights(inst)[edge])
    reports = [
        estimate_lipschitz(algo, inst, Perturbation(edge, rel * w_e), trials, policy, seed, params, jobs,
                           max_relative_delta=max(relative_deltas))
        for rel in relative_deltas
    ]
    steps = np.diff([r.lipschitz_quotient for r in reports])
    monotone = bool(np.all(steps >= 0) or np.all(steps <= 0))
    if not monotone:
        logger.warning("Lipschitz quotient trend is not monotone: %s",
                       [round(r.lipschitz_quotient, 6) for r in reports])
    return LipschitzTrend(reports, monotone)


# distributions and EMD

Distribution = Dict[FrozenSet[int], float]


def empirical_distribution(algo: Union[str, Algorithm], inst: Instance, trials: int, seed: int = 0,
                           params: Optional[AlgorithmParams] = None) -> Distribution:
    """Frequencies of the output supports over ``trials`` independent tapes."""
    algo = get_algorithm(algo) if isinstance(algo, str) else algo
    _check_kind(algo, inst)
    params = AlgorithmParams.from_settings() if params is None else params
    state = algo.prepare(inst, params)
    master = RandomTape(seed=seed)
    counts: Dict[FrozenSet[int], int] = {}
    for t in range(trials):
        run = algo.round(state, inst, master.spawn(t))
        support = frozenset(int(i) for i in np.flatnonzero(run.output > 0.5))
        counts[support] = counts.get(support, 0) + 1
    return {support: count / trials for support, count in counts.items()}


def emd_exact(dist1: Distribution, dist2: Distribution) -> float:
    """Earth mover's distance with ground metric |A xor B|, via the transport LP."""
    max_atoms = setting("harness", "emd_max_atoms")
    max_universe = setting("harness", "emd_max_universe")
    if len(dist1) > max_atoms or len(dist2) > max_atoms:
        raise SupportTooLargeError(
            f"exact EMD supports at most {max_atoms} atoms per distribution; use estimate_lipschitz")
    universe = set().union(*dist1, *dist2) if (dist1 or dist2) else set()
    if len(universe) > max_universe:
        raise SupportTooLargeError(
            f"exact EMD supports a universe of at most {max_universe} elements; use estimate_lipschitz")
    atoms1, atoms2 = list(dist1), list(dist2)
    p = np.array([dist1[a] for a in atoms1], dtype=float)
    q = np.array([dist2[a] for a in atoms2], dtype=float)
    if p.size == 0 or q.size == 0 or abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9:
        raise ParameterError("both distributions must be non-empty and sum to 1")
    D = np.array([[len(a ^ b) for b in atoms2] for a in atoms1], dtype=float)
    rows, cols = D.shape
    A_eq = []
    for i in range(rows):
        A = np.zeros_like(D)
        A[i, :] = 1
        A_eq.append(A.reshape(-1))
    for j in range(cols):
        A = np.zeros_like(D)
        A[:, j] = 1
        A_eq.append(A.reshape(-1))
    b_eq = np.concatenate([p, q])
    # one marginal constraint is implied by the others
    result = optimize.linprog(D.reshape(-1), A_eq=np.array(A_eq)[:-1], b_eq=b_eq[:-1],
                              bounds=(0, None), method="highs")
    if not result.success:
        raise ParameterError(f"transport LP failed: {result.message}")
    return max(0.0, float(result.fun))


# perturbation paths


class PerturbationPath:
    """Piecewise-linear path of weight vectors from ``start`` to ``end``.

    Without waypoints the segment is split into ``steps`` equal steps. Every
    coordinate must move monotonically along the path.
    """

    def __init__(self, start, end, steps: int = 1, waypoints: Optional[Sequence] = None):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        if self.start.shape != self.end.shape:
            raise ParameterError("path endpoints differ in length")
        if waypoints is None:
            if steps < 1:
                raise ParameterError("a path needs at least one step")
            self.points = [self.start + (self.end - self.start) * (i / steps) for i in range(steps + 1)]
        else:
            self.points = [self.start] + [np.asarray(w, dtype=float) for w in waypoints] + [self.end]
        stacked = np.vstack(self.points)
        moves = np.diff(stacked, axis=0)
        if not np.all((moves >= 0).all(axis=0) | (moves <= 0).all(axis=0)):
            raise ParameterError("perturbation path is not monotone in every coordinate")

    @property
    def steps(self) -> int:
        return len(self.points) - 1

    @property
    def length(self) -> float:
        return float(np.abs(self.end - self.start).sum())


@dataclass
class SweepResult:
    steps: List[StabilityReport]
    end_to_end: StabilityReport
    c_sup: float
    step_distance_sum: float
    subadditive: bool


def path_sweep(algo: Union[str, Algorithm], inst: Instance, path: PerturbationPath, trials: int,
               policy: str = SHARED, seed: int = 0, params: Optional[AlgorithmParams] = None,
               jobs: int = 1) -> SweepResult:
    """Coupled distances along every step of the path and end to end."""
    if not np.allclose(path.start, instance_weights(inst)):
        inst = instance_with_weights(inst, path.start)
    stops = [instance_with_weights(inst, w) for w in path.points]
    reports = [coupled_runs(algo, a, b, trials, policy, seed, params, jobs) for a, b in zip(stops, stops[1:])]
    end_to_end = coupled_runs(algo, stops[0], stops[-1], trials, policy, seed, params, jobs)
    step_sum = sum(r.mean_output_distance for r in reports)
    noise = setting("harness", "z_level") * math.sqrt(
        end_to_end.distance_sem ** 2 + sum(r.distance_sem ** 2 for r in reports))
    subadditive = end_to_end.mean_output_distance <= step_sum + noise + 1e-9
    if not subadditive:
        logger.warning("path sweep failed the triangle inequality: %.4g > %.4g",
                       end_to_end.mean_output_distance, step_sum)
    c_sup = max((r.lipschitz_quotient for r in reports), default=0.0)
    return SweepResult(reports, end_to_end, c_sup, step_sum, subadditive)


# dynamic recourse


@dataclass
class RecourseResult:
    per_step: List[float]
    quotients: List[float]
    lambda2s: List[Optional[float]]
    total: float
    mean_quotient: float
    net_drift: float
    # per-unit-change recourse over n / lambda2_t; None off cut instances or when lambda2_t is 0
    spectral_quotients: List[Optional[float]]
    mean_spectral_quotient: Optional[float]


def recourse_sim(algo: Union[str, Algorithm], inst: Instance, updates: Sequence[Perturbation],
                 policy: str = SHARED, seed: int = 0,
                 params: Optional[AlgorithmParams] = None) -> RecourseResult:
    """Re-run ``algo`` after every update and record |out_t - out_{t+1}|_1."""
    algo = get_algorithm(algo) if isinstance(algo, str) else algo
    _check_kind(algo, inst)
    if policy not in POLICIES:
        raise ParameterError(f"tape policy must be one of {POLICIES}, got {policy!r}")
    params = AlgorithmParams.from_settings() if params is None else params
    master = RandomTape(seed=seed)

    def run(current: Instance, step: int) -> np.ndarray:
        tape = master.spawn(0) if policy == SHARED else master.spawn(step)
        return algo.round(algo.prepare(current, params), current, tape).output

    def spectral(current: Instance) -> Optional[float]:
        return lambda2(current.graph) if isinstance(current, CutInstance) else None

    current = inst
    first = previous = run(current, 0)
    per_step, quotients, lambda2s = [], [], [spectral(current)]
    spectral_quotients: List[Optional[float]] = []
    scale = 0.0
    for step, update in enumerate(updates, start=1):
        try:
            current = perturb_instance(current, update)
        except WeightFloorError as e:
            raise WeightFloorError(str(e), edge=e.edge, step=step) from e
        output = run(current, step)
        distance = float(np.abs(output - previous).sum())
        per_step.append(distance)
        quotients.append(distance / abs(update.delta) if update.delta else 0.0)
        lam = spectral(current)
        lambda2s.append(lam)
        if lam:
            spectral_quotients.append(quotients[-1] * lam / current.graph.n)
            scale += abs(update.delta) * current.graph.n / lam
        else:
            spectral_quotients.append(None)
        previous = output
    total = float(sum(per_step))
    changed = sum(abs(u.delta) for u in updates)
    return RecourseResult(per_step, quotients, lambda2s, total,
                          total / changed if changed else 0.0,
                          float(np.abs(previous - first).sum()),
                          spectral_quotients, total / scale if scale else None)


# samplers


def stable_sample_uniform(l: float, r: float, tape: RandomTape) -> float:
    """Uniform sample on [l, r] by inverse CDF on one shared draw."""
    if not l < r:
        raise ParameterError(f"need l < r, got [{l}, {r}]")
    return l + tape.uniform() * (r - l)


def coupled_expmech(x: Sequence[float], x_tilde: Sequence[float], eta: float,
                    tape: RandomTape) -> Tuple[int, int]:
    """Exponential-mechanism picks for x and x_tilde from one shared draw."""
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    u = tape.uniform()
    return (expmech_pick(expmech_probabilities(x, eta), u),
            expmech_pick(expmech_probabilities(x_tilde, eta), u))


# exact oracles


def _edmonds_karp(capacity: np.ndarray, source: int, sink: int) -> Tuple[float, np.ndarray]:
    """Max flow on a dense capacity matrix; returns the value and the source side of a min cut."""
    residual = capacity.astype(float).copy()
    size = residual.shape[0]
    tiny = 1e-12 * max(1.0, float(capacity.max(initial=0.0)))
    flow = 0.0

    def bfs():
        parent = np.full(size, -1)
        visited = np.zeros(size, dtype=bool)
        visited[source] = True
        queue = [source]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for v in np.flatnonzero((residual[u] > tiny) & ~visited):
                visited[v] = True
                parent[v] = u
                queue.append(int(v))
        return visited, parent

    while True:
        visited, parent = bfs()
        if not visited[sink]:
            return flow, visited
        path_flow = math.inf
        v = sink
        while v != source:
            path_flow = min(path_flow, residual[parent[v], v])
            v = parent[v]
        v = sink
        while v != source:
            u = parent[v]
            residual[u, v] -= path_flow
            residual[v, u] += path_flow
            v = u
        flow += path_flow


def mincut_maxflow(inst: CutInstance) -> CutResult:
    g, n = inst.graph, inst.n
    limit = setting("harness", "maxflow_max_n")
    if n > limit:
        raise SupportTooLargeError(f"max-flow oracle supports n <= {limit}, got {n}")
    big = float(g.weights.sum()) + 1.0
    capacity = np.zeros((n + 2, n + 2))
    for (u, v), w in zip(g.edges, g.weights):
        capacity[u, v] += w
        capacity[v, u] += w
    source, sink = n, n + 1
    for s in inst.S:
        capacity[source, s] = big
    for t in inst.T:
        capacity[t, sink] = big
    _, reachable = _edmonds_karp(capacity, source, sink)
    return cut_result(inst, np.flatnonzero(reachable[:n]), method="maxflow")


def _free_vertices(inst: CutInstance) -> List[int]:
    return [v for v in range(inst.n) if v not in inst.S and v not in inst.T]


def _enumerate_cuts(inst: CutInstance) -> Tuple[np.ndarray, np.ndarray]:
    """All feasible indicator rows (S fixed in, T fixed out) and their cut weights."""
    limit = setting("harness", "enumeration_max_n")
    if inst.n > limit:
        raise SupportTooLargeError(f"cut enumeration supports n <= {limit}, got {inst.n}")
    free = _free_vertices(inst)
    masks = np.arange(2 ** len(free))
    inside = np.zeros((masks.size, inst.n), dtype=bool)
    inside[:, sorted(inst.S)] = True
    for bit, v in enumerate(free):
        inside[:, v] = (masks >> bit) & 1
    us, vs = inst.graph.endpoints()
    weights = (inside[:, us] != inside[:, vs]).astype(float) @ inst.graph.weights
    return inside, weights


def mincut_enumerate(inst: CutInstance) -> CutResult:
    inside, weights = _enumerate_cuts(inst)
    best = int(np.argmin(weights))
    return cut_result(inst, np.flatnonzero(inside[best]), method="enumeration")


def mincut_exact(inst: CutInstance, method: str = "auto") -> CutResult:
    """Minimum S-T cut by max flow (n <= 200) or subset enumeration (n <= 16)."""
    if method == "maxflow" or (method == "auto" and inst.n <= setting("harness", "maxflow_max_n")):
        return mincut_maxflow(inst)
    if method in ("enumeration", "auto"):
        return mincut_enumerate(inst)
    raise ParameterError(f"unknown min-cut method {method!r}")


def mincut_balanced_exact(inst: CutInstance, beta: float) -> Optional[CutResult]:
    """Lightest S-T cut A with beta n <= |A| <= (1 - beta) n, or None when none exists."""
    inside, weights = _enumerate_cuts(inst)
    sizes = inside.sum(axis=1)
    ok = (sizes >= beta * inst.n - 1e-9) & (sizes <= (1.0 - beta) * inst.n + 1e-9)
    if not ok.any():
        return None
    candidates = np.flatnonzero(ok)
    best = int(candidates[np.argmin(weights[candidates])])
    return cut_result(inst, np.flatnonzero(inside[best]), method="enumeration")


__all__ = [
    "ALGORITHMS", "Algorithm", "AlgorithmParams", "AlgorithmRun", "LipschitzTrend",
    "PerturbationPath", "RandomTape", "RecourseResult", "StabilityReport", "SweepResult",
    "coupled_expmech", "coupled_runs", "emd_exact", "empirical_distribution", "estimate_lipschitz",
    "expmech_probabilities", "get_algorithm", "instance_weights", "instance_with_weights",
    "lipschitz_trend", "match_exact_small", "mincut_balanced_exact", "mincut_exact",
    "mincut_enumerate", "mincut_maxflow", "path_sweep", "perturb_instance", "pip_exact_small",
    "recourse_sim", "stable_sample_uniform",
]
