"""Weighted graphs, cut instances, Laplacian spectra, generators and file I/O.

Edges are kept in canonical lexicographic order of ``(u, v)`` with ``u < v``;
perturbations address edges by their index in that order, never by endpoints,
so coupled runs on perturbed copies stay aligned.

Instance text format::

    # comment
    n m [bipartite U_size]
    u v w          (m lines)
    cap v b_v      (optional, one line per vertex with a capacity)
    cut S: 0 1 / T: 5 6   (optional)

With ``bipartite k`` the left side U is vertices ``0..k-1``. A JSON mirror uses
the same field names: ``n``, ``m``, ``bipartite``, ``edges`` (``[u, v, w]``
triples), ``cap`` (``{vertex: b}``) and ``cut`` (``{"S": [...], "T": [...]}``).
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy import linalg

from .enforce_types import enforce_types
from .exceptions import (InstanceError, InstanceFormatError, ParameterError,
                         SpectralConvergenceError, WeightFloorError)
from .settings import setting

logger = logging.getLogger(__name__)


def weight_floor() -> float:
    return float(setting("graph", "weight_floor"))


Edge = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected simple graph with a positive weight per edge.

    ``bipartition`` is ``(U, R)``; ``capacities`` holds one integer ``b_v >= 1``
    per vertex. Instances are immutable; ``weights`` is a read-only array.
    """
    n: int
    edges: Tuple[Edge, ...]
    weights: np.ndarray
    bipartition: Optional[Tuple[FrozenSet[int], FrozenSet[int]]] = None
    capacities: Optional[np.ndarray] = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        if self.n < 1:
            raise InstanceError("graph needs at least one vertex")
        if len(self.edges) != weights.size:
            raise InstanceError(f"{len(self.edges)} edges but {weights.size} weights")
        previous = None
        for u, v in self.edges:
            if u == v:
                raise InstanceError(f"self-loop at vertex {u}")
            if not (0 <= u < v < self.n):
                raise InstanceError(f"edge ({u}, {v}) is not canonical (need 0 <= u < v < n)")
            if previous is not None and (u, v) <= previous:
                if (u, v) == previous:
                    raise InstanceError(f"duplicate edge ({u}, {v})")
                raise InstanceError("edges must be in lexicographic order")
            previous = (u, v)
        if weights.size and not np.all(np.isfinite(weights)):
            raise InstanceError("weights must be finite")
        floor = weight_floor()
        if weights.size and weights.min() < floor:
            raise InstanceError(f"every weight must be >= {floor}, got {weights.min()}")
        if self.bipartition is not None:
            left, right = (frozenset(int(x) for x in side) for side in self.bipartition)
            object.__setattr__(self, "bipartition", (left, right))
            if left & right or (left | right) != frozenset(range(self.n)):
                raise InstanceError("bipartition must split the vertex set")
            for u, v in self.edges:
                if (u in left) == (v in left):
                    raise InstanceError(f"edge ({u}, {v}) does not cross the bipartition")
        if self.capacities is not None:
            caps = np.array(self.capacities, dtype=int).reshape(-1)
            if caps.size != self.n:
                raise InstanceError("capacities need one entry per vertex")
            if caps.size and caps.min() < 1:
                raise InstanceError("capacities must be integers >= 1")
            caps.flags.writeable = False
            object.__setattr__(self, "capacities", caps)

    @staticmethod
    def from_edges(n: int, weighted_edges: Iterable[Tuple[int, int, float]],
                   bipartition=None, capacities=None) -> "WeightedGraph":
        """Build from ``(u, v, w)`` triples in any order and orientation."""
        canonical = sorted(((min(u, v), max(u, v)), float(w)) for u, v, w in weighted_edges)
        edges = tuple(e for e, _ in canonical)
        weights = np.array([w for _, w in canonical], dtype=float)
        return WeightedGraph(n, edges, weights, bipartition, capacities)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def is_bipartite(self) -> bool:
        return self.bipartition is not None

    def capacity(self, v: int) -> int:
        return 1 if self.capacities is None else int(self.capacities[v])

    def with_weights(self, weights) -> "WeightedGraph":
        return WeightedGraph(self.n, self.edges, np.asarray(weights, dtype=float),
                             self.bipartition, self.capacities)

    def with_capacities(self, capacities) -> "WeightedGraph":
        return WeightedGraph(self.n, self.edges, self.weights, self.bipartition, capacities)

    def edge_index(self, u: int, v: int) -> int:
        key = (min(u, v), max(u, v))
        try:
            return self.edges.index(key)
        except ValueError:
            raise InstanceError(f"no edge {key}") from None

    def endpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.edges:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        arr = np.array(self.edges, dtype=int)
        return arr[:, 0], arr[:, 1]

    def incidence_matrix(self) -> np.ndarray:
        """Signed vertex-edge incidence B (n x m), column e = 1_u - 1_v."""
        B = np.zeros((self.n, self.m))
        us, vs = self.endpoints()
        cols = np.arange(self.m)
        B[us, cols] = 1.0
        B[vs, cols] = -1.0
        return B

    def neighbors(self, v: int) -> List[Tuple[int, int]]:
        """``(neighbor, edge index)`` pairs sorted by neighbor."""
        out = [(b if a == v else a, i) for i, (a, b) in enumerate(self.edges) if v in (a, b)]
        return sorted(out)

    def indicator(self, A: Iterable[int]) -> np.ndarray:
        x = np.zeros(self.n)
        idx = list(A)
        if idx:
            x[idx] = 1.0
        return x

    def boundary(self, A: Iterable[int]) -> List[int]:
        """Indices of the edges with exactly one endpoint in A."""
        inside = self.indicator(A).astype(bool)
        us, vs = self.endpoints()
        return [int(e) for e in np.flatnonzero(inside[us] != inside[vs])]

    def cut_weight(self, A: Iterable[int]) -> float:
        return float(sum(self.weights[e] for e in self.boundary(A)))

    def to_networkx(self) -> nx.Graph:
        G = nx.Graph()
        G.add_nodes_from(range(self.n))
        for (u, v), w in zip(self.edges, self.weights):
            G.add_edge(u, v, weight=float(w))
        return G

    def to_dict(self) -> dict:
        data: dict = {
            "n": self.n,
            "m": self.m,
            "edges": [[u, v, float(w)] for (u, v), w in zip(self.edges, self.weights)],
        }
        if self.bipartition is not None:
            data["bipartite"] = len(self.bipartition[0])
        if self.capacities is not None:
            data["cap"] = {str(v): int(b) for v, b in enumerate(self.capacities)}
        return data

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class CutInstance:
    """A graph with disjoint terminal sets S and T and anchors s0 in S, t0 in T."""
    graph: WeightedGraph
    S: FrozenSet[int]
    T: FrozenSet[int]
    s0: int = -1
    t0: int = -1

    def __post_init__(self):
        S, T = frozenset(int(v) for v in self.S), frozenset(int(v) for v in self.T)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "T", T)
        if not S or not T:
            raise InstanceError("S and T must be non-empty")
        if S & T:
            raise InstanceError(f"S and T intersect in {sorted(S & T)}")
        if any(not 0 <= v < self.graph.n for v in S | T):
            raise InstanceError("terminal outside the vertex set")
        if self.s0 == -1:
            object.__setattr__(self, "s0", min(S))
        if self.t0 == -1:
            object.__setattr__(self, "t0", min(T))
        if self.s0 not in S or self.t0 not in T:
            raise InstanceError("anchors must satisfy s0 in S and t0 in T")

    @property
    def n(self) -> int:
        return self.graph.n

    def with_graph(self, graph: WeightedGraph) -> "CutInstance":
        return CutInstance(graph, self.S, self.T, self.s0, self.t0)

    def is_feasible(self, A: Iterable[int]) -> bool:
        A = frozenset(A)
        return self.S <= A and not (A & self.T) and 0 < len(A) < self.n

    def digest(self) -> str:
        payload = f"{self.graph.digest()}|S={sorted(self.S)}|T={sorted(self.T)}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Perturbation:
    edge: int
    delta: float


def laplacian(g: WeightedGraph) -> np.ndarray:
    """Unnormalized Laplacian B W B^T."""
    L = np.zeros((g.n, g.n))
    us, vs = g.endpoints()
    w = g.weights
    np.add.at(L, (us, us), w)
    np.add.at(L, (vs, vs), w)
    np.add.at(L, (us, vs), -w)
    np.add.at(L, (vs, us), -w)
    return L


@dataclass(frozen=True)
class Spectrum:
    lambda2: float
    lambda_max: float


def laplacian_extremes(g: WeightedGraph, tol: Optional[float] = None) -> Spectrum:
    """λ2 and λn of the Laplacian.

    Dense symmetric eigendecomposition up to ``graph.dense_eigen_max_n``
    vertices, deflated power iteration on ``c·I - L`` above that.
    """
    if g.n < 2:
        raise ParameterError("lambda2 needs n >= 2")
    tol = setting("graph", "lambda2_tol") if tol is None else tol
    L = laplacian(g)
    if g.n <= setting("graph", "dense_eigen_max_n"):
        eigenvalues = linalg.eigh(L, eigvals_only=True)
        lam2, lam_max = float(eigenvalues[1]), float(eigenvalues[-1])
    else:
        lam2, lam_max = _power_extremes(L, tol)
    if lam2 < tol:
        lam2 = 0.0
    return Spectrum(lam2, lam_max)


def _power_iteration(M: np.ndarray, x: np.ndarray, tol: float, max_iter: int,
                     deflate: Optional[np.ndarray] = None) -> float:
    value = 0.0
    for iteration in range(max_iter):
        if deflate is not None:
            x = x - deflate * (deflate @ x)
        y = M @ x
        if deflate is not None:
            y = y - deflate * (deflate @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new_value = float(x @ y)
        x = y / norm
        if abs(new_value - value) <= tol * max(1.0, abs(new_value)):
            logger.debug("power iteration converged after %d steps", iteration + 1)
            return new_value
        value = new_value
    raise SpectralConvergenceError(
        f"power iteration did not converge within {max_iter} iterations", last_iterate=x)


def _power_extremes(L: np.ndarray, tol: float) -> Tuple[float, float]:
    n = L.shape[0]
    max_iter = setting("graph", "power_iteration_max_iter")
    rng = np.random.default_rng(0)
    lam_max = _power_iteration(L, rng.standard_normal(n), tol, max_iter)
    c = 2.0 * float(np.max(np.diag(L)))  # Gershgorin: λn <= 2 max degree
    ones = np.ones(n) / math.sqrt(n)
    start = rng.standard_normal(n)
    top = _power_iteration(c * np.eye(n) - L, start, tol, max_iter, deflate=ones)
    return c - top, lam_max


def lambda2(g: WeightedGraph, tol: Optional[float] = None) -> float:
    """Algebraic connectivity; 0 for disconnected graphs."""
    return laplacian_extremes(g, tol).lambda2


def perturb(g: WeightedGraph, p: Perturbation) -> WeightedGraph:
    """Copy of ``g`` with one edge weight shifted by ``p.delta``."""
    if not 0 <= p.edge < g.m:
        raise ParameterError(f"edge index {p.edge} out of range [0, {g.m})")
    if p.delta == 0:
        return g
    new_weight = float(g.weights[p.edge]) + float(p.delta)
    floor = weight_floor()
    if new_weight <= floor:
        raise WeightFloorError(
            f"edge {p.edge} weight would drop to {new_weight} (floor {floor})", edge=p.edge)
    weights = g.weights.copy()
    weights[p.edge] = new_weight
    return g.with_weights(weights)


@enforce_types
def lower_bound_instance(n: int, C: float, f_n: float) -> Tuple[CutInstance, WeightedGraph, WeightedGraph]:
    """Complete bipartite instance on which any accurate cut algorithm is unstable.

    U has ``ceil((C+2) f_n)`` vertices (ids ``0..|U|-1``); s and t are the first two
    vertices of R. Under ``w`` the edges at s weigh ``1/(4(C+2))`` and all others 1;
    ``w_tilde`` does the same at t. Returns the instance on ``w`` and both graphs.
    """
    if C < 0 or f_n <= 0:
        raise ParameterError("lower bound needs C >= 0 and f_n > 0")
    if not f_n < n / (2.0 * (C + 2.0)):
        raise ParameterError(f"lower bound needs f_n < n / (2(C+2)) = {n / (2.0 * (C + 2.0))}")
    size_u = math.ceil((C + 2.0) * f_n)
    size_r = n - size_u
    if size_r < 2:
        raise ParameterError("lower bound needs |R| >= 2")
    s, t = size_u, size_u + 1
    light = 1.0 / (4.0 * (C + 2.0))
    edges = [(u, r) for u in range(size_u) for r in range(size_u, n)]
    w = np.array([light if s in e else 1.0 for e in edges])
    w_tilde = np.array([light if t in e else 1.0 for e in edges])
    bipartition = (frozenset(range(size_u)), frozenset(range(size_u, n)))
    g = WeightedGraph(n, tuple(edges), w, bipartition)
    g_tilde = g.with_weights(w_tilde)
    return CutInstance(g, frozenset({s}), frozenset({t}), s, t), g, g_tilde


def _quarter_weights(rng: np.random.Generator, count: int, low: float, high: float) -> np.ndarray:
    steps = np.arange(math.ceil(low * 4), math.floor(high * 4) + 1) / 4.0
    return rng.choice(steps, size=count)


def random_connected_graph(n: int, p: float, rng: np.random.Generator,
                           weight_range: Tuple[float, float] = (0.5, 2.0)) -> WeightedGraph:
    """G(n, p) plus a random spanning path, with quarter-step weights."""
    topology = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
    order = rng.permutation(n)
    topology.add_edges_from(zip(order[:-1].tolist(), order[1:].tolist()))
    edges = sorted((min(u, v), max(u, v)) for u, v in topology.edges())
    weights = _quarter_weights(rng, len(edges), *weight_range)
    return WeightedGraph(n, tuple(edges), weights)


def random_cut_instance(n: int, p: float, rng: np.random.Generator,
                        terminals: Tuple[int, int] = (1, 1),
                        weight_range: Tuple[float, float] = (0.5, 2.0)) -> CutInstance:
    g = random_connected_graph(n, p, rng, weight_range)
    picks = rng.permutation(n)
    S = frozenset(int(v) for v in picks[:terminals[0]])
    T = frozenset(int(v) for v in picks[terminals[0]:terminals[0] + terminals[1]])
    return CutInstance(g, S, T)


def random_bipartite_graph(size_u: int, size_r: int, p: float, rng: np.random.Generator,
                           b_max: int = 1,
                           weight_range: Tuple[float, float] = (0.5, 2.0)) -> WeightedGraph:
    """Random bipartite graph with U = 0..size_u-1; at least one edge per buyer."""
    edges = set()
    for u in range(size_u):
        for r in range(size_u, size_u + size_r):
            if rng.random() < p:
                edges.add((u, r))
        if not any(e[0] == u for e in edges):
            edges.add((u, int(size_u + rng.integers(size_r))))
    edges = sorted(edges)
    n = size_u + size_r
    weights = _quarter_weights(rng, len(edges), *weight_range)
    caps = rng.integers(1, b_max + 1, size=n) if b_max > 1 else None
    bipartition = (frozenset(range(size_u)), frozenset(range(size_u, n)))
    return WeightedGraph(n, tuple(edges), weights, bipartition, caps)


# instance files


def _format_ids(ids: Iterable[int]) -> str:
    return " ".join(str(v) for v in sorted(ids))


def dumps_instance(g: WeightedGraph, cut: Optional[CutInstance] = None) -> str:
    header = f"{g.n} {g.m}"
    if g.bipartition is not None:
        header += f" bipartite {len(g.bipartition[0])}"
    lines = [header]
    lines.extend(f"{u} {v} {float(w)!r}" for (u, v), w in zip(g.edges, g.weights))
    if g.capacities is not None:
        lines.extend(f"cap {v} {int(b)}" for v, b in enumerate(g.capacities))
    if cut is not None:
        lines.append(f"cut S: {_format_ids(cut.S)} / T: {_format_ids(cut.T)}")
    return "\n".join(lines) + "\n"


def _bipartition_from_prefix(n: int, size_u: int):
    if not 0 <= size_u <= n:
        raise InstanceError(f"bipartite size {size_u} outside [0, {n}]")
    return frozenset(range(size_u)), frozenset(range(size_u, n))


def _parse_ids(text: str, line_no: int) -> FrozenSet[int]:
    try:
        return frozenset(int(tok) for tok in text.split())
    except ValueError:
        raise InstanceFormatError(f"bad vertex id list {text!r}", line_no) from None


def loads_instance(text: str) -> Tuple[WeightedGraph, Optional[Tuple[FrozenSet[int], FrozenSet[int]]]]:
    """Parse the text format; returns the graph and the optional (S, T) block."""
    rows = [(i + 1, line.split("#", 1)[0].strip()) for i, line in enumerate(text.splitlines())]
    rows = [(i, line) for i, line in rows if line]
    if not rows:
        raise InstanceFormatError("empty instance file", 1)
    line_no, header = rows[0]
    tokens = header.split()
    try:
        n, m = int(tokens[0]), int(tokens[1])
    except (IndexError, ValueError):
        raise InstanceFormatError("header must be 'n m [bipartite U_size]'", line_no) from None
    bipartition = None
    if len(tokens) > 2:
        if len(tokens) != 4 or tokens[2] != "bipartite":
            raise InstanceFormatError("header must be 'n m [bipartite U_size]'", line_no)
        try:
            bipartition = _bipartition_from_prefix(n, int(tokens[3]))
        except ValueError:
            raise InstanceFormatError("bipartite size must be an integer", line_no) from None
    if len(rows) < 1 + m:
        raise InstanceFormatError(f"expected {m} edge lines", rows[-1][0])
    triples = []
    for line_no, line in rows[1:1 + m]:
        parts = line.split()
        try:
            if len(parts) != 3:
                raise ValueError
            triples.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise InstanceFormatError(f"edge line must be 'u v w', got {line!r}", line_no) from None
    caps: Dict[int, int] = {}
    cut = None
    for line_no, line in rows[1 + m:]:
        if line.startswith("cap"):
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError
                caps[int(parts[1])] = int(parts[2])
            except ValueError:
                raise InstanceFormatError(
                    f"capacity line must be 'cap v b_v', got {line!r}", line_no) from None
        elif line.startswith("cut"):
            body = line[3:].strip()
            if not body.startswith("S:") or "/ T:" not in body:
                raise InstanceFormatError("cut line must be 'cut S: ids / T: ids'", line_no)
            s_part, t_part = body[2:].split("/ T:", 1)
            cut = (_parse_ids(s_part, line_no), _parse_ids(t_part, line_no))
        else:
            raise InstanceFormatError(f"unexpected line {line!r}", line_no)
    capacities = None
    if caps:
        capacities = np.ones(n, dtype=int)
        for v, b in caps.items():
            if not 0 <= v < n:
                raise InstanceFormatError(f"capacity for unknown vertex {v}")
            capacities[v] = b
    try:
        graph = WeightedGraph.from_edges(n, triples, bipartition, capacities)
    except InstanceError as e:
        raise InstanceFormatError(str(e)) from e
    if graph.m != m:
        raise InstanceFormatError(f"header announces {m} edges, found {graph.m}")
    return graph, cut


def _from_json(data: dict):
    try:
        n, m = int(data["n"]), int(data["m"])
        triples = [(int(u), int(v), float(w)) for u, v, w in data["edges"]]
    except (KeyError, TypeError, ValueError) as e:
        raise InstanceFormatError(f"JSON instance needs n, m and [u, v, w] edges ({e})") from None
    try:
        bipartition = None
        if data.get("bipartite") is not None:
            bipartition = _bipartition_from_prefix(n, int(data["bipartite"]))
        capacities = None
        if data.get("cap"):
            capacities = np.ones(n, dtype=int)
            for v, b in data["cap"].items():
                if not 0 <= int(v) < n:
                    raise InstanceFormatError(f"capacity for unknown vertex {v}")
                capacities[int(v)] = int(b)
        graph = WeightedGraph.from_edges(n, triples, bipartition, capacities)
        cut = None
        if data.get("cut"):
            block = data["cut"]
            cut = (frozenset(int(v) for v in block["S"]), frozenset(int(v) for v in block["T"]))
    except InstanceFormatError:
        raise
    except InstanceError as e:
        raise InstanceFormatError(str(e)) from e
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise InstanceFormatError(f"malformed JSON instance field ({e})") from None
    if graph.m != m:
        raise InstanceFormatError(f"JSON instance announces {m} edges, found {graph.m}")
    return graph, cut


def _read(path: Union[str, Path]):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            return _from_json(json.loads(text))
        except json.JSONDecodeError as e:
            raise InstanceFormatError(f"invalid JSON: {e.msg}", e.lineno) from None
    return loads_instance(text)


def read_instance(path: Union[str, Path]) -> WeightedGraph:
    return _read(path)[0]


def read_cut_instance(path: Union[str, Path]) -> CutInstance:
    graph, cut = _read(path)
    if cut is None:
        raise InstanceFormatError(f"{path} has no 'cut S: ... / T: ...' block")
    return CutInstance(graph, cut[0], cut[1])


def write_instance(path: Union[str, Path], g: WeightedGraph, cut: Optional[CutInstance] = None) -> None:
    path = Path(path)
    if path.suffix == ".json":
        data = g.to_dict()
        if cut is not None:
            data["cut"] = {"S": sorted(cut.S), "T": sorted(cut.T)}
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        path.write_text(dumps_instance(g, cut), encoding="utf-8")


def anchor_range(inst: CutInstance, lo: float, hi: float) -> Optional[Tuple[float, float]]:
    """Feasible values of y_{s0} for the centered cut LP on box [lo, hi].

    With y_{t0} = y_{s0} + 1, every y_v between the anchors and <1, y> = 0,
    y_{s0} = a is feasible iff lo <= a, a + 1 <= hi and
    -(n - |S|)/n <= a <= -|T|/n. Returns None when no such a exists.
    """
    n = inst.n
    low = max(lo, -(n - len(inst.S)) / n)
    high = min(hi - 1.0, -len(inst.T) / n)
    if low > high + 1e-12:
        return None
    return low, max(low, high)
