"""Command-line interface.

Subcommands: mincut, match, pip, stability, recourse, sweep, gen, validate.
Every subcommand except ``validate`` requires ``--seed``. Exit codes: 0 on
success, 2 when an instance, parameter or configuration check fails, 3 when a
solver does not converge, 130 on interrupt.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import harness
from .exceptions import (InstanceError, InstanceFormatError, InstanceTypeError, LipgraphException,
                         NumericError, ParameterError, ReportFormatError, SolverConvergenceError)
from .graph_core import (CutInstance, Perturbation, dumps_instance, lambda2,
                         lower_bound_instance, random_bipartite_graph, random_cut_instance,
                         read_cut_instance, read_instance, write_instance)
from .log import configure_logging
from .matching import auction_round, solve_matching_fractional
from .min_cut import bucket_count, kway_parameters
from .pip import (PipInstance, pip_gamma, random_pip_instance, read_pip_instance, round_pip,
                  solve_pip_fractional, write_pip_instance)
from .reports import dumps_csv, dumps_json, emit, validate_report
from .settings import setting, use_settings_file
from .tape import RandomTape
from .trial_pool import TrialSwarm

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("mincut", "match", "pip", "stability", "recourse", "sweep", "gen", "validate")
MINCUT_ALGOS = ("expmech", "kway", "naive", "fractional", "threshold", "exact")
GEN_KINDS = ("cut", "bipartite", "lower-bound", "pip")


class RunStatus(Enum):
    SUCCESS = 0
    INVALID = 2
    NOT_CONVERGED = 3
    INTERRUPTED = 130


@dataclass
class RunConfig:
    subcommand: str
    instance: Optional[str] = None
    algo: Optional[str] = None
    eps: Optional[float] = None
    gamma: Optional[float] = None
    beta: Optional[float] = None
    Lambda: Optional[float] = None
    c: Optional[float] = None
    seed: Optional[int] = None
    trials: Optional[int] = None
    out: str = "json"
    output: Optional[str] = None
    jobs: int = 1
    policy: str = harness.SHARED
    edge: int = 0
    delta: Optional[float] = None
    relative_delta: Optional[float] = None
    trend: bool = False
    steps: int = 8
    target: Optional[str] = None
    lower_bound: Optional[Tuple[int, float, float]] = None
    b: str = "default"
    kind: str = "cut"
    n: int = 8
    p: float = 0.5
    size_u: int = 3
    size_r: int = 3
    b_max: int = 1
    rows: int = 3
    columns: int = 5
    budget: float = 1.0
    C: float = 1.0
    f_n: float = 1.0
    tilde: bool = False
    path: Optional[str] = None

    def __post_init__(self):
        if self.trials is None:
            defaults = {"stability": ("harness", "trials"), "sweep": ("harness", "min_trials")}
            self.trials = setting(*defaults[self.subcommand]) if self.subcommand in defaults else 1
        if self.lower_bound is not None:
            self.lower_bound = tuple(self.lower_bound)

    @staticmethod
    def from_args(args: argparse.Namespace) -> "RunConfig":
        known = {f.name for f in fields(RunConfig)}
        values = {k: v for k, v in vars(args).items() if k in known and v is not None}
        return RunConfig(**values)

    def params(self) -> harness.AlgorithmParams:
        if self.algo in ("kway", "cut-kway"):
            # k-way rounding has its own gamma and eps defaults
            return harness.AlgorithmParams.from_settings(kway_eps=self.eps, kway_gamma=self.gamma,
                                                         beta=self.beta, Lambda=self.Lambda)
        return harness.AlgorithmParams.from_settings(eps=self.eps, gamma=self.gamma, beta=self.beta,
                                                     Lambda=self.Lambda)

    def validate(self) -> None:
        """Check every precondition before any work; raises ParameterError."""
        if self.subcommand not in SUBCOMMANDS:
            raise ParameterError(f"unknown subcommand {self.subcommand!r}")
        if self.subcommand == "validate":
            if not self.path:
                raise ParameterError("validate needs a file path")
            return
        if self.seed is None:
            raise ParameterError("--seed is required (no wall-clock default)")
        if self.seed < 0:
            raise ParameterError("--seed must be >= 0")
        if self.trials < 1:
            raise ParameterError("--trials must be >= 1")
        if self.jobs < 1:
            raise ParameterError("--jobs must be >= 1")
        if self.out not in ("json", "csv"):
            raise ParameterError("--out must be json or csv")
        if self.policy not in harness.POLICIES:
            raise ParameterError(f"--policy must be one of {harness.POLICIES}")
        params = self.params()
        if params.eps <= 0:
            raise ParameterError("eps > 0 is required")
        if params.Lambda <= 0:
            raise ParameterError("Lambda > 0 is required")
        if self.c is not None and self.c < 1:
            raise ParameterError("c >= 1 is required")
        needs_instance = self.subcommand in ("mincut", "match", "pip", "stability", "recourse")
        if self.subcommand == "sweep":
            needs_instance = self.lower_bound is None
            if needs_instance and not self.target:
                raise ParameterError("sweep needs --target or --lower-bound")
            if self.steps < 1:
                raise ParameterError("--steps must be >= 1")
        if needs_instance and not self.instance:
            raise ParameterError(f"{self.subcommand} needs --instance")
        if self.subcommand == "mincut":
            if self.algo not in MINCUT_ALGOS:
                raise ParameterError(f"--algo must be one of {MINCUT_ALGOS}")
            if self.algo == "expmech":
                bucket_count(params.gamma)
            if self.algo == "kway":
                kway_parameters(params.beta, params.kway_gamma)
        if self.subcommand in ("stability", "recourse", "sweep"):
            harness.get_algorithm(self.algo)
        if self.subcommand == "gen" and self.kind not in GEN_KINDS:
            raise ParameterError(f"--kind must be one of {GEN_KINDS}")


@dataclass
class RunResult:
    status: RunStatus
    message: str = ""
    kind: Optional[str] = None
    body: Dict[str, Any] = field(default_factory=dict)
    rows: List[Sequence[Any]] = field(default_factory=list)
    text: Optional[str] = None


def _rounds(config: RunConfig, func) -> List[Any]:
    master = RandomTape(seed=config.seed)
    with TrialSwarm(config.jobs) as swarm:
        return swarm.map(lambda t: func(master.spawn(t)), config.trials)


def _run_mincut(config: RunConfig) -> RunResult:
    inst = read_cut_instance(config.instance)
    algorithm = harness.get_algorithm(f"cut-{config.algo}")
    state = algorithm.prepare(inst, config.params())
    runs = _rounds(config, lambda tape: algorithm.round(state, inst, tape))
    weight_mean, weight_sem = harness.mean_and_sem([r.objective for r in runs])
    body: Dict[str, Any] = {
        "algorithm": algorithm.name, "instance_digest": inst.digest(), "trials": config.trials,
        "seed": config.seed, "weight_mean": weight_mean, "weight_sem": weight_sem,
        "feasible_rate": float(np.mean([r.feasible for r in runs])),
    }
    if config.algo == "fractional":
        body["y"] = runs[0].output
        body["objective_f"] = runs[0].objective
        rows = [(t, r.objective, r.feasible, None) for t, r in enumerate(runs)]
    else:
        first = runs[0]
        body["cut"] = np.flatnonzero(first.output > 0.5)
        body["weight"] = first.objective
        body["feasible"] = first.feasible
        rows = [(t, r.objective, r.feasible, int((r.output > 0.5).sum())) for t, r in enumerate(runs)]
    if config.algo == "kway":
        body.update(gamma=state.gamma, k=state.k, r_range=[state.r_min, state.r_max], balanced=state.balanced)
    return RunResult(RunStatus.SUCCESS, kind="mincut", body=body, rows=rows)


def _read_matching_graph(config: RunConfig):
    g = read_instance(config.instance)
    if g.bipartition is None:
        raise InstanceTypeError("match needs an instance with a 'bipartite U_size' header")
    if config.b == "default":
        return g.with_capacities(None)
    if config.b != "file":
        raise ParameterError("--b must be 'default' or 'file'")
    return g


def _run_match(config: RunConfig) -> RunResult:
    g = _read_matching_graph(config)
    eps = config.params().eps
    frac = solve_matching_fractional(g, eps)
    matchings = _rounds(config, lambda tape: auction_round(frac, g, tape))
    weight_mean, weight_sem = harness.mean_and_sem([m.weight for m in matchings])
    body = {
        "instance_digest": g.digest(), "trials": config.trials, "seed": config.seed, "eps": eps,
        "x": frac.x, "fractional_objective": frac.objective, "weight_mean": weight_mean,
        "weight_sem": weight_sem, "matching": sorted(matchings[0].M), "weight": matchings[0].weight,
    }
    rows = [(t, m.weight, len(m.M)) for t, m in enumerate(matchings)]
    return RunResult(RunStatus.SUCCESS, kind="match", body=body, rows=rows)


def _read_pip(config: RunConfig) -> PipInstance:
    inst = read_pip_instance(config.instance)
    if config.c is not None:
        inst = PipInstance(inst.A, inst.b, inst.w, config.c)
    return inst


def _run_pip(config: RunConfig) -> RunResult:
    inst = _read_pip(config)
    x = solve_pip_fractional(inst)
    solutions = _rounds(config, lambda tape: round_pip(x, inst, tape))
    value_mean, value_sem = harness.mean_and_sem([s.value for s in solutions])
    body = {
        "instance_digest": harness.instance_digest(inst), "trials": config.trials, "seed": config.seed,
        "gamma": pip_gamma(inst), "x": x, "fractional_value": float(inst.w @ x),
        "value_mean": value_mean, "value_sem": value_sem,
        "feasible_rate": float(np.mean([s.feasible for s in solutions])),
        "y": solutions[0].y, "value": solutions[0].value, "feasible": solutions[0].feasible,
    }
    rows = [(t, s.value, s.feasible, int(s.y.sum())) for t, s in enumerate(solutions)]
    return RunResult(RunStatus.SUCCESS, kind="pip", body=body, rows=rows)


def _load_for(algorithm: harness.Algorithm, path: str):
    if algorithm.kind == "cut":
        return read_cut_instance(path)
    if algorithm.kind == "match":
        return read_instance(path)
    return read_pip_instance(path)


def _run_stability(config: RunConfig) -> RunResult:
    algorithm = harness.get_algorithm(config.algo)
    inst = _load_for(algorithm, config.instance)
    params = config.params()
    if config.trend:
        trend = harness.lipschitz_trend(algorithm, inst, config.edge, config.trials, config.policy,
                                        config.seed, params, config.jobs)
        relative = sorted(setting("harness", "trend_relative_deltas"), reverse=True)
        body = {"algorithm": algorithm.name, "reports": [r.to_dict() for r in trend.reports],
                "monotone": trend.monotone}
        rows = [(rel, r.delta, r.mean_output_distance, r.distance_sem, r.lipschitz_quotient)
                for rel, r in zip(relative, trend.reports)]
        return RunResult(RunStatus.SUCCESS, kind="trend", body=body, rows=rows)
    weights = harness.instance_weights(inst)
    if not 0 <= config.edge < weights.size:
        raise ParameterError(f"--edge must lie in [0, {weights.size})")
    if config.delta is not None:
        delta = config.delta
    else:
        relative = config.relative_delta
        if relative is None:
            relative = setting("harness", "max_relative_delta")
        delta = relative * float(weights[config.edge])
    report = harness.estimate_lipschitz(algorithm, inst, Perturbation(config.edge, delta), config.trials,
                                        config.policy, config.seed, params, config.jobs)
    rows = [(t, d, o) for t, (d, o) in enumerate(zip(report.distances, report.objectives))]
    return RunResult(RunStatus.SUCCESS, kind="stability", body=report.to_dict(), rows=rows)


def _run_recourse(config: RunConfig) -> RunResult:
    algorithm = harness.get_algorithm(config.algo)
    inst = _load_for(algorithm, config.instance)
    weights = harness.instance_weights(inst)
    magnitude = config.delta if config.delta is not None else (
        setting("harness", "max_relative_delta") * float(weights.min()))
    rng = np.random.default_rng(config.seed)
    updates = [Perturbation(int(rng.integers(weights.size)), float(rng.choice([-1.0, 1.0]) * magnitude))
               for _ in range(config.steps)]
    result = harness.recourse_sim(algorithm, inst, updates, config.policy, config.seed, config.params())
    body = {
        "algorithm": algorithm.name, "instance_digest": harness.instance_digest(inst), "seed": config.seed,
        "updates": [[u.edge, u.delta] for u in updates], "per_step": result.per_step,
        "quotients": result.quotients, "lambda2s": result.lambda2s, "total": result.total,
        "mean_quotient": result.mean_quotient, "net_drift": result.net_drift,
        "spectral_quotients": result.spectral_quotients,
        "mean_spectral_quotient": result.mean_spectral_quotient,
    }
    rows = [(step + 1, r, q, l2, s) for step, (r, q, l2, s) in enumerate(
        zip(result.per_step, result.quotients, result.lambda2s[1:], result.spectral_quotients))]
    return RunResult(RunStatus.SUCCESS, kind="recourse", body=body, rows=rows)


def _run_sweep(config: RunConfig) -> RunResult:
    algorithm = harness.get_algorithm(config.algo)
    if config.lower_bound is not None:
        n, C, f_n = config.lower_bound
        inst, g, g_tilde = lower_bound_instance(int(n), float(C), float(f_n))
        start, end = g.weights, g_tilde.weights
    else:
        inst = _load_for(algorithm, config.instance)
        start = harness.instance_weights(inst)
        end = harness.instance_weights(_load_for(algorithm, config.target))
    path = harness.PerturbationPath(start, end, config.steps)
    result = harness.path_sweep(algorithm, inst, path, config.trials, config.policy, config.seed,
                                config.params(), config.jobs)
    body = {
        "algorithm": algorithm.name, "instance_digest": harness.instance_digest(inst),
        "steps": [r.to_dict() for r in result.steps], "end_to_end": result.end_to_end.to_dict(),
        "c_sup": result.c_sup, "step_distance_sum": result.step_distance_sum,
        "subadditive": result.subadditive,
    }
    rows = [(i + 1, r.delta, r.mean_output_distance, r.distance_sem, r.lipschitz_quotient)
            for i, r in enumerate(result.steps)]
    return RunResult(RunStatus.SUCCESS, kind="sweep", body=body, rows=rows)


def _run_gen(config: RunConfig) -> RunResult:
    rng = np.random.default_rng(config.seed)
    if config.kind == "pip":
        inst = random_pip_instance(config.rows, config.columns, rng, config.budget, config.c or 1.0)
        if config.output:
            write_pip_instance(config.output, inst)
            return RunResult(RunStatus.SUCCESS, f"wrote {config.output}")
        return RunResult(RunStatus.SUCCESS, text=json.dumps(inst.to_dict(), indent=2, sort_keys=True) + "\n")
    cut: Optional[CutInstance] = None
    if config.kind == "cut":
        cut = random_cut_instance(config.n, config.p, rng)
        g = cut.graph
    elif config.kind == "bipartite":
        g = random_bipartite_graph(config.size_u, config.size_r, config.p, rng, config.b_max)
    else:
        cut, g, g_tilde = lower_bound_instance(config.n, config.C, config.f_n)
        if config.tilde:
            g = g_tilde
            cut = cut.with_graph(g_tilde)
    if config.output:
        write_instance(config.output, g, cut)
        return RunResult(RunStatus.SUCCESS, f"wrote {config.output}")
    return RunResult(RunStatus.SUCCESS, text=dumps_instance(g, cut))


def _run_validate(config: RunConfig) -> RunResult:
    path = Path(config.path)
    text = path.read_text(encoding="utf-8")
    summary: Dict[str, Any]
    if text.startswith("# lipgraph-csv"):
        summary = validate_report(path)
    else:
        try:
            document = json.loads(text)
        except json.JSONDecodeError:
            document = None
        if isinstance(document, dict) and "kind" in document:
            summary = validate_report(path)
        elif isinstance(document, dict) and "A" in document:
            inst = read_pip_instance(path)
            summary = {"kind": "pip-instance", "p": inst.p, "m": inst.m, "B": inst.B,
                       "gamma": pip_gamma(inst), "digest": harness.instance_digest(inst)}
        else:
            g = read_instance(path)
            try:
                has_cut = read_cut_instance(path) is not None
            except InstanceFormatError:
                has_cut = False
            summary = {"kind": "instance", "n": g.n, "m": g.m, "bipartite": g.is_bipartite,
                       "digest": g.digest(), "lambda2": lambda2(g) if g.n >= 2 else 0.0,
                       "cut": has_cut}
    summary["valid"] = True
    return RunResult(RunStatus.SUCCESS, text=json.dumps(summary, indent=2, sort_keys=True) + "\n")


HANDLERS = {
    "mincut": _run_mincut, "match": _run_match, "pip": _run_pip, "stability": _run_stability,
    "recourse": _run_recourse, "sweep": _run_sweep, "gen": _run_gen, "validate": _run_validate,
}


def execute(config: RunConfig) -> RunResult:
    """Validate the configuration and run it, mapping failures to a status."""
    try:
        config.validate()
        result = HANDLERS[config.subcommand](config)
    except (InstanceError, InstanceTypeError, ParameterError, ReportFormatError) as e:
        return RunResult(RunStatus.INVALID, str(e))
    except (SolverConvergenceError, NumericError) as e:
        return RunResult(RunStatus.NOT_CONVERGED, str(e))
    except (OSError, yaml.YAMLError) as e:
        return RunResult(RunStatus.INVALID, f"{type(e).__name__}: {e}")
    except LipgraphException as e:
        return RunResult(RunStatus.INVALID, str(e))
    if result.kind is not None:
        if config.out == "csv":
            result.text = dumps_csv(result.kind, result.rows)
        else:
            result.text = dumps_json(result.kind, result.body)
    return result


def run(config: RunConfig) -> int:
    """Run one configuration, write its report and return the exit code."""
    result = execute(config)
    if result.status is RunStatus.SUCCESS:
        if result.text is not None:
            emit(result.text, config.output if config.subcommand not in ("gen", "validate") else None)
        elif result.message:
            logger.info(result.message)
    else:
        logger.error(result.message)
        print(f"error: {result.message}", file=sys.stderr)
    return result.status.value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipgraph", description="Lipschitz-continuous graph algorithms")
    parser.add_argument("--config", help="YAML file merged over the default settings")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (required)")
    common.add_argument("--trials", type=int, help="number of trials (default 1)")
    common.add_argument("--out", choices=("json", "csv"), help="report format (default json)")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--jobs", type=int, help="worker threads for trials (default 1)")

    algo_params = argparse.ArgumentParser(add_help=False)
    algo_params.add_argument("--eps", type=float)
    algo_params.add_argument("--gamma", type=float)
    algo_params.add_argument("--beta", type=float)
    algo_params.add_argument("--lambda", dest="Lambda", type=float)

    mincut = sub.add_parser("mincut", parents=[common, algo_params], help="minimum S-T cut")
    mincut.add_argument("--instance", required=True)
    mincut.add_argument("--algo", choices=MINCUT_ALGOS, default="expmech")

    match = sub.add_parser("match", parents=[common, algo_params], help="bipartite b-matching")
    match.add_argument("--instance", required=True)
    match.add_argument("--b", choices=("default", "file"), default="default",
                       help="capacities: all ones, or the cap lines of the instance file")

    pip = sub.add_parser("pip", parents=[common], help="packing integer program")
    pip.add_argument("--instance", required=True)
    pip.add_argument("--c", type=float, help="override the instance's confidence parameter")

    coupled = argparse.ArgumentParser(add_help=False)
    coupled.add_argument("--algo", required=True, choices=sorted(harness.ALGORITHMS))
    coupled.add_argument("--policy", choices=harness.POLICIES)

    stability = sub.add_parser("stability", parents=[common, algo_params, coupled],
                               help="coupled-run Lipschitz estimate")
    stability.add_argument("--instance", required=True)
    stability.add_argument("--edge", type=int)
    stability.add_argument("--delta", type=float)
    stability.add_argument("--relative-delta", dest="relative_delta", type=float)
    stability.add_argument("--trend", action="store_true", help="report quotients at decreasing deltas")

    recourse = sub.add_parser("recourse", parents=[common, algo_params, coupled],
                              help="dynamic recourse under random weight updates")
    recourse.add_argument("--instance", required=True)
    recourse.add_argument("--steps", type=int)
    recourse.add_argument("--delta", type=float, help="update magnitude")

    sweep = sub.add_parser("sweep", parents=[common, algo_params, coupled], help="perturbation path sweep")
    sweep.add_argument("--instance")
    sweep.add_argument("--target", help="instance holding the end weights")
    sweep.add_argument("--lower-bound", dest="lower_bound", nargs=3, type=float, metavar=("N", "C", "F_N"))
    sweep.add_argument("--steps", type=int)

    gen = sub.add_parser("gen", parents=[common], help="generate instances")
    gen.add_argument("--kind", choices=GEN_KINDS, default="cut")
    gen.add_argument("--n", type=int)
    gen.add_argument("--p", type=float)
    gen.add_argument("--size-u", dest="size_u", type=int)
    gen.add_argument("--size-r", dest="size_r", type=int)
    gen.add_argument("--b-max", dest="b_max", type=int)
    gen.add_argument("--rows", type=int)
    gen.add_argument("--columns", type=int)
    gen.add_argument("--budget", type=float)
    gen.add_argument("--c", type=float)
    gen.add_argument("--C", dest="C", type=float)
    gen.add_argument("--f-n", dest="f_n", type=float)
    gen.add_argument("--tilde", action="store_true", help="lower bound: write the perturbed weights")

    validate = sub.add_parser("validate", help="check an instance or report file")
    validate.add_argument("path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging("DEBUG" if args.verbose else None)
    use_settings_file(args.config)
    try:
        config = RunConfig.from_args(args)
    except (OSError, yaml.YAMLError, ParameterError) as e:
        logger.error("invalid configuration: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return RunStatus.INVALID.value
    return run(config)
