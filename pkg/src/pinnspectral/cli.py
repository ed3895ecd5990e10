"""Command-line driver: train, sweep, evolve, steady and oracle runs.

Every command reads an optional JSON config (validated, unknown keys
rejected), applies flag overrides, writes CSV output named
``{command}_{problem}_{arch}.csv`` into the output directory and a
``.manifest.json`` next to it recording everything needed to rerun.

CSV schemas
-----------
train     epoch, loss
sweep     r, err_L2, err_Linf, res_L2, res_Linf, cond_flag
evolve    same columns, errors are ``E_{r,2}`` / ``E_{r,inf}`` and residuals
          time means; the trajectory at ``r*`` goes to ``*_traj.csv`` with
          columns t, err_L2, err_Linf, res_L2, res_Linf and a summary row
steady    same columns as sweep, for the final pseudo-time state
oracle    same columns as sweep, Legendre basis
"""

import argparse
import hashlib
import json
import logging
import platform
import sys
import warnings
from importlib import metadata
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .basis import LegendreBasis, OrthonormalBasis
from .network import init_network, load_network
from .nitsche import DEFAULT_BETA, rank_sweep
from .problems import PROBLEM_IDS, EvolutionProblem, PoissonProblem, get_problem
from .quadrature import build_rule
from .timestep import InstabilityError, evolution_sweep, legendre_reference, steady_sweep
from .trainer import TrainConfig, train_adam

logger = logging.getLogger("pinnspectral")

COMMANDS = ("train", "sweep", "evolve", "steady", "oracle")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TrainSection(_Strict):
    learning_rate: float = Field(1e-3, gt=0)
    epochs: int = Field(5000, ge=0)
    n_collocation: Optional[int] = Field(None, ge=1)
    n_boundary: int = Field(400, ge=1)
    boundary_weight: float = Field(1.0, gt=0)


class QuadratureSection(_Strict):
    order: Optional[int] = Field(None, ge=2)
    fine_order: Optional[int] = Field(None, ge=2)


class TimeSection(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    T: Optional[float] = Field(None, gt=0)
    tol: float = Field(1e-12, gt=0)
    jump_levels: int = Field(4, ge=1)
    reference_degree: int = Field(48, ge=1)


class RunConfig(_Strict):
    """Validated run configuration; every field has a default."""

    problem: str = "poisson_1d"
    problem_params: dict = Field(default_factory=dict)
    arch: List[int] = Field(default_factory=lambda: [1, 30, 30, 1])
    seed: int = 0
    train: TrainSection = Field(default_factory=TrainSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    beta: Optional[float] = Field(None, gt=0)
    r_list: Optional[Union[str, List[int]]] = None
    time: TimeSection = Field(default_factory=TimeSection)
    oracle_legendre: Optional[int] = Field(None, ge=0)
    out: str = "runs"

    @field_validator("problem")
    @classmethod
    def _known_problem(cls, v):
        if v not in PROBLEM_IDS:
            raise ValueError(f"unknown problem {v!r}; known: {', '.join(PROBLEM_IDS)}")
        return v

    @field_validator("arch")
    @classmethod
    def _arch_shape(cls, v):
        if len(v) < 3 or v[-1] != 1 or v[0] not in (1, 2) or min(v) < 1:
            raise ValueError("arch must look like [d_in, widths..., 1] with d_in in {1, 2}")
        return v

    def digest(self):
        text = json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def parse_r_list(spec):
    """``"a:b:step"`` (inclusive of ``b``), ``"a:b"``, ``"a,b,c"`` or a list of ints."""
    if spec is None:
        return None
    if isinstance(spec, (list, tuple)):
        return [int(r) for r in spec]
    spec = spec.strip()
    if not spec:
        return []
    if ":" in spec:
        parts = [int(p) for p in spec.split(":")]
        if len(parts) not in (2, 3):
            raise ValueError(f"bad rank range {spec!r}")
        a, b = parts[:2]
        step = parts[2] if len(parts) == 3 else 1
        if step <= 0:
            raise ValueError("rank step must be positive")
        return list(range(a, b + 1, step))
    return [int(p) for p in spec.split(",")]


def resolve_ranks(spec, r_max):
    """Rank list clipped to ``[0, r_max)``; a missing spec means all ranks."""
    ranks = list(range(r_max)) if spec is None else parse_r_list(spec)
    if not ranks:
        raise ValueError("empty rank list")
    if any(r < 0 for r in ranks):
        raise ValueError("ranks must be non-negative")
    kept = sorted({r for r in ranks if r < r_max})
    if len(kept) < len(set(ranks)):
        warnings.warn(f"rank list clipped to r_max - 1 = {r_max - 1}", stacklevel=2)
    if not kept:
        raise ValueError(f"no rank below r_max = {r_max}")
    return kept


def load_config(path=None, **overrides):
    """Read a JSON config and apply non-``None`` overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.model_validate(data)


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "scikit-learn", "pydantic"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _arch_label(cfg, legendre=None):
    if legendre is not None:
        return f"legendre{legendre}"
    return "-".join(str(d) for d in cfg.arch)


def _rules(domain, cfg):
    if domain.dim == 1:
        order, fine = 200, 400
    else:
        order, fine = 60, 120
    order = cfg.quadrature.order or order
    fine = cfg.quadrature.fine_order or max(fine, order)
    return build_rule(domain, order), build_rule(domain, fine)


def _write_manifest(path, command, cfg, outputs, network_sha=None, extra=None):
    manifest = {
        "command": command,
        "config": cfg.model_dump(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": _versions(),
        "network_sha256": network_sha,
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, default=float)
    return manifest


def _basis(cfg, problem, network_path, rule):
    """Fitted basis, its ``beta`` and the network hash (``None`` for Legendre)."""
    if cfg.oracle_legendre is not None:
        if problem.domain.kind != "interval":
            raise ValueError("Legendre oracle mode needs a 1D problem")
        a, b = problem.domain.bounds
        basis = LegendreBasis(cfg.oracle_legendre, a, b).fit()
        beta = cfg.beta if cfg.beta is not None else basis.coercive_beta()
        return basis, beta, None, None
    if network_path is None:
        raise ValueError("a network file is required (--network) unless --oracle-legendre is given")
    path = Path(network_path)
    if not path.is_file():
        raise FileNotFoundError(f"network file not found: {path}")
    net = load_network(path)
    if net.input_dim != problem.domain.dim:
        raise ValueError(f"network input dim {net.input_dim} does not match the problem dimension {problem.domain.dim}")
    basis = OrthonormalBasis(net).fit(rule.interior_nodes, sample_weight=rule.interior_weights)
    beta = cfg.beta if cfg.beta is not None else DEFAULT_BETA
    return basis, beta, net, net.digest()


def _stem(command, cfg, legendre=None):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{command}_{cfg.problem}_{_arch_label(cfg, legendre)}"


def cmd_train(cfg):
    problem = get_problem(cfg.problem, **cfg.problem_params)
    if not isinstance(problem, PoissonProblem):
        raise ValueError(f"training needs a Poisson problem, got {cfg.problem}")
    if cfg.arch[0] != problem.domain.dim:
        raise ValueError("arch input width does not match the problem dimension")
    n_coll = cfg.train.n_collocation or (2000 if problem.domain.dim == 1 else 8000)
    tc = TrainConfig(cfg.train.learning_rate, cfg.train.epochs, n_coll, cfg.train.n_boundary,
                     cfg.train.boundary_weight, cfg.seed)
    net0 = init_network(cfg.arch, cfg.seed)
    net, history = train_adam(net0, problem, tc)
    stem = _stem("train", cfg)
    net_path = stem.with_suffix(".json")
    csv_path = stem.with_suffix(".csv")
    net.save(net_path)
    with open(csv_path, "w") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(history):
            fh.write(f"{epoch},{float(loss)!r}\n")
    _write_manifest(stem.with_suffix(".manifest.json"), "train", cfg, [net_path, csv_path], net.digest(),
                    {"train_config": tc.to_dict(), "final_loss": float(history[-1])})
    print(f"trained {cfg.problem} {_arch_label(cfg)}: loss {history[0]:.3e} -> {history[-1]:.3e}")
    print(f"network: {net_path}")
    return {"network": net_path, "loss_csv": csv_path, "history": history}


def _report_summary(report):
    best = report.record(report.best_r)
    print(f"r* = {report.best_r}  err_L2(r*) = {best.err_L2:.3e}  res_L2(r*) = {best.res_L2:.3e}")
    errs = report.column("err_L2")
    if np.any(np.isfinite(errs)):
        print(f"min err_L2 = {report.min_err_L2:.3e} at r = {report.argmin_err_L2}")


def cmd_sweep(cfg, network=None, command="sweep"):
    problem = get_problem(cfg.problem, **cfg.problem_params)
    if not isinstance(problem, PoissonProblem):
        raise ValueError(f"{command} needs a Poisson problem, got {cfg.problem}")
    rule, fine = _rules(problem.domain, cfg)
    basis, beta, net, sha = _basis(cfg, problem, network, rule)
    ranks = resolve_ranks(cfg.r_list, basis.r_max_)
    report = rank_sweep(basis, problem, ranks, beta, rule, fine, baseline=net.forward if net is not None else None)
    stem = _stem(command, cfg, cfg.oracle_legendre)
    csv_path = stem.with_suffix(".csv")
    report.to_csv(csv_path)
    extra = {"r_star": report.best_r, "beta": beta, "r_max": basis.r_max_, "ranks": ranks,
             "min_err_L2": report.min_err_L2, "baseline_L2": report.baseline_L2}
    _write_manifest(stem.with_suffix(".manifest.json"), command, cfg, [csv_path], sha, extra)
    if report.baseline_L2 is not None:
        print(f"network baseline err_L2 = {report.baseline_L2:.3e}")
    _report_summary(report)
    return {"csv": csv_path, "report": report}


def cmd_oracle(cfg, network=None):
    if cfg.oracle_legendre is None:
        cfg = cfg.model_copy(update={"oracle_legendre": 16})
    return cmd_sweep(cfg, None, command="oracle")


def _evolution_problem(cfg, command):
    problem = get_problem(cfg.problem, **cfg.problem_params)
    if not isinstance(problem, EvolutionProblem):
        raise ValueError(f"{command} needs a time-dependent or steady problem, got {cfg.problem}")
    if command == "evolve" and problem.is_steady:
        raise ValueError(f"{cfg.problem} has no exact transient; use the steady command")
    if command == "steady" and not problem.is_steady:
        raise ValueError(f"{cfg.problem} is transient; use the evolve command")
    return problem


def cmd_evolve(cfg, network=None):
    problem = _evolution_problem(cfg, "evolve")
    rule, fine = _rules(problem.domain, cfg)
    basis, beta, _, sha = _basis(cfg, problem, network, rule)
    ranks = resolve_ranks(cfg.r_list, basis.r_max_)
    report = evolution_sweep(problem, basis, ranks, cfg.time.dt, cfg.time.T, beta, rule, fine,
                             jump_levels=cfg.time.jump_levels)
    stem = _stem("evolve", cfg, cfg.oracle_legendre)
    csv_path = stem.with_suffix(".csv")
    report.to_csv(csv_path)
    outputs = [csv_path]
    if report.best_r in report.trajectories:
        traj_path = Path(f"{stem}_traj.csv")
        report.trajectories[report.best_r].to_csv(traj_path)
        outputs.append(traj_path)
    extra = {"r_star": report.best_r, "beta": beta, "r_max": basis.r_max_, "ranks": ranks,
             "dt": cfg.time.dt or problem.dt, "T": cfg.time.T or problem.T}
    _write_manifest(stem.with_suffix(".manifest.json"), "evolve", cfg, outputs, sha, extra)
    for rec in report.records:
        flag = "  unstable" if rec.cond_flag else ""
        print(f"r = {rec.r:3d}  E_2 = {rec.err_L2:.3e}  E_inf = {rec.err_Linf:.3e}{flag}")
    _report_summary(report)
    return {"csv": csv_path, "report": report}


def cmd_steady(cfg, network=None):
    problem = _evolution_problem(cfg, "steady")
    rule, fine = _rules(problem.domain, cfg)
    basis, beta, _, sha = _basis(cfg, problem, network, rule)
    ranks = resolve_ranks(cfg.r_list, basis.r_max_)
    reference = problem.reference
    ref_info = "exact"
    if reference is None:
        deg = cfg.time.reference_degree
        reference = legendre_reference(problem, deg, dt=cfg.time.dt, T=cfg.time.T, tol=cfg.time.tol)
        ref_info = f"legendre{deg}"
        logger.info("reference: Legendre degree %d, converged=%s", deg, reference.result.converged)
    report = steady_sweep(problem, basis, ranks, cfg.time.dt, cfg.time.T, cfg.time.tol, beta, rule, fine,
                          reference=reference, jump_levels=cfg.time.jump_levels)
    stem = _stem("steady", cfg, cfg.oracle_legendre)
    csv_path = stem.with_suffix(".csv")
    report.to_csv(csv_path)
    runs = {str(r): {"steps": res.steps, "t_final": res.t_final, "converged": res.converged,
                     "increment": res.increment} for r, res in report.results.items()}
    extra = {"r_star": report.best_r, "beta": beta, "r_max": basis.r_max_, "ranks": ranks,
             "reference": ref_info, "runs": runs}
    _write_manifest(stem.with_suffix(".manifest.json"), "steady", cfg, [csv_path], sha, extra)
    for r, res in report.results.items():
        state = "converged" if res.converged else "not converged"
        print(f"r = {r:3d}  {state} at t = {res.t_final:g}  err_Linf = {res.err_Linf:.3e}")
    _report_summary(report)
    return {"csv": csv_path, "report": report}


_DISPATCH = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "evolve": cmd_evolve,
    "steady": cmd_steady,
    "oracle": cmd_oracle,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="pinnspectral", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run config")
        p.add_argument("--problem", choices=PROBLEM_IDS)
        p.add_argument("--network", type=Path, help="trained network file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--oracle-legendre", type=int, metavar="DEGREE", help="use a Legendre basis")
        p.add_argument("--r-list", metavar="a:b:step")
        p.add_argument("--epochs", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, problem=args.problem, out=args.out, seed=args.seed,
                          oracle_legendre=args.oracle_legendre, r_list=args.r_list)
        if args.epochs is not None:
            cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"epochs": args.epochs})})
            cfg = RunConfig.model_validate(cfg.model_dump())
        handler = _DISPATCH[args.command]
        if args.command == "train":
            handler(cfg)
        else:
            handler(cfg, args.network)
    except InstabilityError as exc:
        print(f"error: run went unstable: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
