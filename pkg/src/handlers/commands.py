"""
Command handlers.

Registers every subcommand on the router with its flags and writes the
JSON/CSV artifacts.
"""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import config
from src.certificates.chain_oracle import CHAINS, run_oracle
from src.services.pipeline_service import PipelineService
from src.utils.errors import ConfigError, GateFailure, GFError
from src.utils.report_writer import report_writer
from src.utils.run_config import PIPELINES, RunConfig, load_run_config
from src.utils.workers import worker_pool

logger = logging.getLogger(__name__)

Argument = Tuple[Tuple[str, ...], Dict[str, Any]]

EXIT_OK = 0
EXIT_GATE = 1
EXIT_CONFIG = 2

MIN_SPLITTING_ORDER = 0.9


def arg(*flags: str, **options) -> Argument:
    return flags, options


class CommandRouter:
    """Subcommand registry; handlers take parsed args and return an exit code."""

    def __init__(self):
        self.commands: Dict[str, Tuple[Callable, str, Sequence[Argument]]] = {}

    def command(self, name: str, help: str, *arguments: Argument):
        def register(handler: Callable[[argparse.Namespace], int]):
            self.commands[name] = (handler, help, arguments)
            return handler
        return register

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="main.py", description="Growth-fragmentation certificate toolkit")
        sub = parser.add_subparsers(dest="command", required=True)
        for name, (_, help, arguments) in self.commands.items():
            p = sub.add_parser(name, help=help)
            p.add_argument("--config", help="run config JSON")
            p.add_argument("--out", help="main artifact path")
            p.add_argument("--threads", type=int, default=None, help="worker cap")
            p.add_argument("--seed", type=int, default=None, help="seed for randomized suites")
            for flags, options in arguments:
                p.add_argument(*flags, **options)
        return parser

    def dispatch(self, argv: Optional[List[str]] = None) -> int:
        args = self.build_parser().parse_args(argv)
        handler = self.commands[args.command][0]
        try:
            if args.threads is not None:
                try:
                    worker_pool.configure(args.threads)
                except ValueError as e:
                    raise ConfigError(str(e)) from e
            return handler(args)
        except ConfigError as e:
            logger.error(f"Configuration error: {e}")
            return EXIT_CONFIG
        except GateFailure as e:
            logger.error(f"Gate failed: {e}")
            return EXIT_GATE
        except GFError as e:
            logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
            return EXIT_GATE


# Global router instance
router = CommandRouter()


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _run_config(args: argparse.Namespace, **certificate) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg.with_overrides(**certificate)


def _out(args: argparse.Namespace, cfg: Optional[RunConfig], default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    directory = cfg.output.dir if cfg is not None else config.OUTPUT_DIR
    return Path(directory) / default_name


def _companion(path: Path) -> Path:
    return path.with_suffix(".csv")


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

@router.command("check-hypotheses", "check coefficient and kernel hypotheses")
def cmd_check_hypotheses(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    service = PipelineService(cfg)
    report = service.run_hypotheses()
    report_writer.write_json(_out(args, cfg, "hypotheses.json"),
                             {"config": report_writer.tag_all(cfg.describe(), "config"), **report.to_dict()})
    if not report.satisfied:
        raise GateFailure(f"hypotheses not satisfied: {report.failures()}")
    return EXIT_OK


@router.command("eigen", "solve the eigenproblem (lambda, N, phi)",
                arg("--tol", type=float, default=None, help="R-doubling tolerance"))
def cmd_eigen(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    if args.tol is not None:
        cfg = replace(cfg, eigen=replace(cfg.eigen, tol=args.tol))
    service = PipelineService(cfg)
    triple = service.run_eigen()
    out = _out(args, cfg, "eigen.json")
    payload = report_writer.tag_all(triple.to_dict(), triple.source)
    payload["dual"] = report_writer.tag_all(service.dual.to_dict(), "simulated")
    report_writer.write_json(out, payload)
    report_writer.write_csv(_companion(out), ("x", "N", "phi"), triple.rows())
    return EXIT_OK


@router.command("evolve", "evolve a Gaussian bump under the scaled semigroup",
                arg("--T", type=float, default=None, help="final time"),
                arg("--snapshots", type=int, default=None, help="number of snapshots"),
                arg("--dump-flow", action="store_true", help="also write X_t(x) on the grid edges"),
                arg("--check-order", action="store_true", help="also measure the splitting order of the step"))
def cmd_evolve(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    service = PipelineService(cfg)
    trajectory = service.run_evolve(T=args.T, snapshots=args.snapshots)
    out = _out(args, cfg, "traj.json")
    report_writer.write_csv(_companion(out), ("t", "x", "mass", "density"), trajectory.rows())
    summary = {
        "grid": service.grid.describe(),
        "T": float(trajectory.times[-1]),
        "snapshots": len(trajectory.snapshots),
        "final_mass": trajectory.final.total(),
        "escaped_mass": trajectory.escaped_mass,
    }
    report_writer.write_json(out, report_writer.tag_all(summary, "simulated"))
    if args.dump_flow:
        report_writer.write_csv(out.with_name("flow.csv"), ("t", "x0", "X_t"), service.flow_rows(trajectory.times))
    if args.check_order:
        order = service.splitting_order()
        report_writer.write_json(out.with_name("order.json"), report_writer.tag_all({"observed_order": order}, "fitted"))
        if order < MIN_SPLITTING_ORDER:
            raise GateFailure(f"observed splitting order {order:.3f} below {MIN_SPLITTING_ORDER}")
    return EXIT_OK


@router.command("drift", "Foster-Lyapunov drift constants and their empirical check",
                arg("--k", type=float, default=None, help="small-size weight exponent"),
                arg("--K", type=float, default=None, dest="K_w", help="large-size weight exponent"),
                arg("--t0", type=float, default=None, help="drift time"),
                arg("--trials", type=int, default=None, help="random initial states"))
def cmd_drift(args: argparse.Namespace) -> int:
    cfg = _run_config(args, k=args.k, K_w=args.K_w, t0=args.t0, trials=args.trials)
    service = PipelineService(cfg)
    drift = service.run_drift()
    payload = report_writer.tag_all(drift.to_dict(), drift.source)
    payload["gamma"] = report_writer.tagged(drift.gamma_of_t0(cfg.certificate.t0), drift.source)
    payload["verification"] = report_writer.tag_all(service.drift_report.to_dict(), "simulated")
    report_writer.write_json(_out(args, cfg, "drift.json"), payload)
    if not service.drift_report.passed:
        raise GateFailure(f"empirical drift check failed at t0 = {cfg.certificate.t0:g}")
    return EXIT_OK


def _level(value: Optional[str]):
    if value is None or value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"--R must be a number or 'auto', got {value!r}")


@router.command("minorise", "simulated small-set constants (alpha, nu)",
                arg("--t0", type=float, default=None, help="minorisation time"),
                arg("--R", default=None, help="small-set level or 'auto'"))
def cmd_minorise(args: argparse.Namespace) -> int:
    cfg = _run_config(args, t0=args.t0, R=_level(args.R))
    service = PipelineService(cfg)
    cert = service.run_minorise()
    out = _out(args, cfg, "smallset.json")
    report_writer.write_json(out, report_writer.tag_all(cert.to_dict(), "simulated"))
    report_writer.write_csv(_companion(out), ("x", "width", "nu_mass", "nu_density"), cert.nu.rows())
    return EXIT_OK


@router.command("certify", "Harris (or Doeblin) constants and the certified rate",
                arg("--pipeline", choices=PIPELINES, default=None),
                arg("--b", type=float, default=None, help="fragmentation exponent for selfsim"),
                arg("--t0", type=float, default=None, help="certificate time"))
def cmd_certify(args: argparse.Namespace) -> int:
    cfg = _run_config(args, pipeline=args.pipeline, b=args.b, t0=args.t0)
    service = PipelineService(cfg)
    certified = service.run_certify()
    payload = certified.to_dict()
    if service.drift is not None:
        payload["drift"] = report_writer.tag_all(service.drift.to_dict(), service.drift.source)
    report_writer.write_json(_out(args, cfg, "cert.json"), payload)
    return EXIT_OK


@router.command("rate", "empirical convergence rate",
                arg("--T", type=float, default=None, help="final time"))
def cmd_rate(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    service = PipelineService(cfg)
    fits = service.run_rate(T=args.T)
    service.try_certify()
    comparison = service.comparison()
    out = _out(args, cfg, "rate.json")
    report_writer.write_json(out, {"fits": [report_writer.tag_all(f.to_dict(), "fitted") for f in fits],
                                   "comparison": report_writer.tag_all(comparison, "fitted")})
    report_writer.write_csv(_companion(out), ("t", "d"), fits[0].rows())
    for i, fit in enumerate(fits[1:], start=1):
        report_writer.write_csv(out.with_name(f"{out.stem}_{i}.csv"), ("t", "d"), fit.rows())
    if comparison["holds"] is False:
        raise GateFailure(comparison["verdict"])
    return EXIT_OK


@router.command("pipeline", "full chain: hypotheses, eigen, drift, minorise, certify, rate")
def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    result = PipelineService(cfg).run()
    report_writer.write_json(_out(args, cfg, "summary.json"), result.summary)
    result.raise_for_gates()
    return EXIT_OK


@router.command("oracle", "finite-chain check of the Doeblin and Harris bounds",
                arg("--n", type=int, default=8, help="number of states (<= 12)"),
                arg("--trials", type=int, default=1000, help="random zero-mass pairs"),
                arg("--chain", choices=CHAINS, default=None, help="chain family"))
def cmd_oracle(args: argparse.Namespace) -> int:
    seed = config.SEED if args.seed is None else args.seed
    report = run_oracle(args.n, args.trials, seed, args.chain)
    report_writer.write_json(_out(args, None, "oracle.json"), report)
    return EXIT_GATE if report["violations"] else EXIT_OK
