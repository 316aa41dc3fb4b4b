"""``pathfinder`` command line: generate / simulate / identify / baseline /
evaluate / report, each writing into a fixed sub-directory of ``--workdir``
together with a manifest.json (resolved config, versions, seed, digests)."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anatomy import dump_cases
from .baselines import arr_tree, eff_tree, mcml_tree
from .errors import ConfigError, DataInconsistencyError, NetworkParseError, NetworkValidationError, PathfinderError
from .evaluate import (
    METHODS,
    ExperimentConfig,
    run_experiment,
    write_aggregate,
    write_per_class_csv,
    write_realizations_csv,
    write_wrong_cases_csv,
)
from .ipi import DEFAULT_EXACT_LIMIT, identify, write_report
from .netgen import NetGenConfig, calibrate_theta, generate_ba_topology, generate_network
from .network import check_network, load_network, load_series, save_network, save_series, validate_series
from .pathway import save_baseline_tree, save_ipi_tree
from .simulate import SimConfig, check_truth_completeness, run, save_truth

log = logging.getLogger("pathfinder")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ------------------------------------------------------------ configuration

DEFAULTS = {
    "generate": {
        "nodes": 3000, "m": 8, "theta_mean": NetGenConfig.mean_theta, "theta_var": 0.0, "C": 0.1,
        "pop": 600_000, "population_mode": "uniform", "rng": 0, "calibrate": False,
    },
    "simulate": {
        "beta": 0.3, "seed_node": 0, "seed_count": 5, "ticks": 365, "stop_rule": "all-infected", "rng": 0,
    },
    "identify": {"exact_limit": DEFAULT_EXACT_LIMIT, "theorems": True},
    "baseline": {"method": None, "alpha": None, "runs": 50, "beta": 0.3, "seed_node": None, "rng": 0},
    "evaluate": {
        "methods": ",".join(METHODS), "realizations": 20, "beta": 0.3, "seed_node": 0, "seed_count": 5,
        "ticks": 365, "early_cutoff": None, "mcml_runs": 50, "exact_limit": DEFAULT_EXACT_LIMIT, "rng": 0,
    },
    "report": {},
}
GLOBAL_DEFAULTS = {"jobs": 1}
ENV = {"jobs": "PATHFINDER_JOBS", "rng": "PATHFINDER_RNG"}


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    return doc


def resolve(args: argparse.Namespace) -> dict:
    """Flags > environment > config file (command section, then top level) > defaults."""
    cfg = _load_config(args.config)
    section = cfg.get(args.command, {})
    out = {}
    for key, default in {**GLOBAL_DEFAULTS, **DEFAULTS[args.command]}.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in ENV and os.environ.get(ENV[key]):
            raw = os.environ[ENV[key]]
            try:
                out[key] = int(raw)
            except ValueError:
                raise UsageError(f"{ENV[key]} must be an integer, got {raw!r}") from None
        elif key in section:
            out[key] = section[key]
        elif key in cfg and not isinstance(cfg[key], dict):
            out[key] = cfg[key]
        else:
            out[key] = default
    return out


# ------------------------------------------------------------ manifests


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Path, command: str, config: dict, inputs: dict, outputs: list) -> None:
    # worker count never changes results; leaving it out keeps reruns byte-identical
    config = {k: v for k, v in config.items() if k != "jobs"}
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("rng"),
        "versions": {"pathfinder": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "inputs": {name: {"path": str(p), "sha256": _digest(Path(p))} for name, p in sorted(inputs.items())},
        "outputs": {Path(p).name: _digest(Path(p)) for p in sorted(outputs)},
    }
    with open(outdir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _read_manifest(workdir: Path, step: str) -> dict:
    p = workdir / step / "manifest.json"
    if not p.is_file():
        return {}
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def _network_path(args, workdir: Path) -> Path:
    return _require(args.network or workdir / "generate" / "network.txt", "network file")


def _load_network(path: Path):
    try:
        return load_network(path)
    except (NetworkParseError, NetworkValidationError) as exc:
        raise DataInconsistencyError(f"{path}: {exc}") from exc


# ------------------------------------------------------------ commands


def cmd_generate(args, conf: dict, workdir: Path) -> None:
    base = NetGenConfig(
        node_count=int(conf["nodes"]), attachment_m=int(conf["m"]), mean_theta=float(conf["theta_mean"]),
        theta_var=float(conf["theta_var"]), mobility_constant=float(conf["C"]),
        initial_population=int(conf["pop"]), seed=int(conf["rng"]), population_mode=conf["population_mode"],
    ).check()
    extra = {}
    if conf["calibrate"]:
        topo = [generate_ba_topology(NetGenConfig(**{**base.to_dict(), "seed": base.seed + r})) for r in range(3)]
        cal = calibrate_theta(topo, base.target_exponent, var_grid=(base.theta_var,), base=base)
        base = NetGenConfig(**{**base.to_dict(), "mean_theta": cal.theta_mean, "theta_var": cal.theta_var})
        extra = {"calibrated_theta_mean": cal.theta_mean, "calibration_residual": cal.residual}
    net = check_network(generate_network(base))
    outdir = workdir / "generate"
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "network.txt"
    save_network(net, path)
    write_manifest(outdir, "generate", {**conf, **extra, "netgen": base.to_dict()}, {}, [path])
    print(f"network: {net.node_count} nodes, {net.edge_count} edges -> {path}")


def cmd_simulate(args, conf: dict, workdir: Path) -> None:
    npath = _network_path(args, workdir)
    net = _load_network(npath)
    sim = SimConfig(
        beta=float(conf["beta"]), seed_node=int(conf["seed_node"]), seed_infected=int(conf["seed_count"]),
        max_ticks=int(conf["ticks"]), rng_seed=int(conf["rng"]), stop_rule=conf["stop_rule"],
    ).check(net)
    series, truth = run(net, sim)
    problems = check_truth_completeness(series, truth)
    if problems:
        raise DataInconsistencyError("ground truth incomplete: " + "; ".join(problems[:5]))
    outdir = workdir / "simulate"
    outdir.mkdir(parents=True, exist_ok=True)
    spath, tpath = outdir / "surveillance.csv", outdir / "truth.csv"
    save_series(series, spath)
    save_truth(truth, tpath)
    write_manifest(outdir, "simulate", {**conf, "sim": sim.to_dict()}, {"network": npath}, [spath, tpath])
    infected = int((series.counts[-1] > 0).sum())
    print(f"simulated {series.ticks} ticks, {infected}/{net.node_count} nodes infected -> {outdir}")


def cmd_identify(args, conf: dict, workdir: Path) -> None:
    npath = _network_path(args, workdir)
    spath = _require(args.surveillance or workdir / "simulate" / "surveillance.csv", "surveillance file")
    net = _load_network(npath)
    series = load_series(spath, net.node_count)
    problems = validate_series(series, net)
    if problems:
        raise DataInconsistencyError("surveillance invalid: " + "; ".join(problems[:5]))
    result = identify(series, net, use_theorems=bool(conf["theorems"]), exact_limit=int(conf["exact_limit"]))
    outdir = workdir / "identify"
    outdir.mkdir(parents=True, exist_ok=True)
    tree_path, report_path, cases_path = outdir / "tree.csv", outdir / "report.json", outdir / "cases.jsonl"
    save_ipi_tree(result.tree, tree_path)
    write_report(result, report_path)
    dump_cases(result.cases, cases_path)
    write_manifest(outdir, "identify", conf, {"network": npath, "surveillance": spath},
                   [tree_path, report_path, cases_path])
    print(f"identified {len(result.pathways)} cases ({len(result.degenerate)} degenerate), "
          f"{len(result.tree)} edges -> {outdir}")


def cmd_baseline(args, conf: dict, workdir: Path) -> None:
    method = conf["method"]
    if method not in ("arr", "eff", "mcml"):
        raise UsageError("--method must be one of arr, eff, mcml")
    npath = _network_path(args, workdir)
    net = _load_network(npath)
    seed_node = conf["seed_node"]
    if seed_node is None:
        seed_node = _read_manifest(workdir, "simulate").get("config", {}).get("seed_node", 0)
    seed_node = int(seed_node)
    if not 0 <= seed_node < net.node_count:
        raise ConfigError(f"seed node {seed_node} out of range")
    if method == "arr":
        tree = arr_tree(net, seed_node, None if conf["alpha"] is None else float(conf["alpha"]))
    elif method == "eff":
        tree = eff_tree(net, seed_node)
    else:
        sim = SimConfig(beta=float(conf["beta"]), seed_node=seed_node, rng_seed=int(conf["rng"])).check(net)
        tree = mcml_tree(net, seed_node, sim, int(conf["runs"]), jobs=int(conf["jobs"]))
    outdir = workdir / f"baseline-{method}"
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "tree.csv"
    save_baseline_tree(tree, path)
    write_manifest(outdir, "baseline", {**conf, "seed_node": seed_node}, {"network": npath}, [path])
    print(f"{method} tree: {len(tree)} edges -> {path}")


def cmd_evaluate(args, conf: dict, workdir: Path) -> None:
    npath = _network_path(args, workdir)
    net = _load_network(npath)
    methods = tuple(m.strip() for m in str(conf["methods"]).split(",") if m.strip())
    sim = SimConfig(
        beta=float(conf["beta"]), seed_node=int(conf["seed_node"]), seed_infected=int(conf["seed_count"]),
        max_ticks=int(conf["ticks"]),
    ).check(net)
    cfg = ExperimentConfig(
        realizations=int(conf["realizations"]), master_seed=int(conf["rng"]), methods=methods,
        early_cutoff=None if conf["early_cutoff"] is None else int(conf["early_cutoff"]),
        mcml_runs=int(conf["mcml_runs"]), exact_limit=int(conf["exact_limit"]), jobs=int(conf["jobs"]),
    ).check()
    result = run_experiment(net, sim, cfg)
    outdir = workdir / "evaluate"
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [outdir / n for n in ("aggregate.json", "realizations.csv", "per_class.csv", "wrong_cases.csv")]
    write_aggregate(result, paths[0])
    write_realizations_csv(result, paths[1])
    write_per_class_csv(result, paths[2])
    write_wrong_cases_csv(result, paths[3])
    write_manifest(outdir, "evaluate", conf, {"network": npath}, paths)
    for m in methods:
        whole, early = result.mean_accuracy(m), result.mean_accuracy(m, "early")
        print(f"{m:5s} whole {_fmt(whole)} early {_fmt(early)}")


def _fmt(x):
    return "n/a" if x is None else f"{x:.4f}"


def cmd_report(args, conf: dict, workdir: Path) -> None:
    summary = {"steps": {}}
    inputs = {}
    for step in ("generate", "simulate", "identify", "baseline-arr", "baseline-eff", "baseline-mcml", "evaluate"):
        man = _read_manifest(workdir, step)
        if man:
            summary["steps"][step] = {"config": man.get("config"), "outputs": man.get("outputs")}
            inputs[f"{step}/manifest.json"] = workdir / step / "manifest.json"
    if not summary["steps"]:
        raise UsageError(f"no pipeline outputs under {workdir}")
    rep = workdir / "identify" / "report.json"
    if rep.is_file():
        with open(rep, encoding="utf-8") as fh:
            summary["identify"] = json.load(fh)["summary"]
    agg = workdir / "evaluate" / "aggregate.json"
    if agg.is_file():
        with open(agg, encoding="utf-8") as fh:
            doc = json.load(fh)
        summary["evaluate"] = {
            m: {"whole": v["whole"]["mean"], "early": v["early"]["mean"]} for m, v in doc["methods"].items()
        }
        summary["misidentification"] = doc["misidentification"]
        summary["diagnostics"] = doc["diagnostics"]
    outdir = workdir / "report"
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "summary.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(outdir, "report", conf, inputs, [path])
    print(f"report -> {path}")


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


# ------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pathfinder", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"pathfinder {__version__}")
    p.add_argument("--workdir", default=".", help="run directory (default: current directory)")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--jobs", type=int, help="worker processes (env PATHFINDER_JOBS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="BA metapopulation network")
    g.add_argument("--nodes", type=int)
    g.add_argument("--m", type=int, help="edges per new node")
    g.add_argument("--theta-mean", type=float)
    g.add_argument("--theta-var", type=float)
    g.add_argument("--C", type=float, help="mobility constant (out-flux per node)")
    g.add_argument("--pop", type=int, help="initial population per node")
    g.add_argument("--population-mode", choices=("uniform", "traffic"))
    g.add_argument("--rng", "--seed", dest="rng", type=int)
    g.add_argument("--calibrate", action="store_true", default=None, help="fit theta to a traffic exponent of 1.5")

    s = sub.add_parser("simulate", help="SI reaction-diffusion outbreak")
    s.add_argument("--network")
    s.add_argument("--beta", type=float)
    s.add_argument("--seed-node", type=int)
    s.add_argument("--seed-count", type=int)
    s.add_argument("--ticks", type=int)
    s.add_argument("--stop-rule", choices=("all-infected", "tick-limit"))
    s.add_argument("--rng", type=int)

    i = sub.add_parser("identify", help="identify invasion pathways from surveillance")
    i.add_argument("--network")
    i.add_argument("--surveillance")
    i.add_argument("--exact-limit", type=int, help="largest case enumerated jointly")
    i.add_argument("--no-theorems", dest="theorems", action="store_false", default=None)

    b = sub.add_parser("baseline", help="comparison tree")
    b.add_argument("--method", choices=("arr", "eff", "mcml"), required=True)
    b.add_argument("--network")
    b.add_argument("--seed-node", type=int)
    b.add_argument("--alpha", type=float, help="arr hop constant")
    b.add_argument("--runs", type=int, help="mcml simulations")
    b.add_argument("--beta", type=float)
    b.add_argument("--rng", type=int)

    e = sub.add_parser("evaluate", help="multi-realization accuracy experiment")
    e.add_argument("--network")
    e.add_argument("--methods")
    e.add_argument("--realizations", type=int)
    e.add_argument("--beta", type=float)
    e.add_argument("--seed-node", type=int)
    e.add_argument("--seed-count", type=int)
    e.add_argument("--ticks", type=int)
    e.add_argument("--early-cutoff", type=int)
    e.add_argument("--mcml-runs", type=int)
    e.add_argument("--exact-limit", type=int)
    e.add_argument("--rng", type=int)

    sub.add_parser("report", help="merge step outputs into one summary")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = resolve(args)
        if int(conf["jobs"]) < 1:
            raise ConfigError("--jobs must be >= 1")
        COMMANDS[args.command](args, conf, Path(args.workdir))
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataInconsistencyError as exc:
        print(f"data inconsistency: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (PathfinderError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
