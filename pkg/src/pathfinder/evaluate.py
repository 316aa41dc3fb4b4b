"""Accuracy of identified pathways against simulated ground truth and the
multi-realization experiment driver."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as _rng
from .anatomy import CaseClass
from .baselines import arr_tree, arrival_frequencies, eff_tree, mcml_tree
from .errors import ConfigError, DataInconsistencyError
from .ipi import DEFAULT_EXACT_LIMIT, IPIResult, identify
from .network import MetapopNetwork, SurveillanceSeries
from .pathway import PathwayTree
from .simulate import GroundTruthLog, SimConfig, run

log = logging.getLogger(__name__)

METHODS = ("ipi", "arr", "eff", "mcml")
AMBIGUOUS = (CaseClass.MI_S.value, CaseClass.MI_NS.value)


def default_early_cutoff(node_count: int) -> int:
    return 50 if node_count <= 500 else 300


def early_tick(series: SurveillanceSeries, cutoff: int) -> int:
    """First tick by which ``cutoff`` distinct nodes have been infected."""
    ever = np.maximum.accumulate(series.counts > 0, axis=0).sum(axis=1)
    hit = np.flatnonzero(ever >= cutoff)
    return int(hit[0]) if len(hit) else series.ticks


def truth_edges(truth: GroundTruthLog) -> list[tuple[int, int, int]]:
    """(tick, src, dst) for every source of every arrival epoch, sorted."""
    return sorted(truth.pathway_edges())


def case_labels(result: IPIResult) -> dict:
    """(tick, destination) -> case class, over every case including degenerate ones."""
    out = {}
    cases = [p.case for p in result.pathways] + [d.case for d in result.degenerate]
    for c in cases:
        for k in c.destinations:
            out[(c.tick, k)] = c.case_class.value
    return out


@dataclass
class AccuracyReport:
    method: str
    realization: int = 0
    whole: tuple = (0, 0)    # (hits, true edges)
    early: tuple = (0, 0)
    per_class: dict = field(default_factory=dict)  # class -> {"whole": (h, t), "early": (h, t)}

    @staticmethod
    def _ratio(pair):
        return pair[0] / pair[1] if pair[1] else None

    @property
    def whole_accuracy(self):
        return self._ratio(self.whole)

    @property
    def early_accuracy(self):
        return self._ratio(self.early)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "realization": self.realization,
            "whole": {"hits": self.whole[0], "total": self.whole[1], "accuracy": self.whole_accuracy},
            "early": {"hits": self.early[0], "total": self.early[1], "accuracy": self.early_accuracy},
            "per_class": {
                cls: {stage: {"hits": h, "total": t} for stage, (h, t) in v.items()}
                for cls, v in sorted(self.per_class.items())
            },
        }


def score_tree(
    identified: PathwayTree,
    truth: GroundTruthLog,
    early_cutoff_tick: int | None = None,
    labels: dict | None = None,
    realization: int = 0,
) -> AccuracyReport:
    """Share of true pathway edges recovered.

    Trees with tick stamps (IPI) must match (tick, src, dst); static trees
    are credited on (src, dst) at any tick. ``early_cutoff_tick`` restricts
    the early variant to arrivals up to that tick; ``labels`` maps
    (tick, dst) to the case class for the per-class variant.
    """
    timed = bool(identified.edges) and identified.edges[0].tick is not None
    got = identified.timed_edges() if timed else identified.edge_set()
    rep = AccuracyReport(identified.method, realization)
    whole = [0, 0]
    early = [0, 0]
    per: dict = {}
    for t, s, d in truth_edges(truth):
        hit = ((t, s, d) if timed else (s, d)) in got
        whole[0] += hit
        whole[1] += 1
        is_early = early_cutoff_tick is not None and t <= early_cutoff_tick
        if is_early:
            early[0] += hit
            early[1] += 1
        if labels is not None:
            cls = labels.get((t, d))
            if cls is None:
                raise DataInconsistencyError(f"true arrival t={t} node={d} is not covered by any invasion case")
            slot = per.setdefault(cls, {"whole": [0, 0], "early": [0, 0]})
            slot["whole"][0] += hit
            slot["whole"][1] += 1
            if is_early:
                slot["early"][0] += hit
                slot["early"][1] += 1
    rep.whole = tuple(whole)
    rep.early = tuple(early)
    rep.per_class = {c: {k: tuple(v) for k, v in slot.items()} for c, slot in per.items()}
    return rep


def case_outcomes(result: IPIResult, truth: GroundTruthLog) -> list[dict]:
    """One row per identified ambiguous case: correct iff support equals the true edge set."""
    true_by_dst: dict = {}
    for t, s, d in truth_edges(truth):
        true_by_dst.setdefault((t, d), set()).add((s, d))
    rows = []
    for p in result.pathways:
        if not p.case_class.ambiguous:
            continue
        true = set().union(*(true_by_dst.get((p.case.tick, k), set()) for k in p.case.destinations))
        r = p.report
        rows.append({
            "case_id": p.case.case_id,
            "class": p.case_class.value,
            "M": r.solution_count,
            "entropy": r.entropy,
            "identifiability": r.identifiability,
            "pi": p.pi,
            "method": p.method,
            "correct": set(p.support) == true,
            "bound_violation": r.bound_violation,
            "literal_upper_violation": r.literal_upper_violation,
            "theorem": p.method in ("theorem1", "theorem2"),
            "tie": p.tie,
            "posterior_error": p.posterior_error,
        })
    return rows


def misidentification_stats(rows: list[dict]) -> dict:
    """Wrong-case table plus mean identifiability of wrong vs correct cases per class."""
    wrong = [r for r in rows if not r["correct"]]
    summary = {}
    for cls in AMBIGUOUS + ("all",):
        sel = [r for r in rows if cls == "all" or r["class"] == cls]
        w = [r["identifiability"] for r in sel if not r["correct"]]
        c = [r["identifiability"] for r in sel if r["correct"]]
        summary[cls] = {
            "wrong": len(w),
            "correct": len(c),
            "mean_identifiability_wrong": statistics.fmean(w) if w else None,
            "mean_identifiability_correct": statistics.fmean(c) if c else None,
        }
    return {"wrong_cases": wrong, "summary": summary}


# ------------------------------------------------------------ experiment


@dataclass(frozen=True)
class ExperimentConfig:
    realizations: int = 20
    master_seed: int = 0
    methods: tuple = METHODS
    early_cutoff: int | None = None
    mcml_runs: int = 50
    exact_limit: int = DEFAULT_EXACT_LIMIT
    jobs: int = 1

    def check(self) -> "ExperimentConfig":
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        if self.mcml_runs < 1:
            raise ConfigError("mcml_runs must be >= 1")
        return self


def realization_config(sim_config: SimConfig, master_seed: int, r: int) -> SimConfig:
    return replace(sim_config, rng_seed=_rng.derive_seed(master_seed, "realization", r))


def _one_realization(args):
    network, sim_config, cfg, r, baselines = args
    series, truth = run(network, realization_config(sim_config, cfg.master_seed, r))
    cutoff = cfg.early_cutoff or default_early_cutoff(network.node_count)
    t_early = early_tick(series, cutoff)
    result = identify(series, network, exact_limit=cfg.exact_limit)
    labels = case_labels(result)
    reports = []
    if "ipi" in cfg.methods:
        reports.append(score_tree(result.tree, truth, t_early, labels, r))
    for name in cfg.methods:
        if name in baselines:
            reports.append(score_tree(baselines[name], truth, t_early, labels, r))
    rows = case_outcomes(result, truth)
    for row in rows:
        row["realization"] = r
        row["early"] = int(row["case_id"].split("-")[0]) <= t_early
    return {
        "realization": r,
        "reports": reports,
        "cases": rows,
        "degenerate": [{"realization": r, "case_id": d.case.case_id, "reason": d.reason} for d in result.degenerate],
        "ticks": series.ticks,
        "early_tick": t_early,
        "true_edges": len(truth.pathway_edges()),
        "no_spread": len(truth.pathway_edges()) == 0,
    }


def baseline_trees(network: MetapopNetwork, sim_config: SimConfig, cfg: ExperimentConfig) -> dict:
    seed = sim_config.seed_node
    out = {}
    if "arr" in cfg.methods:
        out["arr"] = arr_tree(network, seed)
    if "eff" in cfg.methods:
        out["eff"] = eff_tree(network, seed)
    if "mcml" in cfg.methods:
        mc = replace(sim_config, rng_seed=_rng.derive_seed(cfg.master_seed, "mcml"))
        freq = arrival_frequencies(network, mc, cfg.mcml_runs, cfg.jobs)
        out["mcml"] = mcml_tree(network, seed, mc, cfg.mcml_runs, frequencies=freq)
    return out


def _mean_sd(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else 0.0)


@dataclass
class ExperimentResult:
    reports: list        # AccuracyReport, ordered by (realization, method)
    cases: list          # case outcome rows
    degenerate: list
    realizations: list   # per-realization metadata
    baselines: dict      # method -> PathwayTree
    config: dict

    def method_reports(self, method: str) -> list[AccuracyReport]:
        return [r for r in self.reports if r.method == method]

    def mean_accuracy(self, method: str, stage: str = "whole") -> float | None:
        key = "whole_accuracy" if stage == "whole" else "early_accuracy"
        return _mean_sd(getattr(r, key) for r in self.method_reports(method))[0]

    def aggregate(self) -> dict:
        methods = {}
        for m in self.config["methods"]:
            reps = self.method_reports(m)
            wm, ws = _mean_sd(r.whole_accuracy for r in reps)
            em, es = _mean_sd(r.early_accuracy for r in reps)
            per_class = {}
            for cls in AMBIGUOUS:
                for stage in ("whole", "early"):
                    h = sum(r.per_class.get(cls, {}).get(stage, (0, 0))[0] for r in reps)
                    t = sum(r.per_class.get(cls, {}).get(stage, (0, 0))[1] for r in reps)
                    per_class.setdefault(cls, {})[stage] = {
                        "hits": h, "total": t, "accuracy": h / t if t else None,
                    }
            methods[m] = {
                "whole": {"mean": wm, "sd": ws, "series": [r.whole_accuracy for r in reps]},
                "early": {"mean": em, "sd": es, "series": [r.early_accuracy for r in reps]},
                "per_class": per_class,
            }
        mis = misidentification_stats(self.cases)
        return {
            "config": self.config,
            "methods": methods,
            "misidentification": mis["summary"],
            "diagnostics": {
                "cases": len(self.cases),
                "degenerate": len(self.degenerate),
                "bound_violations": sum(c["bound_violation"] for c in self.cases),
                "literal_upper_violations": sum(c["literal_upper_violation"] for c in self.cases),
                "theorem_cases": sum(c["theorem"] for c in self.cases),
                "factorized_cases": sum(c["method"] == "factorized" for c in self.cases),
                "ties": sum(c["tie"] for c in self.cases),
                "max_posterior_error": max((c["posterior_error"] for c in self.cases), default=0.0),
                "no_spread_realizations": sum(r["no_spread"] for r in self.realizations),
            },
            "realizations": self.realizations,
        }


def run_experiment(network: MetapopNetwork, sim_config: SimConfig, cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate, identify and score ``cfg.realizations`` independent outbreaks.

    Deterministic in ``cfg.master_seed`` whatever ``cfg.jobs`` is.
    """
    cfg.check()
    sim_config.check(network)
    baselines = baseline_trees(network, sim_config, cfg)
    tasks = [(network, sim_config, cfg, r, baselines) for r in range(cfg.realizations)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(_one_realization, tasks))
    else:
        outs = [_one_realization(t) for t in tasks]
    outs.sort(key=lambda o: o["realization"])
    reports, cases, degenerate, meta = [], [], [], []
    for o in outs:
        reports.extend(o["reports"])
        cases.extend(o["cases"])
        degenerate.extend(o["degenerate"])
        meta.append({k: o[k] for k in ("realization", "ticks", "early_tick", "true_edges", "no_spread")})
    config = {
        "realizations": cfg.realizations,
        "master_seed": cfg.master_seed,
        "methods": list(cfg.methods),
        "early_cutoff": cfg.early_cutoff or default_early_cutoff(network.node_count),
        "mcml_runs": cfg.mcml_runs,
        "exact_limit": cfg.exact_limit,
        "sim": sim_config.to_dict(),
    }
    return ExperimentResult(reports, cases, degenerate, meta, baselines, config)


# ------------------------------------------------------------ writers


def _num(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def write_aggregate(result: ExperimentResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.aggregate(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_realizations_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "method", "accuracy", "early_accuracy"])
        for r in result.reports:
            w.writerow([r.realization, r.method, _num(r.whole_accuracy), _num(r.early_accuracy)])


def write_per_class_csv(result: ExperimentResult, path) -> None:
    agg = result.aggregate()["methods"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "class", "stage", "hits", "total", "accuracy"])
        for m in result.config["methods"]:
            for cls, stages in agg[m]["per_class"].items():
                for stage in ("early", "whole"):
                    s = stages[stage]
                    w.writerow([m, cls, stage, s["hits"], s["total"], _num(s["accuracy"])])


def write_wrong_cases_csv(result: ExperimentResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "case_id", "class", "M", "entropy", "identifiability"])
        for c in result.cases:
            if not c["correct"]:
                w.writerow([c["realization"], c["case_id"], c["class"], c["M"], _num(c["entropy"]),
                            _num(c["identifiability"])])
