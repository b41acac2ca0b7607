"""End-to-end runs: data, original model, unlearning methods, ablation grid, artifacts.

Everything written outside ``meta.json`` is a deterministic function of the
config and master seed. Child seeds come from :func:`derive_seed`, so adding
a method never shifts another method's randomness.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .audit import ZeroGlanceAuditor
from .baselines import BaselineConfig, run_baseline
from .config import ExperimentConfig, derive_seed
from .data import (DatasetSplit, LabeledDataset, SplitSpec, load_dataset_csv, make_blobs, save_dataset_csv,
                   save_manifest, split_forget)
from .errors import NumericError
from .eval import evaluate
from .gfn import convergence_report, train_gfn
from .models import ClassifierModel, init_model, load_model, save_model
from .training import fit
from .unlearn import UnlearnRecord, erasure_phase, gfoes_unlearn, recovery_phase

UNLEARN_METHODS = ("gfoes",)


@dataclass
class Prepared:
    config: ExperimentConfig
    split: DatasetSplit
    theta0: ClassifierModel
    retrain_subset: LabeledDataset


def prepare(cfg: ExperimentConfig) -> Prepared:
    """Generate the blob task, split it and train the original model."""
    m = cfg.seed
    ds = cfg.dataset
    data = make_blobs(ds.num_classes, ds.dim, ds.n_per_class, ds.separation, ds.noise_sigma,
                      seed=derive_seed(m, "dataset"))
    split = split_forget(data, SplitSpec(cfg.split.forget_labels, cfg.split.retain_fraction,
                                         seed=derive_seed(m, "split"), test_fraction=cfg.split.test_fraction))
    train = LabeledDataset(np.concatenate([split.forget.inputs, split.retain.inputs]),
                           np.concatenate([split.forget.labels, split.retain.labels]), ds.num_classes)
    theta0 = fit(init_model(cfg.model_spec(derive_seed(m, "original", "init"))), train, cfg.train.protocol(),
                 seed=derive_seed(m, "original", "batches"))
    # retrain's smaller few-shot subset comes from the same retained pool
    alt = split_forget(data, SplitSpec(cfg.split.forget_labels, cfg.retrain_fraction,
                                       seed=derive_seed(m, "split"), test_fraction=cfg.split.test_fraction))
    return Prepared(cfg, split, theta0, alt.retain_subset)


# ---------------------------------------------------------------- methods

def run_gfoes(p: Prepared, cell_seed=None):
    cfg = p.config
    seed = cell_seed if cell_seed is not None else derive_seed(cfg.seed, "gfoes")
    theta_star, record, trace, gen = gfoes_unlearn(p.theta0, p.split.retain_subset, cfg.split.forget_labels,
                                                   replace(cfg.gfn, seed=seed), replace(cfg.unlearn, seed=seed))
    return theta_star, gen, trace, record


def baseline_config(cfg: ExperimentConfig, method) -> BaselineConfig:
    return replace(cfg.baselines[method], seed=derive_seed(cfg.seed, method))


def run_method(p: Prepared, method):
    cfg = p.config
    if method == "gfoes":
        return run_gfoes(p)
    retain = p.retrain_subset if method == "retrain" else p.split.retain_subset
    model = run_baseline(p.theta0, retain, cfg.split.forget_labels, baseline_config(cfg, method))
    return model, None, None, None


def cell_schedule(cell, ucfg):
    """``(composition, erase_lr, recover_lr)`` for an ablation cell name."""
    comp, sched = cell.rsplit("+", 1)
    hi, lo = ucfg.erase_lr, ucfg.recover_lr
    rates = {"R_ls": (hi, lo), "R_l": (hi, hi), "R_s": (lo, lo)}[sched]
    return comp, rates[0], rates[1]


def run_cell(p: Prepared, gen, cell, seed):
    """One ablation cell on the shared original model and generator."""
    cfg = p.config
    comp, hi, lo = cell_schedule(cell, cfg.unlearn)
    ucfg = replace(cfg.unlearn, erase_lr=hi, recover_lr=lo, seed=seed)
    yf = cfg.split.forget_labels
    rs = p.split.retain_subset
    if comp == "D_r":
        theta1 = erasure_phase(p.theta0, None, rs, yf, ucfg)
    else:
        theta1 = erasure_phase(p.theta0, gen, rs, yf, ucfg, include_retain=(comp == "OES+D_r"))
    return recovery_phase(theta1, rs, ucfg, yf)


# ---------------------------------------------------------------- artifacts

def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_inputs(out: Path, p: Prepared):
    (out / "data").mkdir(parents=True, exist_ok=True)
    save_dataset_csv(out / "data" / "retain_subset.csv", p.split.retain_subset)
    save_dataset_csv(out / "data" / "retrain_subset.csv", p.retrain_subset)
    save_dataset_csv(out / "data" / "test_forget.csv", p.split.test_forget)
    save_dataset_csv(out / "data" / "test_retain.csv", p.split.test_retain)
    save_manifest(out / "data" / "split.json", p.split)
    (out / "models").mkdir(exist_ok=True)
    save_model(out / "models" / "theta0.bin", p.theta0)


def _meta(out: Path, command, started):
    _dump(out / "meta.json", {
        "command": command,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "host": platform.node(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "kernel_backend": kernels.BACKEND,
        "package_version": __version__,
        "output_dir": str(out),
    })


def _evaluate(p: Prepared, name, model, out: Path):
    (out / "features").mkdir(exist_ok=True)
    (out / "metrics").mkdir(exist_ok=True)
    rep = evaluate(name, model, p.theta0, p.split.test_forget, p.split.test_retain,
                   p.config.split.forget_labels, out / "features" / f"{name}.csv")
    (out / "metrics" / f"{name}.json").write_text(rep.to_json())
    return rep


def _aborted(stage, exc):
    out = {"status": "aborted", "stage": stage, "error": str(exc)}
    if hasattr(exc, "iteration"):
        out["iteration"] = exc.iteration
    return out


def run_experiment(cfg: ExperimentConfig, methods=None, out=None, command="unlearn"):
    """Original model plus every requested method; returns the run record."""
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if methods is None:
        methods = UNLEARN_METHODS + cfg.enabled_baselines
    p = prepare(cfg)
    _write_inputs(out, p)
    record = {"config": _config_record(cfg), "command": command, "status": "ok",
              "theta0": _evaluate(p, "theta0", p.theta0, out).to_dict(), "methods": {}}
    with ZeroGlanceAuditor(p.split.forget.inputs) as auditor:
        for method in methods:
            try:
                model, gen, trace, extra = run_method(p, method)
            except NumericError as exc:
                record["methods"][method] = _aborted(method, exc)
                record["status"] = "aborted"
                if getattr(exc, "trace", None) is not None and len(exc.trace):
                    exc.trace.to_csv(out / "gfn_trace.csv")
                continue
            save_model(out / "models" / f"{method}.bin", model)
            entry = {"status": "ok", **_evaluate(p, method, model, out).to_dict()}
            if isinstance(extra, UnlearnRecord):
                save_model(out / "models" / f"{method}_theta1.bin", extra.theta1)
                _dump(out / f"{method}_record.json", extra.to_json())
                entry["oes_hash"], entry["oes_count"] = extra.oes_hash, extra.oes_count
            if trace is not None:
                trace.to_csv(out / "gfn_trace.csv")
                save_model(out / "models" / "generator.bin", gen)
                entry["convergence"] = convergence_report(trace)
            record["methods"][method] = entry
    record["zero_glance"] = auditor.summary()
    _dump(out / "run.json", record)
    _meta(out, command, started)
    return record


def train_only(cfg: ExperimentConfig, out=None):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = prepare(cfg)
    _write_inputs(out, p)
    record = {"config": _config_record(cfg), "command": "train", "status": "ok",
              "theta0": _evaluate(p, "theta0", p.theta0, out).to_dict(), "methods": {}}
    _dump(out / "run.json", record)
    _meta(out, "train", started)
    return record


ABLATION_COLUMNS = ("cell", "AD_f", "AD_r")


def run_ablation(cfg: ExperimentConfig, cells=None, out=None):
    """Every ablation cell on a shared original model, generator and seed."""
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = tuple(cells or cfg.ablation_cells)
    p = prepare(cfg)
    _write_inputs(out, p)
    seed = derive_seed(cfg.seed, "gfoes")
    record = {"config": _config_record(cfg), "command": "ablate", "status": "ok",
              "theta0": _evaluate(p, "theta0", p.theta0, out).to_dict(), "methods": {}, "ablation": []}
    rows = []
    with ZeroGlanceAuditor(p.split.forget.inputs) as auditor:
        try:
            gen, trace = train_gfn(p.theta0, p.split.retain_subset, cfg.split.forget_labels,
                                   replace(cfg.gfn, seed=seed))
        except NumericError as exc:
            record["status"] = "aborted"
            record["ablation"] = _aborted("gfn", exc)
            record["zero_glance"] = auditor.summary()
            _dump(out / "run.json", record)
            _meta(out, "ablate", started)
            return record
        trace.to_csv(out / "gfn_trace.csv")
        save_model(out / "models" / "generator.bin", gen)
        record["gfn_convergence"] = convergence_report(trace)
        for cell in cells:
            name = "ablation_" + cell.replace("+", "_")
            try:
                model = run_cell(p, gen, cell, seed)
            except NumericError as exc:
                record["status"] = "aborted"
                record["methods"][name] = _aborted(cell, exc)
                rows.append((cell, "nan", "nan"))
                continue
            save_model(out / "models" / f"{name}.bin", model)
            rep = _evaluate(p, name, model, out)
            record["methods"][name] = {"status": "ok", "cell": cell, **rep.to_dict()}
            rows.append((cell, repr(rep.ad_f), repr(rep.ad_r)))
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ABLATION_COLUMNS)
        w.writerows(rows)
    record["ablation"] = [dict(zip(ABLATION_COLUMNS, r)) for r in rows]
    record["zero_glance"] = auditor.summary()
    _dump(out / "run.json", record)
    _meta(out, "ablate", started)
    return record


def _config_record(cfg: ExperimentConfig):
    d = cfg.to_dict()
    d.pop("output_dir", None)
    return d


# ---------------------------------------------------------------- re-derivation

def _load_eval_inputs(out: Path, num_classes):
    tf = load_dataset_csv(out / "data" / "test_forget.csv", num_classes)
    tr = load_dataset_csv(out / "data" / "test_retain.csv", num_classes)
    return tf, tr


def reevaluate(out, write=False):
    """Recompute every method's metrics from the persisted models and test data."""
    out = Path(out)
    run = json.loads((out / "run.json").read_text())
    k = run["config"]["dataset"]["num_classes"]
    yf = run["config"]["split"]["forget_labels"]
    tf, tr = _load_eval_inputs(out, k)
    theta0 = load_model(out / "models" / "theta0.bin")
    results = {"theta0": evaluate("theta0", theta0, theta0, tf, tr, yf).to_dict()}
    for name, entry in run["methods"].items():
        if entry.get("status") != "ok":
            continue
        model = load_model(out / "models" / f"{name}.bin")
        results[name] = evaluate(name, model, theta0, tf, tr, yf).to_dict()
    if write:
        _dump(out / "eval.json", results)
    return run, results


def audit_run(out):
    """Compare recomputed metrics with run.json; returns a summary dict."""
    run, results = reevaluate(out)
    mismatches = []
    if results["theta0"] != run["theta0"]:
        mismatches.append("theta0")
    for name, entry in run["methods"].items():
        if entry.get("status") != "ok":
            continue
        stored = {key: entry[key] for key in results[name]}
        if stored != results[name]:
            mismatches.append(name)
    zg = run.get("zero_glance", {})
    violations = int(zg.get("violations", 0))
    return {
        "checked": sorted(results),
        "mismatches": mismatches,
        "zero_glance_violations": violations,
        "ok": not mismatches and violations == 0,
    }
