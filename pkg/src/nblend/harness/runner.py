"""End-to-end experiment runs: data -> target -> defense -> attacks -> metrics."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from nblend import __version__
from nblend.attacks import (
    METRIC_ATTACKS,
    AttackSamples,
    evaluate_attack,
    fit_metric_attack,
    fit_shadow_attack_from_samples,
    shadow_samples,
)
from nblend.data import Dataset, load_csv, normalize, split, synth_blobs
from nblend.defense import build_candidate_index, defend_batch
from nblend.harness.config import DatasetSection, ExperimentConfig, ModelSection, load_experiment
from nblend.harness.seeds import derive_seed
from nblend.metrics import DistortionReport, ExperimentCell, correlation_table, distortion_report
from nblend.models import task_accuracy, train

log = logging.getLogger(__name__)

TABLE_HEADER = ["dataset", "model", "attack", "acc_no_def", "acc_def", "pcd", "cvd",
                "label_loss_rate", "fallback_rate"]
DISTORTION_HEADER = ["dataset", "model", "pcd", "cvd", "label_loss_rate", "fallback_rate",
                     "n_queries", "train_accuracy", "test_accuracy"]


def load_dataset(section: DatasetSection, p: float, base_dir: Path, master_seed: int) -> Dataset:
    if section.csv is not None:
        path = Path(section.csv)
        if not path.is_absolute():
            path = base_dir / path
        raw = load_csv(path, section.label_column, section.categorical_columns, name=section.name)
        ds, _ = normalize(raw, p)
        return ds
    s = section.synth
    seed = s.seed if s.seed is not None else derive_seed(master_seed, section.name, "synth")
    return synth_blobs(s.num_classes, s.dim, s.per_class, s.spread, seed, p=p, name=section.name)


def default_eval_size(fractions, n: int) -> int:
    n_train = int(fractions[0] * n + 1e-9)
    n_test = int(fractions[1] * n + 1e-9)
    return max(1, min(500, n_train // 4, n_test))


@dataclass
class UnitResult:
    dataset: str
    model: str
    repeat: int
    seeds: dict
    accuracies: dict = field(default_factory=dict)  # attack -> (no_def, def)
    distortion: DistortionReport | None = None
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")
    timings: dict = field(default_factory=dict)
    error: str | None = None


def run_unit(ds: Dataset, model_sec: ModelSection, cfg: ExperimentConfig, repeat: int) -> UnitResult:
    """One (dataset, model, repeat) measurement. Never raises; errors are recorded."""
    split_sec = next(d for d in cfg.datasets if d.name == ds.name).split or cfg.split
    seeds = {
        "split": derive_seed(cfg.seed, ds.name, repeat, "split"),
        "target": derive_seed(cfg.seed, ds.name, model_sec.label, repeat, "target"),
        "defense": derive_seed(cfg.seed, ds.name, model_sec.label, repeat, "defense"),
        "shadow": derive_seed(cfg.seed, ds.name, model_sec.label, repeat, "shadow"),
        "shadow_defense": derive_seed(cfg.seed, ds.name, model_sec.label, repeat, "shadow_defense"),
    }
    res = UnitResult(ds.name, model_sec.label, repeat, seeds)
    clock = time.perf_counter
    try:
        with threadpool_limits(1):
            t0 = clock()
            eval_size = split_sec.eval_size or default_eval_size(split_sec.fractions, len(ds))
            plan = split(ds, split_sec.fractions, eval_size, seeds["split"])
            train_set = ds.subset(plan.target_train)
            model = train(train_set, model_sec.train_config(seeds["target"]))
            res.train_accuracy = task_accuracy(model, train_set)
            res.test_accuracy = task_accuracy(model, ds.subset(plan.target_test))
            t1 = clock()
            res.timings["train"] = t1 - t0

            index = build_candidate_index(model, train_set)
            defense = cfg.defense.defense_config(cfg.p, seeds["defense"])
            queries = np.concatenate([plan.eval_members, plan.eval_nonmembers])
            batch = defend_batch(ds.X[queries], model, index, defense)
            res.distortion = distortion_report(batch.original, batch.smoothed, batch.fallback)
            t2 = clock()
            res.timings["defense"] = t2 - t1

            k = len(plan.eval_members)
            labels = ds.y[queries]

            def eval_sets(probs):
                return (AttackSamples(probs[:k], labels[:k], np.ones(k, bool)),
                        AttackSamples(probs[k:], labels[k:], np.zeros(k, bool)))

            plain_in, plain_out = eval_sets(batch.original)
            blend_in, blend_out = eval_sets(batch.smoothed)

            pool = ds.subset(plan.shadow_pool)
            shadow_cfg = cfg.attacks.shadow_config(
                model_sec.train_config(seeds["shadow"]), seeds["shadow"])
            static = shadow_samples(pool, shadow_cfg)
            adaptive = None
            if cfg.attacks.adaptive:
                shadow_def = cfg.defense.defense_config(cfg.p, seeds["shadow_defense"])
                adaptive = shadow_samples(pool, shadow_cfg, shadow_def)
            t3 = clock()
            res.timings["shadow"] = t3 - t2

            def fit(kind, samples):
                if kind == "shadow":
                    return fit_shadow_attack_from_samples(samples, shadow_cfg)
                return fit_metric_attack(kind, samples, cfg.attacks.per_class_thresholds)

            for kind in cfg.attacks.kinds:
                static_attack = fit(kind, static)
                acc_plain = evaluate_attack(static_attack, plain_in, plain_out).accuracy
                acc_static = evaluate_attack(static_attack, blend_in, blend_out).accuracy
                if adaptive is not None:
                    acc_def = evaluate_attack(fit(kind, adaptive), blend_in, blend_out).accuracy
                    res.accuracies[kind] = (acc_plain, acc_def)
                    if cfg.attacks.report_static:
                        res.accuracies[f"{kind}+static"] = (acc_plain, acc_static)
                else:
                    res.accuracies[kind] = (acc_plain, acc_static)
            res.timings["attacks"] = clock() - t3
    except Exception as exc:  # a failing cell must not void the run
        res.error = f"{type(exc).__name__}: {exc}"
        log.debug("unit failed\n%s", traceback.format_exc())
    return res


def _run_unit_star(args):
    return run_unit(*args)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class CellSummary:
    dataset: str
    model: str
    accuracies: dict
    distortion: DistortionReport
    train_accuracy: float
    test_accuracy: float
    repeats: int


def aggregate(units: list[UnitResult]) -> list[CellSummary]:
    """Average successful repeats per (dataset, model), preserving first-seen order."""
    groups: dict[tuple[str, str], list[UnitResult]] = {}
    for u in units:
        if u.error is None:
            groups.setdefault((u.dataset, u.model), []).append(u)
    cells = []
    for (dname, mname), us in groups.items():
        attacks = list(us[0].accuracies)
        accs = {a: tuple(float(np.mean([u.accuracies[a][i] for u in us])) for i in (0, 1))
                for a in attacks}
        dist = DistortionReport(
            pcd=float(np.mean([u.distortion.pcd for u in us])),
            cvd=float(np.mean([u.distortion.cvd for u in us])),
            label_loss_rate=float(np.mean([u.distortion.label_loss_rate for u in us])),
            n_queries=int(sum(u.distortion.n_queries for u in us)),
            fallback_rate=float(np.mean([u.distortion.fallback_rate for u in us])),
        )
        cells.append(CellSummary(dname, mname, accs, dist,
                                 float(np.mean([u.train_accuracy for u in us])),
                                 float(np.mean([u.test_accuracy for u in us])), len(us)))
    return cells


def render_tables(cells: list[CellSummary]) -> dict[str, str]:
    shadow_rows, metric_rows, dist_rows, corr_rows = [], [], [], []
    experiment_cells = []
    reports = []
    for c in cells:
        d = c.distortion
        tail = [_fmt(d.pcd), _fmt(d.cvd), _fmt(d.label_loss_rate), _fmt(d.fallback_rate)]
        for attack, (a0, a1) in c.accuracies.items():
            row = [c.dataset, c.model, attack, _fmt(a0), _fmt(a1), *tail]
            (shadow_rows if attack.startswith("shadow") else metric_rows).append(row)
            for defended, acc in ((False, a0), (True, a1)):
                reports.append({"dataset": c.dataset, "model": c.model, "attack": attack,
                                "defended": defended, "accuracy": round(acc, 6),
                                "n_eval": d.n_queries})
            if attack == "shadow":
                experiment_cells.append(ExperimentCell(c.dataset, c.model, attack, a0, a1, d))
        dist_rows.append([c.dataset, c.model, *tail, str(d.n_queries),
                          _fmt(c.train_accuracy), _fmt(c.test_accuracy)])
    out = {
        "shadow_attacks.csv": _csv_text(TABLE_HEADER, shadow_rows),
        "metric_attacks.csv": _csv_text(TABLE_HEADER, metric_rows),
        "distortion.csv": _csv_text(DISTORTION_HEADER, dist_rows),
        "attack_reports.json": json.dumps(reports, indent=1) + "\n",
    }
    if experiment_cells:
        table = correlation_table(experiment_cells)
        for r in table.rows:
            corr_rows.append([r["model"], r["dataset"], _fmt(r["accuracy_drop"]),
                              _fmt(r["cvd"]), _fmt(r["pcd"])])
        r = table.pearson_drop_cvd
        corr_rows.append(["pearson_r(drop,cvd)", "", "NA" if r is None else _fmt(r), "", ""])
        out["correlation.csv"] = _csv_text(["model", "dataset", "accuracy_drop", "cvd", "pcd"],
                                           corr_rows)
    return out


@dataclass
class RunResult:
    out_dir: Path
    cells: list[CellSummary]
    units: list[UnitResult]
    files: dict[str, Path]

    @property
    def errors(self) -> list[UnitResult]:
        return [u for u in self.units if u.error]


def run(cfg: ExperimentConfig, base_dir: Path = Path("."), out_dir: Path | None = None,
        jobs: int = 1) -> RunResult:
    """Run every (dataset, model, repeat) unit and write CSV tables and a manifest."""
    started = time.perf_counter()
    out_dir = Path(out_dir if out_dir is not None else base_dir / cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with threadpool_limits(1):
        datasets = [load_dataset(d, cfg.p, base_dir, cfg.seed) for d in cfg.datasets]
    load_time = time.perf_counter() - started

    work = []
    for sec, ds in zip(cfg.datasets, datasets):
        for m in cfg.models:
            for r in range(sec.repeats or cfg.repeats):
                work.append((ds, m, cfg, r))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            units = list(pool.map(_run_unit_star, work))
    else:
        units = [run_unit(*w) for w in work]

    cells = aggregate(units)
    texts = render_tables(cells)
    files = {}
    for name, text in texts.items():
        path = out_dir / name
        path.write_text(text)
        files[name] = path

    stage_totals: dict[str, float] = {"load": load_time}
    for u in units:
        for k, v in u.timings.items():
            stage_totals[k] = stage_totals.get(k, 0.0) + v
    stage_totals["wall"] = time.perf_counter() - started
    input_hashes = {}
    for sec in cfg.datasets:
        if sec.csv:
            p = Path(sec.csv) if Path(sec.csv).is_absolute() else base_dir / sec.csv
            input_hashes[sec.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "software": {"package": "nblend", "version": __version__,
                     "numpy": np.__version__},
        "config": json.loads(cfg.model_dump_json()),
        "jobs": jobs,
        "units": [
            {"dataset": u.dataset, "model": u.model, "repeat": u.repeat,
             "seeds": u.seeds, "error": u.error}
            for u in units
        ],
        "inputs": input_hashes,
        "artifacts": {n: hashlib.sha256(t.encode()).hexdigest() for n, t in texts.items()},
        "distortion_population": "eval members + eval non-members, fallback queries excluded",
        "wall_clock_seconds": stage_totals,
    }
    mpath = out_dir / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    files["manifest.json"] = mpath
    return RunResult(out_dir, cells, units, files)


def run_config(path, out_dir=None, jobs: int = 1, seed: int | None = None) -> RunResult:
    cfg, base = load_experiment(path)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return run(cfg, base, Path(out_dir) if out_dir else None, jobs)
