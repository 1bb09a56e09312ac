"""Aggregate finished runs into drop / CVD heatmap grids and a correlation table."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from nblend.metrics import DistortionReport, ExperimentCell, correlation_table

MISSING = "NA"


def find_runs(results_dir: Path) -> list[Path]:
    results_dir = Path(results_dir)
    return sorted(p.parent for p in results_dir.rglob("shadow_attacks.csv"))


def read_cells(results_dir: Path, attack: str = "shadow") -> list[ExperimentCell]:
    cells = []
    for run_dir in find_runs(results_dir):
        with (run_dir / "shadow_attacks.csv").open(newline="") as fh:
            for row in csv.DictReader(fh):
                if row["attack"] != attack:
                    continue
                dist = DistortionReport(float(row["pcd"]), float(row["cvd"]),
                                        float(row["label_loss_rate"]), 0,
                                        float(row["fallback_rate"]))
                cells.append(ExperimentCell(row["dataset"], row["model"], attack,
                                            float(row["acc_no_def"]), float(row["acc_def"]), dist))
    return cells


def heatmap(cells: list[ExperimentCell], value) -> tuple[list[str], list[str], list[list]]:
    """Rows = datasets, columns = models, in first-appearance order; gaps stay ``None``."""
    datasets = list(dict.fromkeys(c.dataset for c in cells))
    models = list(dict.fromkeys(c.model for c in cells))
    grid = [[None] * len(models) for _ in datasets]
    for c in cells:
        grid[datasets.index(c.dataset)][models.index(c.model)] = value(c)
    return datasets, models, grid


def _grid_csv(datasets, models, grid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", *models])
    for name, row in zip(datasets, grid):
        w.writerow([name, *(MISSING if v is None else f"{v:.6f}" for v in row)])
    return buf.getvalue()


def _grid_text(title, datasets, models, grid) -> str:
    width = max([len(m) for m in models] + [8])
    lead = max([len(d) for d in datasets] + [7])
    lines = [title, " " * lead + "  " + "  ".join(m.rjust(width) for m in models)]
    for name, row in zip(datasets, grid):
        cells = ((MISSING if v is None else f"{v:.4f}").rjust(width) for v in row)
        lines.append(name.ljust(lead) + "  " + "  ".join(cells))
    return "\n".join(lines)


def report(results_dir, out_dir=None) -> str:
    """Write heatmap_drop.csv, heatmap_cvd.csv and correlation.csv; return a text summary."""
    results_dir = Path(results_dir)
    cells = read_cells(results_dir)
    if not cells:
        raise FileNotFoundError(f"no completed runs under {results_dir}")
    out_dir = Path(out_dir) if out_dir else results_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    drop = heatmap(cells, lambda c: c.drop)
    cvd = heatmap(cells, lambda c: c.distortion.cvd)
    (out_dir / "heatmap_drop.csv").write_text(_grid_csv(*drop))
    (out_dir / "heatmap_cvd.csv").write_text(_grid_csv(*cvd))

    table = correlation_table(cells)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "dataset", "accuracy_drop", "cvd", "pcd"])
    for r in table.rows:
        w.writerow([r["model"], r["dataset"], f"{r['accuracy_drop']:.6f}",
                    f"{r['cvd']:.6f}", f"{r['pcd']:.6f}"])
    (out_dir / "report_correlation.csv").write_text(buf.getvalue())

    r = table.pearson_drop_cvd
    r_text = "undefined (zero variance)" if r is None else f"{r:+.4f}"
    return "\n\n".join([
        _grid_text("Shadow attack accuracy drop", *drop),
        _grid_text("Confidence vector distortion (CVD)", *cvd),
        f"Pearson r(drop, CVD) over {len(cells)} cells: {r_text}",
    ])
