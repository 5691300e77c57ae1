"""CSV report emission from evaluation results.

Every writer produces a header row even when there is nothing to report.
Floats are written with ``repr`` so identical inputs give identical bytes;
undefined values are written as empty fields.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from zmerge.metrics import CELL_M, BIN_S, SCALARS

REPORT_FILES = ("speed_over_time.csv", "spacetime.csv", "queue_vs_pr.csv", "comfort_traces.csv",
                "latency_cdf.csv", "summary.csv")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _ensure_dir(outdir) -> Path:
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    return out


def latency_cdf(samples: list[float]) -> list[tuple[float, float]]:
    xs = sorted(samples)
    n = len(xs)
    return [(x, (i + 1) / n) for i, x in enumerate(xs)]


def emit_reports(results: list[dict], outdir) -> list[Path]:
    """Write the standard CSV set for a list of evaluation result records.

    Each record is the JSON-able dict produced by
    :meth:`zmerge.runner.EvalResult.to_dict` (policy, penetration rate,
    aggregated scalars, mean series, space-time grid, traces, latency samples).
    """
    out = _ensure_dir(outdir)
    paths = [out / name for name in REPORT_FILES]
    speed, spacetime, queue, comfort, latency, summary = paths

    def speed_rows():
        for r in results:
            for t, v in enumerate(r["speed_series"], start=1):
                yield r["policy"], r["penetration_rate"], t, v

    def spacetime_rows():
        for r in results:
            for c, row in enumerate(r["space_time_grid"]):
                for b, v in enumerate(row):
                    yield (r["policy"], r["penetration_rate"], r["grid_x0"] + c * CELL_M, b * BIN_S,
                           None if v is None else float(v))

    def queue_rows():
        for r in results:
            q = r["aggregate"]["mean_queue"]
            yield r["penetration_rate"], r["policy"], q["mean"], q["std"], q["n"]

    def comfort_rows():
        for r in results:
            for vid in sorted(r["comfort_traces"], key=int):
                for tick, acc in r["comfort_traces"][vid]:
                    yield r["policy"], r["penetration_rate"], int(vid), tick, acc

    def latency_rows():
        for r in results:
            for x, frac in latency_cdf(r["latency_ms"]):
                yield r["policy"], x, frac

    def summary_rows():
        for r in results:
            agg = r["aggregate"]
            row = [r["penetration_rate"], r["policy"], r["episodes"]]
            for name in SCALARS:
                row += [agg[name]["mean"], agg[name]["std"]]
            yield row

    write_csv(speed, ["policy", "penetration_rate", "tick", "mean_speed"], speed_rows())
    write_csv(spacetime, ["policy", "penetration_rate", "x_m", "t_s", "mean_speed"], spacetime_rows())
    write_csv(queue, ["penetration_rate", "policy", "mean_queue", "std_queue", "episodes"], queue_rows())
    write_csv(comfort, ["policy", "penetration_rate", "vehicle", "tick", "accel"], comfort_rows())
    write_csv(latency, ["policy", "latency_ms", "cumulative_fraction"], latency_rows())
    summary_header = ["penetration_rate", "policy", "episodes"]
    for name in SCALARS:
        summary_header += [f"{name}_mean", f"{name}_std"]
    write_csv(summary, summary_header, summary_rows())
    return paths
