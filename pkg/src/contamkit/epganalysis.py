"""Estimated Performance Gain, z-score threshold selection, and ConTAM curves.

EPG is full-benchmark mean performance minus clean-subset mean performance,
so positive EPG means the samples marked contaminated inflated the score.
Per threshold, z = EPG / (sigma_full / sqrt(N_clean)); sweeping thresholds
and plotting EPG against the percent marked contaminated gives the ConTAM
curve, and the max-z point picks the operating threshold (ties resolve to
the larger threshold, i.e. the conservative, smaller contaminated set).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateOrdering,
    EmptyCleanSet,
    InvalidRecord,
    MissingResults,
    ZeroContamination,
)
from .metrics import MetricParams

DEFAULT_Z_MIN = 2.0  # two-sided ~95%; the paper reports "significant EPG" without a cutoff


@dataclass(frozen=True)
class ThresholdPoint:
    threshold: float
    pct_contaminated: float
    epg: float
    err: float
    z: float
    clean_n: int


@dataclass(eq=False)
class ContamCurve:
    """Threshold sweep for one (benchmark, model, params) triple.

    Points are sorted by pct_contaminated ascending: one per distinct
    contamination score value plus the zero threshold, minus any point
    whose clean subset would be empty.
    """

    points: list[ThresholdPoint]
    params: MetricParams
    model_id: str
    benchmark_id: str


@dataclass(frozen=True)
class OptimalThreshold:
    params: MetricParams
    t_star: float
    z_star: float
    significant: bool
    point: ThresholdPoint


def _aligned_values(results: Mapping[str, float]) -> tuple[list[str], np.ndarray]:
    ids = sorted(results)
    return ids, np.asarray([float(results[i]) for i in ids], dtype=np.float64)


def epg(results: Mapping[str, float], clean_ids: set[str]) -> float:
    """Mean over all samples minus mean over the clean subset."""
    if not clean_ids:
        raise EmptyCleanSet("clean subset is empty")
    missing = clean_ids - results.keys()
    if missing:
        raise MissingResults(f"clean ids not in results: {sorted(missing)[:5]}")
    ids, values = _aligned_values(results)
    mask = np.asarray([i in clean_ids for i in ids], dtype=bool)
    return float(np.mean(values)) - float(np.mean(values[mask]))


def threshold_sweep(
    scores: Mapping[str, float],
    results: Mapping[str, float],
    params: MetricParams,
    model_id: str = "",
    benchmark_id: str = "",
) -> ContamCurve:
    """ConTAM curve: one point per candidate threshold ({0} + distinct scores)."""
    extra = scores.keys() - results.keys()
    missing = results.keys() - scores.keys()
    if extra or missing:
        raise MissingResults(
            f"sample ids differ between scores and results for model {model_id!r}: "
            f"{len(extra)} scored-only (e.g. {sorted(extra)[:3]}), "
            f"{len(missing)} result-only (e.g. {sorted(missing)[:3]})"
        )
    ids, values = _aligned_values(results)
    score_arr = np.asarray([float(scores[i]) for i in ids], dtype=np.float64)
    n_total = len(ids)
    mean_full = float(np.mean(values))
    sigma_full = float(np.std(values))
    candidates = sorted({0.0} | set(float(s) for s in score_arr))
    points = []
    for t in reversed(candidates):
        contaminated = score_arr > t
        clean_n = n_total - int(contaminated.sum())
        if clean_n == 0:
            continue
        epg_t = mean_full - float(np.mean(values[~contaminated]))
        err = sigma_full / math.sqrt(clean_n)
        z = epg_t / err if err > 0 else 0.0
        points.append(
            ThresholdPoint(
                threshold=t,
                pct_contaminated=100.0 * int(contaminated.sum()) / n_total,
                epg=epg_t,
                err=err,
                z=z,
                clean_n=clean_n,
            )
        )
    return ContamCurve(points=points, params=params, model_id=model_id, benchmark_id=benchmark_id)


def select_threshold(curve: ContamCurve, z_min: float = DEFAULT_Z_MIN) -> OptimalThreshold:
    """Max-z point of the curve; equal z resolves to the larger threshold."""
    if not curve.points:
        raise ValueError("cannot select a threshold from an empty curve")
    best = max(curve.points, key=lambda p: (p.z, p.threshold))
    return OptimalThreshold(
        params=curve.params,
        t_star=best.threshold,
        z_star=best.z,
        significant=best.z >= z_min,
        point=best,
    )


def gain_per_pct(point: ThresholdPoint) -> float:
    """EPG per percent contaminated at one operating point."""
    if point.pct_contaminated <= 0:
        raise ZeroContamination("no samples marked contaminated at this threshold")
    return point.epg / point.pct_contaminated


def ordering_correlation(
    scores_a: Mapping[str, float], scores_b: Mapping[str, float]
) -> float:
    """Spearman rank correlation (average ranks on ties) of two score maps."""
    if scores_a.keys() != scores_b.keys():
        raise MissingResults("score maps cover different sample sets")
    ids = sorted(scores_a)
    a = np.asarray([scores_a[i] for i in ids], dtype=np.float64)
    b = np.asarray([scores_b[i] for i in ids], dtype=np.float64)
    if a.shape[0] < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateOrdering("rank correlation undefined for a constant score vector")
    rho = stats.spearmanr(a, b).statistic
    return float(rho)


# ---------------------------------------------------------------------------
# result ingestion and report aggregation
# ---------------------------------------------------------------------------


def read_results(path: str | Path) -> dict[str, dict[str, float]]:
    """Per-model sample values from JSONL {"sample_id", "model_id", "value"}."""
    by_model: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sid = str(obj["sample_id"])
                model = str(obj["model_id"])
                value = float(obj["value"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InvalidRecord(f"{path} line {lineno}: {exc}") from None
            bucket = by_model.setdefault(model, {})
            if sid in bucket:
                raise InvalidRecord(f"{path} line {lineno}: duplicate sample {sid!r} for model {model!r}")
            bucket[sid] = value
    return by_model


CURVE_CSV_FIELDS = ("threshold", "pct_contaminated", "epg", "err", "z", "clean_n")


def write_curve_csv(path: str | Path, curve: ContamCurve) -> None:
    """One CSV row per threshold point; floats use repr so re-parsing is exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_CSV_FIELDS)
        for p in curve.points:
            writer.writerow(
                [repr(p.threshold), repr(p.pct_contaminated), repr(p.epg), repr(p.err), repr(p.z), p.clean_n]
            )


def read_curve_csv(path: str | Path) -> list[ThresholdPoint]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            ThresholdPoint(
                threshold=float(row["threshold"]),
                pct_contaminated=float(row["pct_contaminated"]),
                epg=float(row["epg"]),
                err=float(row["err"]),
                z=float(row["z"]),
                clean_n=int(row["clean_n"]),
            )
            for row in reader
        ]


@dataclass(eq=False)
class AnalysisRecord:
    """One analyzed (benchmark, model, params) triple, feeding the report."""

    benchmark_id: str
    model_id: str
    params: MetricParams
    optimal: OptimalThreshold


def max_z_report(records: Sequence[AnalysisRecord], z_min: float = DEFAULT_Z_MIN) -> dict:
    """Nested report: per benchmark x metric, the average max-z over models
    with significant EPG plus per-model operating points, and a bottom row
    weighted by the number of significant model pairs."""
    benchmarks: dict[str, dict[str, dict]] = {}
    overall: dict[str, dict[str, float]] = {}
    for rec in sorted(records, key=lambda r: (r.benchmark_id, r.params.key(), r.model_id)):
        label = rec.params.label()
        cell = benchmarks.setdefault(rec.benchmark_id, {}).setdefault(
            label, {"avg_max_z": None, "n_significant": 0, "per_model": {}}
        )
        point = rec.optimal.point
        try:
            gpp = gain_per_pct(point)
        except ZeroContamination:
            gpp = None
        cell["per_model"][rec.model_id] = {
            "t_star": rec.optimal.t_star,
            "z_star": rec.optimal.z_star,
            "significant": rec.optimal.significant,
            "pct_contaminated": point.pct_contaminated,
            "epg": point.epg,
            "gain_per_pct": gpp,
            "clean_n": point.clean_n,
        }
    for bench_cells in benchmarks.values():
        for label, cell in bench_cells.items():
            zs = [m["z_star"] for m in cell["per_model"].values() if m["significant"]]
            cell["n_significant"] = len(zs)
            cell["avg_max_z"] = sum(zs) / len(zs) if zs else None
            agg = overall.setdefault(label, {"weighted_z_sum": 0.0, "n_significant": 0})
            if zs:
                agg["weighted_z_sum"] += (sum(zs) / len(zs)) * len(zs)
                agg["n_significant"] += len(zs)
    return {
        "z_min": z_min,
        "weighting": "benchmark averages weighted by significant model-pair count N",
        "benchmarks": benchmarks,
        "overall": {
            label: {
                "weighted_avg_max_z": (agg["weighted_z_sum"] / agg["n_significant"])
                if agg["n_significant"]
                else None,
                "n_significant": agg["n_significant"],
            }
            for label, agg in overall.items()
        },
    }


def format_report_table(report: dict) -> str:
    """Publication-style text table of the max-z report (dash = no significant EPG)."""
    labels = sorted({lbl for cells in report["benchmarks"].values() for lbl in cells})
    rows = []
    header = ["benchmark"] + [f"{lbl} avg" for lbl in labels] + [f"{lbl} N" for lbl in labels]
    for bench in sorted(report["benchmarks"]):
        cells = report["benchmarks"][bench]
        avg_cols = []
        n_cols = []
        for lbl in labels:
            cell = cells.get(lbl)
            if cell is None or cell["avg_max_z"] is None:
                avg_cols.append("-")
                n_cols.append(str(cell["n_significant"]) if cell else "0")
            else:
                avg_cols.append(f"{cell['avg_max_z']:.1f}")
                n_cols.append(str(cell["n_significant"]))
        rows.append([bench] + avg_cols + n_cols)
    bottom = ["weighted avg"]
    for lbl in labels:
        agg = report["overall"].get(lbl, {"weighted_avg_max_z": None, "n_significant": 0})
        bottom.append("-" if agg["weighted_avg_max_z"] is None else f"{agg['weighted_avg_max_z']:.1f}")
    for lbl in labels:
        agg = report["overall"].get(lbl, {"n_significant": 0})
        bottom.append(str(agg["n_significant"]))
    rows.append(bottom)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"
