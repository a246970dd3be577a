"""Command-line front end: tokenize, index, scan, score, analyze, report, synth.

Runs are configured by flags, optionally layered over a TOML config file
(``--config``); flags win. Every subcommand is deterministic for fixed
inputs, parallel stages produce byte-identical output to single-threaded
runs, and output files are written atomically (spill space can be pointed
elsewhere with ``CONTAMKIT_TMP``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import numpy as np
import tomli

from . import __version__, corpusindex, epganalysis, kernels, matchengine, metrics, svgplot, synthoracle
from .corpusindex import NGramIndex, ShardStore, vocab_hash32
from .errors import ConfigError, ContamkitError, MissingIndex, TokenizerMismatch
from .metrics import Metric, MetricParams
from .textprep import NORMALIZED, RAW, get_tokenizer, read_benchmark, tokenize_benchmark

log = logging.getLogger("contamkit")

MODES = ("raw", "norm")


# ---------------------------------------------------------------------------
# atomic output helpers
# ---------------------------------------------------------------------------


def _spill_dir(target: Path) -> str:
    return os.environ.get("CONTAMKIT_TMP") or str(target.parent)


@contextmanager
def atomic_output(path: Path):
    """Yield a temp path that replaces ``path`` on success, vanishes on failure."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=_spill_dir(path))
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class OutputTracker:
    """Removes files created during a failed run so no torn outputs remain."""

    def __init__(self):
        self.created: list[Path] = []

    def write(self, path: Path, text: str) -> None:
        with atomic_output(path) as tmp:
            tmp.write_text(text, encoding="utf-8")
        self.created.append(path)

    def write_via(self, path: Path, writer) -> None:
        with atomic_output(path) as tmp:
            writer(tmp)
        self.created.append(path)

    def rollback(self) -> None:
        for path in self.created:
            try:
                path.unlink()
            except OSError:
                pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


class RunConfig:
    """Flag values layered over a TOML document; flags win."""

    def __init__(self, args: argparse.Namespace, section: str):
        self.args = args
        self.section = section
        self.doc: dict = {}
        if getattr(args, "config", None):
            try:
                with open(args.config, "rb") as fh:
                    self.doc = tomli.load(fh)
            except (OSError, tomli.TOMLDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from None

    def get(self, key: str, default=None):
        flag = getattr(self.args, key, None)
        if flag is not None:
            return flag
        for table in (self.doc.get(self.section, {}), self.doc.get("common", {})):
            if key in table:
                return table[key]
        return default

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')} for '{self.section}'")
        return value


def _build_grid(cfg: RunConfig) -> list[MetricParams]:
    metric_names = cfg.get("metric") or [m.value for m in Metric]
    ns = [int(x) for x in (cfg.get("n") or metrics.N_GRID)]
    mincounts = [int(x) for x in (cfg.get("mincount") or corpusindex.MINCOUNT_GRID)]
    budgets = [int(x) for x in (cfg.get("skip_budget") or matchengine.SKIP_BUDGET_GRID)]
    locations = cfg.get("location") or [metrics.LOCATION_FULL]
    grid: list[MetricParams] = []
    try:
        for name in metric_names:
            metric = Metric(name)
            for loc in locations:
                for n in ns:
                    if metric.uses_mincount:
                        grid.extend(
                            MetricParams(metric=metric, n=n, mincount=mc, location=loc)
                            for mc in mincounts
                        )
                    else:
                        grid.extend(
                            MetricParams(metric=metric, n=n, skip_budget=sb, location=loc)
                            for sb in budgets
                        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not grid:
        raise ConfigError("empty metric grid")
    return grid


def params_slug(params: MetricParams) -> str:
    bits = [params.metric.value, f"n{params.n}"]
    if params.mincount is not None:
        bits.append(f"mc{params.mincount}")
    if params.skip_budget is not None:
        bits.append(f"sb{params.skip_budget}")
    if params.location != metrics.LOCATION_FULL:
        bits.append(params.location)
    return "_".join(bits)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_tokenize(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "tokenize")
    corpus_dir = Path(cfg.require("corpus"))
    out_dir = Path(cfg.require("out"))
    tokenizer = get_tokenizer(cfg.get("tokenizer", "wordbyte"))
    modes = _selected_modes(cfg.get("mode", "both"))
    files = sorted(p for p in corpus_dir.iterdir() if p.is_file()) if corpus_dir.is_dir() else None
    if files is None:
        raise ConfigError(f"corpus directory {corpus_dir} does not exist")
    for mode in modes:
        (out_dir / mode).mkdir(parents=True, exist_ok=True)
    if not files:
        log.warning("corpus directory %s is empty; wrote no shard files", corpus_dir)
        return 0
    vh = vocab_hash32(tokenizer.vocab_id)
    tracker = OutputTracker()
    try:
        for i, path in enumerate(files):
            for mode in modes:
                norm_mode = NORMALIZED if mode == "norm" else RAW
                tokens, bounds = corpusindex.tokenize_text_shard(path, tokenizer, norm_mode)
                dest = out_dir / mode / f"shard_{i:05d}.tok"
                tracker.write_via(
                    dest, lambda tmp, t=tokens, b=bounds: corpusindex.write_token_shard(tmp, t, b, vh)
                )
        log.info("tokenized %d shard file(s) into %s (%s)", len(files), out_dir, "+".join(modes))
    except BaseException:
        tracker.rollback()
        raise
    return 0


def _selected_modes(mode: str) -> tuple[str, ...]:
    if mode == "both":
        return MODES
    if mode in MODES:
        return (mode,)
    raise ConfigError(f"unknown mode {mode!r}; expected raw, norm, or both")


def _index_path(index_dir: Path, mode: str, n: int) -> Path:
    return index_dir / f"{mode}_n{n}.idx"


def cmd_index(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "index")
    tokens_dir = Path(cfg.require("tokens"))
    out_dir = Path(cfg.require("out"))
    threads = int(cfg.get("threads", 1))
    ns = cfg.get("n")
    mode = cfg.get("mode")
    if ns is None and mode is None:
        # default grid needs normalized indexes at every n and the raw seed index
        plan = [("norm", n) for n in metrics.N_GRID] + [("raw", metrics.SEED_N)]
    else:
        plan = [(m, int(n)) for m in _selected_modes(mode or "both") for n in (ns or metrics.N_GRID)]
    tracker = OutputTracker()
    try:
        for m, n in plan:
            shard_dir = tokens_dir / m
            if not shard_dir.is_dir():
                raise MissingIndex(f"tokenized shard directory {shard_dir} does not exist")
            store = ShardStore.load_dir(shard_dir)
            index = corpusindex.build_index(store, n, threads=threads)
            dest = _index_path(out_dir, m, n)
            tracker.write_via(dest, lambda tmp, idx=index: idx.save(tmp))
            log.info("indexed %s n=%d: %d entries, %d windows", m, n, index.entry_count, index.total_count)
    except BaseException:
        tracker.rollback()
        raise
    return 0


class _LazyIndexes:
    def __init__(self, index_dir: Path):
        self.index_dir = index_dir
        self.cache: dict[tuple[str, int], NGramIndex] = {}

    def __call__(self, mode: str, n: int) -> NGramIndex:
        key = (mode, n)
        if key not in self.cache:
            path = _index_path(self.index_dir, mode, n)
            if not path.exists():
                raise MissingIndex(f"no index for mode={mode} n={n}: expected {path}")
            self.cache[key] = NGramIndex.load(path)
        return self.cache[key]


def _load_scoring_inputs(cfg: RunConfig):
    tokenizer = get_tokenizer(cfg.get("tokenizer", "wordbyte"))
    tokens_dir = Path(cfg.require("tokens"))
    store = ShardStore.load_dir(tokens_dir / "raw")
    if len(store) and store.vocab_hash != vocab_hash32(tokenizer.vocab_id):
        raise TokenizerMismatch(
            f"corpus shards in {tokens_dir / 'raw'} were tokenized with a different tokenizer"
        )
    records = read_benchmark(cfg.require("benchmark"))
    raw, norm = tokenize_benchmark(records, tokenizer)
    return store, raw, norm


def cmd_score(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "score")
    out_path = Path(cfg.require("out"))
    index_for = _LazyIndexes(Path(cfg.require("indexes")))
    threads = int(cfg.get("threads", 1))
    grid = _build_grid(cfg)
    store, raw, norm = _load_scoring_inputs(cfg)
    rows = metrics.score_grid(
        raw, norm, index_for, store, grid, seed_n=int(cfg.get("seed_n", metrics.SEED_N)), threads=threads
    )
    tracker = OutputTracker()
    try:
        tracker.write(out_path, "".join(_score_line(row) for row in rows))
    except BaseException:
        tracker.rollback()
        raise
    log.info("scored %d samples x %d grid cells -> %s", len(raw), len(grid), out_path)
    return 0


def _score_line(row: metrics.ContaminationScore) -> str:
    p = row.params
    return (
        json.dumps(
            {
                "sample_id": row.sample_id,
                "metric": p.metric.value,
                "n": p.n,
                "mincount": p.mincount,
                "skip_budget": p.skip_budget,
                "location": p.location,
                "score": row.score,
                "longest_span_len": row.longest_len,
            },
            sort_keys=True,
        )
        + "\n"
    )


def cmd_scan(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "scan")
    out_path = Path(cfg.require("out"))
    index_for = _LazyIndexes(Path(cfg.require("indexes")))
    budget = int(cfg.get("skip_budget", 0))
    mincount = int(cfg.get("mincount", 1))
    store, raw, _ = _load_scoring_inputs(cfg)
    index = index_for("raw", int(cfg.get("seed_n", metrics.SEED_N)))
    entries = [(s, matchengine.all_spans(s, index, store, budget, mincount)) for s in raw]
    tracker = OutputTracker()
    try:
        tracker.write_via(out_path, lambda tmp: matchengine.write_span_dump(tmp, entries))
    except BaseException:
        tracker.rollback()
        raise
    log.info("dumped spans for %d samples -> %s", len(raw), out_path)
    return 0


def _read_scores_jsonl(path: Path) -> dict[MetricParams, dict[str, float]]:
    by_params: dict[MetricParams, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                params = MetricParams(
                    metric=Metric(obj["metric"]),
                    n=int(obj["n"]),
                    mincount=obj.get("mincount"),
                    skip_budget=obj.get("skip_budget"),
                    location=obj.get("location", metrics.LOCATION_FULL),
                )
                sid = str(obj["sample_id"])
                score = float(obj["score"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"{path} line {lineno}: bad score row: {exc}") from None
            by_params.setdefault(params, {})[sid] = score
    return by_params


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "analyze")
    out_dir = Path(cfg.require("out"))
    benchmark_id = cfg.get("benchmark_id") or Path(cfg.require("scores")).stem
    z_min = float(cfg.get("z_min", epganalysis.DEFAULT_Z_MIN))
    svg = bool(cfg.get("svg", False))
    by_params = _read_scores_jsonl(Path(cfg.require("scores")))
    by_model = epganalysis.read_results(Path(cfg.require("results")))
    records: list[epganalysis.AnalysisRecord] = []
    tracker = OutputTracker()
    try:
        for params in sorted(by_params, key=lambda p: p.key()):
            scores = by_params[params]
            for model_id in sorted(by_model):
                curve = epganalysis.threshold_sweep(
                    scores, by_model[model_id], params, model_id=model_id, benchmark_id=benchmark_id
                )
                optimal = epganalysis.select_threshold(curve, z_min)
                stem = f"analysis__{benchmark_id}__{model_id}__{params_slug(params)}"
                tracker.write_via(
                    out_dir / f"{stem}.csv", lambda tmp, c=curve: epganalysis.write_curve_csv(tmp, c)
                )
                if svg:
                    tracker.write(out_dir / f"{stem}.svg", svgplot.render_contam_curve(curve, optimal))
                records.append(
                    epganalysis.AnalysisRecord(
                        benchmark_id=benchmark_id, model_id=model_id, params=params, optimal=optimal
                    )
                )
        report = epganalysis.max_z_report(records, z_min)
        tracker.write(out_dir / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    except BaseException:
        tracker.rollback()
        raise
    log.info(
        "analyzed %d (params, model) sweeps for benchmark %s -> %s",
        len(records),
        benchmark_id,
        out_dir,
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "report")
    paths = args.reports or cfg.get("reports") or []
    if not paths:
        raise ConfigError("report needs at least one report.json path")
    benchmarks: dict = {}
    z_min = None
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        z_min = doc.get("z_min", z_min)
        for bench, cells in doc.get("benchmarks", {}).items():
            benchmarks.setdefault(bench, {}).update(cells)
    merged = {
        "z_min": z_min if z_min is not None else epganalysis.DEFAULT_Z_MIN,
        "weighting": "benchmark averages weighted by significant model-pair count N",
        "benchmarks": benchmarks,
        "overall": {},
    }
    agg: dict[str, dict] = {}
    for cells in benchmarks.values():
        for label, cell in cells.items():
            slot = agg.setdefault(label, {"weighted_z_sum": 0.0, "n_significant": 0})
            if cell["avg_max_z"] is not None:
                slot["weighted_z_sum"] += cell["avg_max_z"] * cell["n_significant"]
                slot["n_significant"] += cell["n_significant"]
    merged["overall"] = {
        label: {
            "weighted_avg_max_z": (s["weighted_z_sum"] / s["n_significant"]) if s["n_significant"] else None,
            "n_significant": s["n_significant"],
        }
        for label, s in agg.items()
    }
    table = epganalysis.format_report_table(merged)
    out = cfg.get("out")
    if out:
        tracker = OutputTracker()
        try:
            tracker.write(Path(out), table)
        except BaseException:
            tracker.rollback()
            raise
    sys.stdout.write(table)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = RunConfig(args, "synth")
    spec_path = Path(cfg.require("spec"))
    out_dir = Path(cfg.require("out"))
    try:
        spec = synthoracle.PlantSpec.from_json(json.loads(spec_path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read plant spec {spec_path}: {exc}") from None
    instance = synthoracle.generate(spec)
    tracker = OutputTracker()
    try:
        corpus_dir = out_dir / "corpus"
        corpus_dir.mkdir(parents=True, exist_ok=True)
        for shard in instance.shards:
            lines = []
            prev = 0
            for bound in shard.doc_boundaries:
                doc = shard.tokens[prev : int(bound)]
                lines.append(corpusindex.escape_doc(" ".join(str(int(t)) for t in doc)))
                prev = int(bound)
            tracker.write(corpus_dir / f"shard_{shard.shard_id:05d}.txt", "\n".join(lines) + "\n")
        bench_lines = []
        for sample in instance.samples:
            bench_lines.append(
                json.dumps(
                    {
                        "id": sample.sample_id,
                        "prompt": " ".join(str(int(t)) for t in sample.prompt_tokens),
                        "answer": " ".join(str(int(t)) for t in sample.answer_tokens),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        tracker.write(out_dir / "benchmark.jsonl", "".join(bench_lines))
        if instance.results is not None:
            result_lines = []
            for model_id in sorted(instance.results):
                for sid in sorted(instance.results[model_id]):
                    result_lines.append(
                        json.dumps(
                            {
                                "sample_id": sid,
                                "model_id": model_id,
                                "value": instance.results[model_id][sid],
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
            tracker.write(out_dir / "results.jsonl", "".join(result_lines))
        tracker.write_via(out_dir / "groundtruth.json", lambda tmp: synthoracle.write_ground_truth(tmp, instance))
    except BaseException:
        tracker.rollback()
        raise
    log.info(
        "synthesized %d docs / %d samples / %d plants -> %s",
        spec.corpus_docs,
        spec.n_samples,
        len(spec.planted),
        out_dir,
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="TOML config file; flags override its values")
    sub.add_argument("--threads", type=int, help="worker thread hint (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contamkit",
        description="Quantify evaluation-data contamination of benchmarks against a pre-training corpus.",
    )
    parser.add_argument("--version", action="version", version=f"contamkit {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("tokenize", help="convert raw text shards to tokenized shard files")
    p.add_argument("--corpus", help="directory of raw text shards (one document per line)")
    p.add_argument("--out", help="output directory (raw/ and norm/ subdirectories)")
    p.add_argument("--tokenizer", help="tokenizer spec (wordbyte, wordbyte:<vocab>, intstr)")
    p.add_argument("--mode", choices=["raw", "norm", "both"], help="which tokenizations to write")
    _add_common(p)
    p.set_defaults(func=cmd_tokenize)

    p = subs.add_parser("index", help="build n-gram indexes over tokenized shards")
    p.add_argument("--tokens", help="tokenized shard directory (from 'tokenize')")
    p.add_argument("--out", help="index output directory")
    p.add_argument("--n", action="append", type=int, help="window length (repeatable)")
    p.add_argument("--mode", choices=["raw", "norm", "both"], help="which tokenization to index")
    _add_common(p)
    p.set_defaults(func=cmd_index)

    p = subs.add_parser("score", help="score a benchmark over the metric grid")
    p.add_argument("--tokens", help="tokenized shard directory")
    p.add_argument("--indexes", help="index directory (from 'index')")
    p.add_argument("--benchmark", help="benchmark JSONL file")
    p.add_argument("--tokenizer", help="tokenizer spec (must match the corpus)")
    p.add_argument("--out", help="output scores.jsonl path")
    p.add_argument("--metric", action="append", choices=[m.value for m in Metric])
    p.add_argument("--n", action="append", type=int)
    p.add_argument("--mincount", action="append", type=int)
    p.add_argument("--skip-budget", dest="skip_budget", action="append", type=int)
    p.add_argument("--location", action="append", choices=list(metrics.LOCATION_FILTERS))
    p.add_argument("--seed-n", dest="seed_n", type=int, help="seed window length (default 8)")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = subs.add_parser("scan", help="debug dump of extended match spans")
    p.add_argument("--tokens", help="tokenized shard directory")
    p.add_argument("--indexes", help="index directory")
    p.add_argument("--benchmark", help="benchmark JSONL file")
    p.add_argument("--tokenizer", help="tokenizer spec (must match the corpus)")
    p.add_argument("--out", help="output spans.jsonl path")
    p.add_argument("--skip-budget", dest="skip_budget", type=int)
    p.add_argument("--mincount", type=int)
    p.add_argument("--seed-n", dest="seed_n", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_scan)

    p = subs.add_parser("analyze", help="threshold sweeps, ConTAM curves, and report.json")
    p.add_argument("--scores", help="scores.jsonl (from 'score')")
    p.add_argument("--results", help="per-sample model results JSONL")
    p.add_argument("--benchmark-id", dest="benchmark_id", help="benchmark name for outputs")
    p.add_argument("--out", help="output directory")
    p.add_argument("--z-min", dest="z_min", type=float, help="significance cutoff (default 2.0)")
    p.add_argument("--svg", action="store_const", const=True, help="also render ConTAM curve SVGs")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = subs.add_parser("report", help="merge report.json files into a max-z table")
    p.add_argument("reports", nargs="*", help="report.json paths")
    p.add_argument("--out", help="write the table to this file as well")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    p = subs.add_parser("synth", help="generate a synthetic corpus/benchmark with ground truth")
    p.add_argument("--spec", help="plant spec JSON file")
    p.add_argument("--out", help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContamkitError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
