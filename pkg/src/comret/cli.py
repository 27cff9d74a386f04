"""Command-line pipeline: ingest -> retrieve -> eval -> ablate -> diagnose
-> train-toy.

Exit code 0 on success, 1 on any domain error (messages go to stderr).
Data goes to stdout or the --out target. Query scoring honors --threads,
falling back to the CMRAG_THREADS environment variable, then to 1; output
ordering is canonical (sorted by query_id) regardless of thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import _kernels, diagnostics, fusion, metrics, store, training
from .core import MODES, FusionConfig
from .errors import ComretError

DEFAULT_METRICS = "recall@5,ndcg@5,mrr@10"


def _threads(value: int | None) -> int:
    if value is not None:
        return max(1, value)
    env = os.environ.get("CMRAG_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ComretError(f"CMRAG_THREADS must be an integer, got {env!r}")


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as exc:
        raise ComretError(f"cannot read {path}: {exc.strerror}")


def cmd_ingest(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    images = store.parse_embedding_jsonl(_read_lines(args.images))
    texts = store.parse_embedding_jsonl(_read_lines(args.texts))
    index = store.build_index(images, texts, normalize=args.normalize)
    store.save_index(index, args.out)
    elapsed = time.perf_counter() - started
    print(f"pages={index.page_count} dim={index.dim} normalize={args.normalize} elapsed={elapsed:.2f}s")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = FusionConfig(mode=args.mode, alpha=args.alpha, beta=args.beta, top_k=args.k)
    index = store.load_index(args.index)
    queries = store.parse_query_jsonl(_read_lines(args.queries))
    if not queries:
        raise ComretError("query file contains no queries")
    results = fusion.run_queries(index, queries, cfg, threads=_threads(args.threads))
    with open(args.out, "w", encoding="utf-8") as fh:
        fusion.write_run(results, cfg.mode, fh)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run = fusion.read_run(_read_lines(args.run))
    if not run:
        raise ComretError("run file is empty")
    qrels = metrics.read_qrels(_read_lines(args.qrels))
    report = metrics.evaluate_run(run, qrels, args.metrics.split(","))
    metrics.write_report(report, sys.stdout, as_json=args.json)
    if report.missing:
        print(f"warning: {len(report.missing)} qrels queries missing from run, scored 0", file=sys.stderr)
    return 0


def _parse_sweep(spec: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise ComretError(f"--beta-sweep expects LO:HI:STEP, got {spec!r}")
    if step <= 0 or hi < lo:
        raise ComretError(f"bad sweep {spec!r}: need step > 0 and HI >= LO")
    values = []
    i = 0
    while True:
        v = round(lo + i * step, 12)
        if v > hi + 1e-12:
            break
        values.append(min(v, hi))
        i += 1
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ComretError(f"sweep value {v} outside [0,1]")
    return values


def cmd_ablate(args: argparse.Namespace) -> int:
    index = store.load_index(args.index)
    queries = store.parse_query_jsonl(_read_lines(args.queries))
    if not queries:
        raise ComretError("query file contains no queries")
    qrels = metrics.read_qrels(_read_lines(args.qrels))
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in MODES:
            raise ComretError(f"unknown mode {mode!r}; expected one of {MODES}")
    betas = _parse_sweep(args.beta_sweep) if args.beta_sweep else [args.beta]
    specs = [s.strip() for s in args.metrics.split(",")]
    threads = _threads(args.threads)

    rows = []
    for mode in modes:
        for beta in betas:
            cfg = FusionConfig(mode=mode, alpha=args.alpha, beta=beta, top_k=args.k)
            results = fusion.run_queries(index, queries, cfg, threads=threads)
            run = {r.query_id: list(r.page_ids()) for r in results}
            report = metrics.evaluate_run(run, qrels, specs)
            rows.append((mode, beta, report))

    print("\t".join(["mode", "beta", *rows[0][2].specs]))
    for mode, beta, report in rows:
        print("\t".join([mode, f"{beta:g}", *(f"{report.macro[s]:.6f}" for s in report.specs)]))
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    index = store.load_index(args.index)
    queries = store.parse_query_jsonl(_read_lines(args.queries))
    if not queries:
        raise ComretError("query file contains no queries")
    report = diagnostics.modality_divergence_report(
        index, queries, num_bins=args.bins, threads=_threads(args.threads)
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "histogram.csv", "w", encoding="utf-8") as fh:
        report.write_csv(fh)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        report.write_summary(fh)
    print(f"kl_nats={report.kl_nats:.6g} samples={report.samples_per_modality} sigma_zero={len(report.sigma_zero)}")
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    cfg = training.TrainConfig(
        lam=args.lam,
        learning_rate=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        momentum=args.momentum,
        seed=args.seed,
    )
    batch = training.load_triplets(_read_lines(args.triplets))
    result = training.train_toy(batch, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "training_log.csv", "w", encoding="utf-8") as fh:
        training.write_log_csv(result.log, fh)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(result.report(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"steps={result.log[-1].step} initial_loss={result.initial_loss:.6g} "
        f"final_loss={result.final_loss:.6g} mrr@1={result.mrr_at_1:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="comret", description=__doc__)
    parser.add_argument("--version", action="version", version=f"comret (kernel backend: {_kernels.BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build and persist an index from embedding JSONL files")
    p.add_argument("--images", required=True, help="image-embedding JSONL")
    p.add_argument("--texts", required=True, help="text-embedding JSONL")
    p.add_argument("--normalize", action="store_true", help="L2-normalize rows on ingest")
    p.add_argument("--out", required=True, help="output index directory")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("retrieve", help="score queries against an index, write a run file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="query JSONL")
    p.add_argument("--mode", default="ucmr", choices=MODES)
    p.add_argument("--alpha", type=float, default=0.5, help="text weight for raw-linear")
    p.add_argument("--beta", type=float, default=0.1, help="text weight for normalized fusion")
    p.add_argument("--k", type=int, default=3, help="ranking depth")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="run TSV output path")
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metrics", default=DEFAULT_METRICS, help="comma-separated name@k specs")
    p.add_argument("--json", action="store_true", help="emit JSON instead of TSV")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="compare fusion modes (optionally sweeping beta) on one index")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--modes", required=True, help="comma-separated fusion modes")
    p.add_argument("--beta-sweep", default=None, help="LO:HI:STEP inclusive sweep of beta")
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--metrics", default="mrr@10")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("diagnose", help="pooled score-distribution report for both modalities")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--bins", type=int, default=diagnostics.DEFAULT_BINS)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("train-toy", help="train the toy alignment objective on a triplet file")
    p.add_argument("--triplets", required=True, help="triplet JSONL")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="text-loss weight")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_train_toy)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ComretError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
