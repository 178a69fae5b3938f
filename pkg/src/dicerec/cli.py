"""Command-line experiment driver.

    dicerec prepare  --config run.ini
    dicerec train    --config run.ini --model dice [--strategy random] [--curriculum off]
    dicerec evaluate --checkpoint runs/models/dice/checkpoint.bin --variants full,int,con
    dicerec compare  runs/reports/dice_full.json runs/reports/mf_full.json --reference mf
    dicerec export-embeddings --checkpoint runs/models/dice/checkpoint.bin

Outputs go under $DICEREC_OUTPUT (default ./runs) unless --out is given.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import MODEL_NAMES, train_baseline
from .checkpoint import load_checkpoint, model_shape, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .dataset import RatingFormat, binarize, build_table, load_ratings_file, save_table
from .evaluator import (MetricsReport, PopularityScorer, evaluate, export_embeddings, write_iou_csv,
                        write_reports_csv)
from .experiments import PLANTED
from .model import CausalEmbeddings, Variant
from .splitter import PARTITIONS, draw_split, load_split, save_split
from .synthetic import zipf_table
from .trainer import TrainConfig, TrainingDiverged, fit

log = logging.getLogger("dicerec")

OUTPUT_ENV = "DICEREC_OUTPUT"


class UsageError(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory: Path, command: str, cfg: RunConfig | None, extra: dict, started: str) -> Path:
    manifest = {
        "command": command,
        "code_version": __version__,
        "config": cfg.to_dict() if cfg is not None else None,
        "seed": cfg.split.seed if cfg is not None else None,
        "started": started,
        "finished": _now(),
        "conventions": {"batch_reduction": "sum", "entropy": "nats", "margins": "absolute popularity counts"},
        **extra,
    }
    path = directory / f"manifest_{command.replace('-', '_')}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --- prepare ----------------------------------------------------------------

def load_interactions(cfg: RunConfig):
    d = cfg.data
    if d.source == "synthetic-planted":
        # generator knobs other than the catalogue size follow the desk-scale preset
        table = replace(PLANTED, n_users=d.n_users, n_items=d.n_items).factors(d.synthetic_seed).table
        digest = hashlib.sha256(json.dumps(cfg.to_dict()["data"], sort_keys=True).encode()).hexdigest()
    elif d.source == "synthetic-zipf":
        table = zipf_table(d.n_users, d.n_items, d.n_interactions, seed=d.synthetic_seed)
        digest = hashlib.sha256(json.dumps(cfg.to_dict()["data"], sort_keys=True).encode()).hexdigest()
    elif d.source == "ratings":
        if not d.ratings:
            raise ConfigError("data.ratings is not set")
        path = Path(d.ratings)
        if not path.is_file():
            raise FileNotFoundError(f"ratings file not found: {path}")
        fmt = RatingFormat(delimiter=d.delimiter) if d.delimiter else None
        table = build_table(binarize(load_ratings_file(path, fmt), d.threshold))
        digest = _sha256_file(path)
    else:
        raise ConfigError(f"unknown data.source {d.source!r}")
    return table, digest


def cmd_prepare(args) -> int:
    started = _now()
    cfg = load_config(args.config, args.set)
    out = Path(args.out) if args.out else output_root() / "bundle"
    table, digest = load_interactions(cfg)
    if len(table) == 0:
        raise ValueError("no interactions left after binarization")
    split = draw_split(table, cfg.split)
    out.mkdir(parents=True, exist_ok=True)
    save_table(table, out / "table.bin")
    summary = save_split(split, out)
    write_manifest(out, "prepare", cfg, {"input_digest": digest, "outputs": {
        "table": str(out / "table.bin"), "bundle": str(out)}, "split": summary}, started)
    ent = summary["entropy"]
    print(f"prepared {len(table)} interactions ({table.n_users} users, {table.n_items} items) -> {out}")
    for name in PARTITIONS:
        e = ent[name]
        print(f"  {name:<17} {summary['counts'][name]:>9}  entropy {'n/a' if e is None else f'{e:.4f}'}")
    return 0


# --- train ------------------------------------------------------------------

def _train_config(cfg: RunConfig, args):
    tc = cfg.train
    if args.strategy:
        tc.strategy = args.strategy
    if args.curriculum:
        tc.curriculum = args.curriculum == "on"
    if args.no_conformity_task:
        tc.conformity_task = False
    if args.discrepancy:
        tc.discrepancy = args.discrepancy
    tc.__post_init__()
    return tc


def cmd_train(args) -> int:
    started = _now()
    name = args.model.lower()
    if name not in MODEL_NAMES:
        raise UsageError(f"unknown model {args.model!r}; choose from {', '.join(MODEL_NAMES)}")
    cfg = load_config(args.config, args.set)
    tc = _train_config(cfg, args)
    bundle = Path(args.bundle) if args.bundle else output_root() / "bundle"
    if not (bundle / "manifest.json").is_file():
        raise FileNotFoundError(f"no prepared bundle at {bundle} (run `prepare` first)")
    split = load_split(bundle)
    out = Path(args.out) if args.out else output_root() / "models" / name
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    log_fh = open(log_path, "w")

    def on_epoch(rec):
        log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
        log_fh.flush()

    status = 0
    try:
        if name == "dice":
            base = {f: getattr(tc, f) for f in TrainConfig.__dataclass_fields__}
            result = fit(split, TrainConfig(**base), on_epoch)
            extra = {"initial_margins": list(result.margins0)}
        else:
            result = train_baseline(name, split, tc, on_epoch)
            extra = {}
        model = result.model
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}; keeping last good snapshot", file=sys.stderr)
        model, extra, status = exc.snapshot, {"diverged": str(exc)}, 1
    finally:
        log_fh.close()
    ckpt = out / "checkpoint.bin"
    save_checkpoint(model, ckpt, {"model": name, "bundle": str(bundle)})
    write_manifest(out, "train", cfg, {"model": name, "bundle": str(bundle),
                                       "bundle_digest": _sha256_file(bundle / "manifest.json"),
                                       "outputs": {"checkpoint": str(ckpt), "log": str(log_path)}, **extra},
                   started)
    print(f"trained {name} -> {ckpt}")
    return status


# --- evaluate ---------------------------------------------------------------

def _parse_list(s, cast=str):
    return tuple(cast(x.strip()) for x in s.split(",") if x.strip())


def cmd_evaluate(args) -> int:
    started = _now()
    cfg = load_config(args.config, args.set)
    bundle = Path(args.bundle) if args.bundle else output_root() / "bundle"
    split = load_split(bundle)
    if args.checkpoint:
        model, header = load_checkpoint(args.checkpoint)
        name = args.name or header.get("meta", {}).get("model", model.kind)
    elif (args.model or "").lower() == "itempop":
        model, name = PopularityScorer(split.train_popularity()), "itempop"
    else:
        raise UsageError("evaluate needs --checkpoint (or --model itempop)")
    n_users, n_items = model_shape(model)
    if n_items != split.n_items or (n_users is not None and n_users != split.n_users):
        raise ValueError(f"checkpoint shape (users={n_users}, items={n_items}) does not match bundle "
                         f"(users={split.n_users}, items={split.n_items})")
    ks = _parse_list(args.ks, int) if args.ks else cfg.evaluate.ks
    variants = _parse_list(args.variants) if args.variants else cfg.evaluate.variants
    variants = tuple(Variant.parse(v) for v in variants)
    if not isinstance(model, CausalEmbeddings) and any(v is not Variant.FULL for v in variants):
        raise UsageError(f"variants other than 'full' need a DICE checkpoint, got {model.kind}")
    out = Path(args.out) if args.out else output_root() / "reports"
    out.mkdir(parents=True, exist_ok=True)
    reports, curves = [], {}
    for v in variants:
        rep = evaluate(model, split, v, ks, exclude_validation=cfg.evaluate.exclude_validation, name=name,
                       keep_per_user=cfg.evaluate.per_user, iou_ks=cfg.evaluate.iou_ks,
                       iou_reference=cfg.evaluate.iou_reference)
        reports.append(rep)
        curves[f"{name}/{v.value}"] = rep.diagnostics["iou_itempop"]
        (out / f"{name}_{v.value}.json").write_text(rep.to_json())
    write_reports_csv(reports, out / f"{name}_metrics.csv")
    write_iou_csv(curves, out / f"{name}_iou.csv")
    write_manifest(out, f"evaluate_{name}", cfg, {"checkpoint": args.checkpoint, "bundle": str(bundle)}, started)
    for rep in reports:
        cells = "  ".join(f"{m}@{k}={rep.metrics[str(k)][m]:.4f}" for k in rep.ks
                          for m in ("recall", "hit_ratio", "ndcg"))
        print(f"{rep.model}/{rep.variant}: {cells}  (users={rep.n_users})")
    return 0


# --- compare ----------------------------------------------------------------

def compare_reports(reports: list[MetricsReport], reference: str | None = None):
    """Rows (label, metric cells...) plus relative deltas against the reference model."""
    if len(reports) < 2:
        raise ValueError("compare needs at least two reports")
    ks = reports[0].ks
    for r in reports[1:]:
        if tuple(r.ks) != tuple(ks):
            raise ValueError(f"reports disagree on K: {list(ks)} vs {list(r.ks)} ({r.model}/{r.variant})")
    cols = [(k, m) for k in ks for m in ("recall", "hit_ratio", "ndcg")]
    labels = [r.model if r.variant == "full" else f"{r.model}-{r.variant}" for r in reports]
    values = np.array([[r.metrics[str(k)][m] for k, m in cols] for r in reports])
    ref_row = None
    if reference is not None:
        if reference not in labels:
            raise ValueError(f"reference {reference!r} not among reports: {labels}")
        ref_row = values[labels.index(reference)]
    best = values.max(axis=0)
    header = ["model"] + [f"{m}@{k}" for k, m in cols]
    if ref_row is not None:
        header += [f"rel_{m}@{k}" for k, m in cols]
    rows = []
    for label, vals in zip(labels, values):
        row = [label] + [float(v) for v in vals]
        if ref_row is not None:
            row += [float(v / r - 1.0) if r > 0 else float("nan") for v, r in zip(vals, ref_row)]
        rows.append(row)
    return header, rows, best, len(cols)


def _markdown(header, rows, best, ncols) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in rows:
        cells = [row[0]]
        for j, v in enumerate(row[1:]):
            if j < ncols:
                s = f"{v:.4f}"
                cells.append(f"**{s}**" if v == best[j] else s)
            else:
                cells.append(f"{100 * v:+.2f}%")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    reports = []
    for p in args.reports:
        path = Path(p)
        if not path.is_file():
            raise FileNotFoundError(f"report not found: {path}")
        reports.append(MetricsReport.from_dict(json.loads(path.read_text())))
    header, rows, best, ncols = compare_reports(reports, args.reference)
    out = Path(args.out) if args.out else output_root() / "reports"
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header + ["best"])
    for row in rows:
        flags = ";".join(h for h, v, b in zip(header[1:ncols + 1], row[1:ncols + 1], best) if v == b)
        w.writerow([row[0]] + [repr(v) for v in row[1:]] + [flags])
    (out / "comparison.csv").write_text(buf.getvalue())
    md = _markdown(header, rows, best, ncols)
    (out / "comparison.md").write_text(md)
    print(md, end="")
    return 0


# --- export ------------------------------------------------------------------

def cmd_export(args) -> int:
    bundle = Path(args.bundle) if args.bundle else output_root() / "bundle"
    split = load_split(bundle)
    model, _ = load_checkpoint(args.checkpoint)
    if not isinstance(model, CausalEmbeddings):
        raise UsageError(f"export-embeddings needs a DICE checkpoint, got {model.kind}")
    out = Path(args.out) if args.out else output_root() / "embeddings"
    paths = export_embeddings(model, split.train_popularity(), out, include_users=args.include_users)
    print(f"wrote {paths['embeddings']} and {paths['items']}")
    return 0


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dicerec", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bundle=True):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--out", help="output directory")
        if bundle:
            sp.add_argument("--bundle", help="prepared split directory")

    sp = sub.add_parser("prepare", help="binarize ratings and draw the intervened split")
    common(sp, bundle=False)
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train DICE or a baseline")
    common(sp)
    sp.add_argument("--model", required=True, help="one of: " + ", ".join(MODEL_NAMES))
    sp.add_argument("--strategy", choices=["pnsm", "random"])
    sp.add_argument("--curriculum", choices=["on", "off"])
    sp.add_argument("--no-conformity-task", action="store_true")
    sp.add_argument("--discrepancy", choices=["l1inv", "l2inv", "dcor"])
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="top-K metrics on the test partition")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--model", help="itempop (no checkpoint needed)")
    sp.add_argument("--name", help="label used in reports")
    sp.add_argument("--ks", help="comma-separated cutoffs, default 20,50")
    sp.add_argument("--variants", help="comma-separated: full,int,con")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="tabulate reports with relative improvements")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--reference", help="model label used for relative deltas")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("export-embeddings", help="embedding CSV + item popularity groups")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--bundle")
    sp.add_argument("--out")
    sp.add_argument("--include-users", action="store_true")
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
