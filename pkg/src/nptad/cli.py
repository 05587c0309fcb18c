"""Command line entry point: ``nptad {train,score,bench,contam,maskbank}``.

Exit codes: 0 success, 2 usage error, 3 unreadable or malformed input file,
4 invalid configuration or contract violation, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import PRESETS, VARIANTS, RunConfig, make_detector, resolve
from .data import write_csv
from .evaluation import (ExperimentError, contamination_sweep, load_dataset, run_experiment,
                         seed_data, write_curve_csv)
from .exceptions import ContractError, DataLoadError, NumericError
from .masking import bank_size, build_mask_bank
from .metrics import auroc, f1_at_count
from .model import NptModel, load_checkpoint, save_checkpoint
from .scoring import write_scores_csv

logger = logging.getLogger("nptad")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4, 5
OUT_ENV = "NPTAD_OUT"

# argparse dest -> RunConfig field
_FLAG_FIELDS = {
    "dataset": "dataset", "label_col": "label_col", "schema": "schema", "variant": "variant",
    "preset": "preset", "epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
    "pmask": "p_mask", "r": "r", "embed_dim": "embed_dim", "depth": "depth", "heads": "heads",
    "agg": "agg", "workers": "workers", "out": "out", "share": "share", "k": "knn_k",
    "knn_r": "knn_r",
}


def _seeds(text: str) -> list[int]:
    """``"5"`` means seeds 0..4; a comma list (``"3,"`` or ``"0,7,9"``) gives explicit seeds."""
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        count = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed spec {text!r}") from None
    if count < 1:
        raise argparse.ArgumentTypeError("seed count must be >= 1")
    return list(range(count))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of run settings (e.g. a config echo)")
    p.add_argument("--dataset", help="CSV file; omit for the synthetic generator")
    p.add_argument("--label-col")
    p.add_argument("--categorical", help="comma-separated categorical column names")
    p.add_argument("--schema", help="JSON sidecar listing categorical columns")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--pmask", type=float)
    p.add_argument("--r", type=int, help="largest mask size in the inference bank")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--agg", choices=("mean", "max"))
    p.add_argument("--k", type=int, help="neighbours for the KNN baselines")
    p.add_argument("--knn-r", type=int, help="largest mask size for Mask-KNN")
    p.add_argument("--share", type=float, help="synthetic contamination share")
    p.add_argument("--seeds", type=_seeds)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>-<hash>)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nptad", description="Masked-reconstruction anomaly detection on tabular data.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in [("train", "train one model and save a checkpoint"),
                           ("bench", "multi-seed benchmark report"),
                           ("contam", "contamination sweep on synthetic data")]:
        _run_flags(sub.add_parser(name, help=helptext))
    sp = sub.add_parser("score", help="score a dataset with a saved checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--label-col", default="label")
    sp.add_argument("--categorical")
    sp.add_argument("--r", type=int)
    sp.add_argument("--agg", choices=("mean", "max"))
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    mp = sub.add_parser("maskbank", help="size (and optionally contents) of the inference mask bank")
    mp.add_argument("--d", type=int, required=True)
    mp.add_argument("--r", type=int, required=True)
    mp.add_argument("--list", action="store_true", help="print every mask as a 0/1 row")
    return parser


def _config_from_args(args, default_preset: str | None = None) -> RunConfig:
    file_values = {}
    if args.config:
        try:
            file_values = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise DataLoadError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ContractError(f"config {args.config} is not valid JSON: {exc}") from exc
    cli = {field: getattr(args, dest) for dest, field in _FLAG_FIELDS.items()}
    if args.categorical:
        cli["categorical"] = [c.strip() for c in args.categorical.split(",") if c.strip()]
    cli["seeds"] = args.seeds
    if cli["preset"] is None and file_values.get("preset") is None:
        cli["preset"] = default_preset
    return resolve(file_values, cli)


def _out_dir(cfg: RunConfig, command: str) -> Path:
    out = Path(cfg.out) if cfg.out else Path(os.environ.get(OUT_ENV, "runs")) / f"{command}-{cfg.config_hash()}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(cfg: RunConfig, out: Path):
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _cmd_maskbank(args) -> int:
    m = bank_size(args.d, args.r)
    print(f"d={args.d} r={args.r} m={m}")
    if args.list:
        for row in build_mask_bank(args.d, args.r).masks:
            print("".join(str(int(v)) for v in row))
    return EXIT_OK


def _cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    out = _out_dir(cfg, "bench")
    cfg = replace(cfg, out=str(out))
    _echo(cfg, out)
    logger.info("event=bench_start variant=%s dataset=%s seeds=%s out=%s",
                cfg.variant, cfg.dataset or "synthetic", cfg.seeds, out)
    report = run_experiment(cfg)
    for run in report.runs:
        write_scores_csv(out / f"scores_seed{run.seed}.csv", run.scores, run.labels, run.sample_ids)
    report.write_csv(out / "report.csv")
    report.write_json(out / "report.json")
    logger.info("event=bench_done mean_f1=%.6f std_f1=%.6f mean_auroc=%.6f std_auroc=%.6f",
                report.mean_f1, report.std_f1, report.mean_auroc, report.std_auroc)
    return EXIT_OK


def _cmd_contam(args) -> int:
    cfg = _config_from_args(args, default_preset="contamination")
    out = _out_dir(cfg, "contam")
    cfg = replace(cfg, out=str(out))
    _echo(cfg, out)
    sweep = contamination_sweep(cfg)
    write_curve_csv(out / "curve.csv", sweep)
    with open(out / "reports.json", "w") as fh:
        json.dump([{"share": s, **rep.to_dict()} for s, rep in sweep], fh, indent=2)
    logger.info("event=contam_done shares=%d out=%s", len(sweep), out)
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if cfg.variant not in ("npt", "transformer"):
        raise ContractError(f"train supports the npt and transformer variants, not {cfg.variant!r}")
    out = _out_dir(cfg, "train")
    cfg = replace(cfg, out=str(out))
    _echo(cfg, out)
    dataset = load_dataset(cfg)
    seed = cfg.seeds[0]
    train, val, _ = seed_data(cfg, dataset, seed)
    det = make_detector(cfg, seed, train.categorical_features or None, train.categories)
    det.fit(train.X)
    with open(out / "train_loss.log", "w") as fh:
        for step, loss in enumerate(det.loss_history_):
            fh.write(f"step={step} loss={loss!r}\n")
    save_checkpoint(out / "model.npz", det.model_.config, det.schema_, det.model_.params,
                    context=train.X, extra={"r": cfg.r, "agg": cfg.agg, "seed": seed,
                                            "columns": train.columns, "label_col": cfg.label_col})
    write_csv(out / "train.csv", train, cfg.label_col)
    write_csv(out / "val.csv", val, cfg.label_col)
    logger.info("event=train_done steps=%d final_loss=%r out=%s",
                len(det.loss_history_), det.loss_history_[-1], out)
    return EXIT_OK


def _cmd_score(args) -> int:
    from .data import load_csv
    from .estimators import NPTAD

    try:
        config, schema, params, context, extra = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise DataLoadError(f"cannot read checkpoint {args.checkpoint}: {exc}") from exc
    if context is None:
        raise ContractError("checkpoint holds no training context; re-run train")
    categorical = ([c.strip() for c in args.categorical.split(",") if c.strip()] if args.categorical
                   else [extra["columns"][j] for j in schema.cat_idx] if "columns" in extra else [])
    ds = load_csv(args.dataset, label_col=args.label_col, categorical=categorical)
    if "columns" in extra and ds.columns != extra["columns"]:
        raise ContractError(f"dataset columns {ds.columns} differ from the checkpoint's {extra['columns']}")
    r = args.r or extra.get("r", 1)
    agg = args.agg or extra.get("agg", "mean")
    det = NPTAD.from_model(NptModel(config, schema, params), context, max_masked=r,
                           aggregation=agg, n_jobs=args.workers)
    scores = det.anomaly_score(ds.X)
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / "score"
    out.mkdir(parents=True, exist_ok=True)
    write_scores_csv(out / "scores.csv", scores, ds.labels)
    metrics = {"n": int(ds.n), "r": r, "agg": agg, "checkpoint": str(args.checkpoint), "dataset": str(args.dataset)}
    if 0 < ds.labels.sum() < ds.n:
        metrics.update(f1=f1_at_count(scores, ds.labels), auroc=auroc(scores, ds.labels))
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    logger.info("event=score_done n=%d f1=%s auroc=%s out=%s", ds.n,
                metrics.get("f1"), metrics.get("auroc"), out)
    return EXIT_OK


_COMMANDS = {"train": _cmd_train, "score": _cmd_score, "bench": _cmd_bench,
             "contam": _cmd_contam, "maskbank": _cmd_maskbank}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ExperimentError) and exc.__cause__ is not None:
        return _exit_code(exc.__cause__)
    if isinstance(exc, (DataLoadError, OSError)):
        return EXIT_IO
    if isinstance(exc, NumericError) or isinstance(exc, FloatingPointError):
        return EXIT_NUMERIC
    if isinstance(exc, ContractError):
        return EXIT_CONFIG
    return 1


def run_cli(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="level=%(levelname)s logger=%(name)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ContractError, NumericError, ExperimentError, OSError, FloatingPointError) as exc:
        print(f"nptad: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
