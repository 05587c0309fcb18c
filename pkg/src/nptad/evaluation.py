"""Multi-seed experiment runner, report aggregation and the contamination sweep."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, make_detector
from .data import CONTAMINATION_SHARES, SplitSpec, TabularDataset, gen_synthetic, load_csv, read_schema_sidecar, split
from .exceptions import ContractError
from .metrics import auroc, f1_at_count

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


class ExperimentError(RuntimeError):
    """A seed run failed; ``seed`` names it and ``__cause__`` holds the original error."""

    def __init__(self, seed: int, cause: BaseException):
        super().__init__(f"seed {seed} failed: {type(cause).__name__}: {cause}")
        self.seed = seed


@dataclass
class SeedResult:
    seed: int
    f1: float
    auroc: float
    scores: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray
    fit_seconds: float = 0.0
    score_seconds: float = 0.0


@dataclass
class ScoreReport:
    dataset: str
    variant: str
    config_hash: str
    seeds: list
    f1: list
    auroc: list
    runs: list = field(default_factory=list, repr=False)   # SeedResult per seed, same order

    def __post_init__(self):
        if not (len(self.seeds) == len(self.f1) == len(self.auroc)) or not self.seeds:
            raise ContractError("report needs one F1 and one AUROC per seed")
        for v in (*self.f1, *self.auroc):
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"metric {v} outside [0, 1]")

    # population statistics throughout
    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def std_f1(self) -> float:
        return float(np.std(self.f1))

    @property
    def mean_auroc(self) -> float:
        return float(np.mean(self.auroc))

    @property
    def std_auroc(self) -> float:
        return float(np.std(self.auroc))

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "dataset": self.dataset,
            "variant": self.variant,
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "per_seed": [{"seed": s, "f1": f, "auroc": a}
                         for s, f, a in zip(self.seeds, self.f1, self.auroc)],
            "mean_f1": self.mean_f1,
            "std_f1": self.std_f1,
            "mean_auroc": self.mean_auroc,
            "std_auroc": self.std_auroc,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreReport":
        if data.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ContractError(f"unsupported report schema version {data.get('schema_version')}")
        rows = data["per_seed"]
        return cls(data["dataset"], data["variant"], data["config_hash"], list(data["seeds"]),
                   [r["f1"] for r in rows], [r["auroc"] for r in rows])

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "variant", "seed", "f1", "auroc", "std_f1", "std_auroc"])
            for s, f, a in zip(self.seeds, self.f1, self.auroc):
                w.writerow([self.dataset, self.variant, s, repr(f), repr(a), "", ""])
            w.writerow([self.dataset, self.variant, "mean", repr(self.mean_f1), repr(self.mean_auroc),
                        repr(self.std_f1), repr(self.std_auroc)])


def load_dataset(cfg: RunConfig) -> TabularDataset | None:
    """Read the configured CSV (None for the synthetic generator)."""
    if cfg.dataset is None:
        return None
    categorical = list(cfg.categorical)
    label_col = cfg.label_col
    if cfg.schema:
        side = read_schema_sidecar(cfg.schema)
        categorical = categorical or list(side.get("categorical", []))
        label_col = side.get("label_col", label_col)
    return load_csv(cfg.dataset, label_col=label_col, categorical=categorical)


def seed_data(cfg: RunConfig, dataset: TabularDataset | None, seed: int):
    """Train and validation sets for one seed, plus validation sample ids."""
    if dataset is None:
        train, val = gen_synthetic(cfg.share, seed)
        return train, val, np.arange(val.n)
    train, val, _, val_idx = split(dataset, SplitSpec(seed=seed))
    return train, val, val_idx


def run_seed(cfg: RunConfig, dataset: TabularDataset | None, seed: int, detector_factory=None) -> SeedResult:
    train, val, ids = seed_data(cfg, dataset, seed)
    if detector_factory is None:
        det = make_detector(cfg, seed, train.categorical_features or None, train.categories)
    else:
        det = detector_factory(cfg, seed, train)
    t0 = time.perf_counter()
    det.fit(train.X)
    t1 = time.perf_counter()
    scores = np.asarray(det.anomaly_score(val.X), dtype=np.float64)
    t2 = time.perf_counter()
    res = SeedResult(seed, f1_at_count(scores, val.labels), auroc(scores, val.labels),
                     scores, val.labels, ids, t1 - t0, t2 - t1)
    logger.info("event=seed_done seed=%d f1=%.6f auroc=%.6f fit_s=%.2f score_s=%.2f",
                seed, res.f1, res.auroc, res.fit_seconds, res.score_seconds)
    return res


def _run_seed_task(cfg_dict: dict, dataset, seed: int) -> SeedResult:
    return run_seed(RunConfig.from_dict(cfg_dict), dataset, seed)


def run_experiment(cfg: RunConfig, seeds=None, dataset: TabularDataset | None = None,
                   detector_factory=None) -> ScoreReport:
    """Train and score once per seed, then aggregate F1 and AUROC.

    Seeds run in parallel processes when ``cfg.workers > 1`` (not available with a
    custom ``detector_factory``). Results are assembled in seed-list order, so
    the report does not depend on scheduling.
    """
    seeds = list(cfg.seeds if seeds is None else seeds)
    if not seeds:
        raise ContractError("seeds must be non-empty")
    cfg.validate()
    if dataset is None and cfg.dataset is not None:
        dataset = load_dataset(cfg)
    runs: list = []
    if cfg.workers > 1 and detector_factory is None and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(seeds))) as pool:
            futures = [pool.submit(_run_seed_task, cfg.to_dict(), dataset, s) for s in seeds]
            for s, fut in zip(seeds, futures):
                try:
                    runs.append(fut.result())
                except Exception as exc:
                    raise ExperimentError(s, exc) from exc
    else:
        for s in seeds:
            try:
                runs.append(run_seed(cfg, dataset, s, detector_factory))
            except Exception as exc:
                raise ExperimentError(s, exc) from exc
    name = dataset.name if dataset is not None else f"synthetic-{cfg.share:.2f}"
    return ScoreReport(name, cfg.variant, cfg.config_hash(), seeds,
                       [r.f1 for r in runs], [r.auroc for r in runs], runs)


CURVE_HEADER = ["share", "mean_F1", "std_F1", "mean_AUROC", "std_AUROC"]


def contamination_sweep(cfg: RunConfig, seeds=None, shares=CONTAMINATION_SHARES,
                        detector_factory=None) -> list[tuple[float, ScoreReport]]:
    """One synthetic experiment per contamination share."""
    out = []
    for share in shares:
        rep = run_experiment(replace(cfg, dataset=None, share=float(share)), seeds,
                             detector_factory=detector_factory)
        logger.info("event=share_done share=%.2f mean_f1=%.6f mean_auroc=%.6f",
                    share, rep.mean_f1, rep.mean_auroc)
        out.append((float(share), rep))
    return out


def write_curve_csv(path, sweep) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for share, rep in sweep:
            w.writerow([f"{share:.2f}", repr(rep.mean_f1), repr(rep.std_f1),
                        repr(rep.mean_auroc), repr(rep.std_auroc)])
