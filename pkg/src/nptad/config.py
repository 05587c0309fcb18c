"""Run configuration, per-dataset presets, and detector construction."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .exceptions import ContractError

VARIANTS = ("npt", "transformer", "mask-knn", "knn")

# epochs, batch size, lr, training mask probability, r, per-feature embedding size
PRESETS = {
    "wine": dict(epochs=1000, batch_size=-1, lr=0.001, p_mask=0.15, r=1, embed_dim=8),
    "lympho": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=4, embed_dim=16),
    "glass": dict(epochs=1000, batch_size=-1, lr=0.01, p_mask=0.15, r=4, embed_dim=16),
    "vertebral": dict(epochs=2000, batch_size=-1, lr=0.001, p_mask=0.15, r=1, embed_dim=8),
    "wbc": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=3, embed_dim=16),
    "ecoli": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=3, embed_dim=16),
    "ionosphere": dict(epochs=100, batch_size=-1, lr=0.001, p_mask=0.15, r=2, embed_dim=16),
    "arrhythmia": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=1, embed_dim=16),
    "breastw": dict(epochs=500, batch_size=-1, lr=0.01, p_mask=0.15, r=3, embed_dim=16),
    "pima": dict(epochs=500, batch_size=-1, lr=0.01, p_mask=0.15, r=4, embed_dim=16),
    "vowels": dict(epochs=1000, batch_size=-1, lr=0.01, p_mask=0.15, r=2, embed_dim=16),
    "letter": dict(epochs=1000, batch_size=-1, lr=0.01, p_mask=0.15, r=1, embed_dim=16),
    "cardio": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=2, embed_dim=16),
    "seismic": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=2, embed_dim=16),
    "musk": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=2, embed_dim=16),
    "speech": dict(epochs=1000, batch_size=512, lr=0.001, p_mask=0.15, r=1, embed_dim=8),
    "thyroid": dict(epochs=5000, batch_size=-1, lr=0.01, p_mask=0.1, r=2, embed_dim=16),
    "abalone": dict(epochs=1000, batch_size=-1, lr=0.0001, p_mask=0.15, r=4, embed_dim=16),
    "optdigits": dict(epochs=500, batch_size=-1, lr=0.01, p_mask=0.2, r=1, embed_dim=16),
    "satimage-2": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.2, r=1, embed_dim=16),
    "satellite": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.2, r=1, embed_dim=16),
    "pendigits": dict(epochs=1000, batch_size=-1, lr=0.01, p_mask=0.25, r=2, embed_dim=16),
    "annthyroid": dict(epochs=400, batch_size=-1, lr=0.01, p_mask=0.15, r=1, embed_dim=16),
    "mnist": dict(epochs=1000, batch_size=-1, lr=0.001, p_mask=0.15, r=1, embed_dim=32),
    "mammography": dict(epochs=200, batch_size=-1, lr=0.01, p_mask=0.25, r=4, embed_dim=16),
    "shuttle": dict(epochs=100, batch_size=4096, lr=0.01, p_mask=0.25, r=3, embed_dim=64),
    "mulcross": dict(epochs=100, batch_size=4096, lr=0.001, p_mask=0.15, r=2, embed_dim=16),
    "forestcover": dict(epochs=100, batch_size=4096, lr=0.01, p_mask=0.15, r=2, embed_dim=16),
    "campaign": dict(epochs=100, batch_size=4096, lr=0.001, p_mask=0.15, r=1, embed_dim=16),
    "fraud": dict(epochs=100, batch_size=4096, lr=0.001, p_mask=0.2, r=1, embed_dim=32),
    "backdoor": dict(epochs=1000, batch_size=256, lr=0.001, p_mask=0.2, r=1, embed_dim=32),
    # synthetic contamination study
    "contamination": dict(epochs=100, batch_size=-1, lr=0.01, p_mask=0.15, r=1, embed_dim=16),
}


@dataclass
class RunConfig:
    dataset: str | None = None        # CSV path; None means the synthetic generator
    share: float = 0.0                # synthetic contamination share
    label_col: str = "label"
    categorical: list = field(default_factory=list)
    schema: str | None = None
    variant: str = "npt"
    preset: str | None = None
    depth: int = 4
    heads: int = 4
    embed_dim: int = 16
    dropout: float = 0.1
    epochs: int = 100
    batch_size: int = -1
    lr: float = 0.01
    p_mask: float = 0.15
    r: int = 1
    agg: str = "mean"
    clip_norm: float = 1.0
    weight_decay: float = 0.0
    max_context_rows: int = 10_000
    per_sample: bool = False
    knn_k: int = 5
    knn_r: int = 2
    knn_bank_size: int | None = None
    seeds: list = field(default_factory=lambda: [0])
    workers: int = 1
    out: str | None = None

    def validate(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.preset is not None and self.preset not in PRESETS:
            raise ContractError(f"unknown preset {self.preset!r}")
        if self.batch_size == 0 or self.batch_size < -1:
            raise ContractError("batch size must be positive or -1 (full batch)")
        if self.r < 1:
            raise ContractError("r must be >= 1")
        if not self.seeds:
            raise ContractError("at least one seed is required")
        if self.agg not in ("mean", "max"):
            raise ContractError(f"agg must be 'mean' or 'max', got {self.agg!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown config key(s): {sorted(unknown)}")
        return cls(**data)

    def config_hash(self) -> str:
        """Digest of everything that influences results (not output paths or worker count)."""
        data = {k: v for k, v in asdict(self).items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def resolve(file_values: dict | None = None, cli_values: dict | None = None) -> RunConfig:
    """Built-in defaults < preset < config file < explicit CLI flags."""
    merged: dict = {}
    file_values = dict(file_values or {})
    cli_values = {k: v for k, v in (cli_values or {}).items() if v is not None}
    preset = cli_values.get("preset", file_values.get("preset"))
    if preset is not None:
        if preset not in PRESETS:
            raise ContractError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(file_values)
    merged.update(cli_values)
    cfg = RunConfig.from_dict(merged)
    cfg.validate()
    return cfg


def make_detector(cfg: RunConfig, seed: int, categorical_features=None, categories=None):
    from .estimators import KNNDetector, MaskKNNDetector, NPTAD

    if cfg.variant in ("npt", "transformer"):
        return NPTAD(depth=cfg.depth, heads=cfg.heads, embed_dim=cfg.embed_dim, dropout=cfg.dropout,
                     variant="npt" if cfg.variant == "npt" else "aba_only", epochs=cfg.epochs,
                     batch_size=cfg.batch_size, lr=cfg.lr, p_mask=cfg.p_mask, clip_norm=cfg.clip_norm,
                     weight_decay=cfg.weight_decay, max_masked=cfg.r, aggregation=cfg.agg,
                     max_context_rows=cfg.max_context_rows, per_sample=cfg.per_sample,
                     categorical_features=categorical_features, categories=categories,
                     random_state=seed)
    if cfg.variant == "mask-knn":
        return MaskKNNDetector(n_neighbors=cfg.knn_k, max_masked=cfg.knn_r, bank_size=cfg.knn_bank_size,
                               categorical_features=categorical_features, categories=categories,
                               random_state=seed)
    return KNNDetector(n_neighbors=cfg.knn_k, categorical_features=categorical_features,
                       categories=categories)
