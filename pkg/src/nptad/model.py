"""Non-Parametric Transformer for masked feature reconstruction.

Layout of the hidden state is ``(n, d, e)``: n datapoints, d features, e
embedding units per feature. Attention between datapoints flattens every row
to a ``d*e`` vector and attends across rows; attention between attributes
attends across the d feature embeddings of each row independently.

Internally features are ordered numerical-first, then categorical; masks and
raw data are always given in the original column order.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ContractError, SchemaError
from .masking import apply_mask
from .numerics import (
    Tensor,
    concat,
    cross_entropy,
    dropout,
    gelu,
    layer_norm,
    softmax,
    stack,
    swap_last,
    transpose,
)

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
VARIANTS = ("npt", "aba_only")


@dataclass
class NptConfig:
    depth: int = 4
    heads: int = 4
    embed_dim: int = 16
    rff_expansion: int = 4
    dropout_p: float = 0.1
    variant: str = "npt"
    first_layer: str = "abd"

    def layer_kinds(self) -> list[str]:
        if self.variant == "aba_only":
            return ["aba"] * self.depth
        other = "aba" if self.first_layer == "abd" else "abd"
        return [self.first_layer if i % 2 == 0 else other for i in range(self.depth)]

    def validate(self, d: int):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.first_layer not in ("abd", "aba"):
            raise ContractError(f"first_layer must be 'abd' or 'aba', got {self.first_layer!r}")
        if self.depth < 0 or self.heads < 1 or self.embed_dim < 1:
            raise ContractError("depth must be >= 0, heads and embed_dim >= 1")
        if self.embed_dim % self.heads:
            raise ContractError(f"embed_dim={self.embed_dim} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ContractError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")


@dataclass
class FeatureSchema:
    """Per-column kind, normalization statistics and category levels."""

    kinds: list[str]
    means: np.ndarray
    stds: np.ndarray
    categories: list = field(default_factory=list)

    @classmethod
    def fit(cls, X, categorical_features=(), categories=None) -> "FeatureSchema":
        """Learn statistics from (normal) training rows.

        Categorical columns take their levels from ``categories[j]`` when given,
        else from the sorted distinct values seen in ``X``. Constant numerical
        columns get std 1.
        """
        X = np.asarray(X)
        if X.ndim != 2:
            raise ContractError(f"expected a 2-D array, got shape {X.shape}")
        d = X.shape[1]
        cat = set(int(j) for j in categorical_features)
        if any(j < 0 or j >= d for j in cat):
            raise SchemaError(f"categorical feature index out of range for {d} columns")
        kinds, means, stds, levels = [], np.zeros(d), np.ones(d), []
        for j in range(d):
            if j in cat:
                kinds.append(CATEGORICAL)
                given = None if categories is None else categories[j]
                lv = np.unique(X[:, j]) if given is None else np.asarray(given)
                levels.append(lv.tolist())
            else:
                kinds.append(NUMERICAL)
                col = X[:, j].astype(np.float64)
                means[j] = col.mean()
                sd = col.std()
                stds[j] = sd if sd > 0 else 1.0
                levels.append(None)
        return cls(kinds, means, stds, levels)

    @property
    def d(self) -> int:
        return len(self.kinds)

    @property
    def num_idx(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k == NUMERICAL]

    @property
    def cat_idx(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k == CATEGORICAL]

    @property
    def order(self) -> np.ndarray:
        """Column indices in the model's internal feature order."""
        return np.array(self.num_idx + self.cat_idx, dtype=int)

    def cardinality(self, j: int) -> int:
        return 1 if self.kinds[j] == NUMERICAL else len(self.categories[j])

    def category_codes(self, X, j: int) -> np.ndarray:
        """Level index of each value in column j; -1 for unseen levels."""
        levels = self.categories[j]
        lookup = {v: i for i, v in enumerate(levels)}
        col = np.asarray(X)[:, j]
        codes = np.array([lookup.get(_py(v), -1) for v in col], dtype=int)
        if (codes < 0).any():
            warnings.warn(f"column {j}: {(codes < 0).sum()} value(s) with unseen category, "
                          "encoded as all-zero one-hot", stacklevel=3)
        return codes

    def encode_features(self, X) -> list[np.ndarray]:
        """Unmasked per-feature encodings in column order, each ``(n, e_j)``."""
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ContractError(f"expected {self.d} columns, got shape {X.shape}")
        out = []
        for j, kind in enumerate(self.kinds):
            if kind == NUMERICAL:
                col = X[:, j].astype(np.float64)
                out.append(((col - self.means[j]) / self.stds[j])[:, None])
            else:
                codes = self.category_codes(X, j)
                onehot = np.zeros((X.shape[0], self.cardinality(j)))
                ok = codes >= 0
                onehot[np.flatnonzero(ok), codes[ok]] = 1.0
                out.append(onehot)
        return out

    def targets(self, X) -> "Targets":
        X = np.asarray(X)
        num = np.column_stack([(X[:, j].astype(np.float64) - self.means[j]) / self.stds[j]
                               for j in self.num_idx]) if self.num_idx else np.zeros((len(X), 0))
        cat = [self.category_codes(X, j) for j in self.cat_idx]
        return Targets(num, cat)

    def to_dict(self) -> dict:
        return {"kinds": self.kinds, "means": self.means.tolist(), "stds": self.stds.tolist(),
                "categories": self.categories}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        return cls(list(data["kinds"]), np.asarray(data["means"], dtype=np.float64),
                   np.asarray(data["stds"], dtype=np.float64), list(data["categories"]))


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


@dataclass
class Targets:
    numerical: np.ndarray      # (n, d_num), normalized
    categorical: list          # per categorical feature, (n,) level indices


@dataclass
class Reconstruction:
    numerical: Tensor          # (n, d_num), normalized space
    categorical: list          # per categorical feature, (n, c_j) logits


def encode(X, schema: FeatureSchema, M) -> list[np.ndarray]:
    """Normalize / one-hot each feature, zero masked payloads, append mask bits."""
    return apply_mask(schema.encode_features(X), M)


# ------------------------------------------------------------------ parameters
def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _layer_params(rng, h: int, expansion: int) -> dict[str, Tensor]:
    p = {"ln1_g": Tensor(np.ones(h), True), "ln1_b": Tensor(np.zeros(h), True)}
    for name in ("q", "k", "v", "o"):
        p[f"w{name}"] = _uniform(rng, h, (h, h))
        p[f"b{name}"] = _uniform(rng, h, (h,))
    p["wres"] = _uniform(rng, h, (h, h))
    p["ln2_g"] = Tensor(np.ones(h), True)
    p["ln2_b"] = Tensor(np.zeros(h), True)
    p["w1"] = _uniform(rng, h, (h, expansion * h))
    p["b1"] = _uniform(rng, h, (expansion * h,))
    p["w2"] = _uniform(rng, expansion * h, (expansion * h, h))
    p["b2"] = _uniform(rng, expansion * h, (h,))
    return p


def init_params(config: NptConfig, schema: FeatureSchema, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fresh parameters: uniform fan-in scaling, LN gains 1 and biases 0."""
    config.validate(schema.d)
    d, e = schema.d, config.embed_dim
    if config.variant == "npt" and (d * e) % config.heads:
        raise ContractError(f"d*e={d * e} not divisible by heads={config.heads}")
    d_num = len(schema.num_idx)
    params: dict[str, Tensor] = {
        "in_num_w": _uniform(rng, 2, (d_num, 2, e)),
        "in_num_b": _uniform(rng, 2, (d_num, 1, e)),
    }
    for j in schema.cat_idx:
        c = schema.cardinality(j)
        params[f"in_cat{j}_w"] = _uniform(rng, c + 1, (c + 1, e))
        params[f"in_cat{j}_b"] = _uniform(rng, c + 1, (e,))
    params["index_embed"] = _uniform(rng, e, (d, e))
    params["type_embed"] = _uniform(rng, e, (2, e))
    for layer, kind in enumerate(config.layer_kinds()):
        h = d * e if kind == "abd" else e
        for name, t in _layer_params(rng, h, config.rff_expansion).items():
            params[f"layer{layer}_{name}"] = t
    params["out_num_w"] = _uniform(rng, e, (d_num, e, 1))
    params["out_num_b"] = _uniform(rng, e, (d_num, 1, 1))
    for j in schema.cat_idx:
        c = schema.cardinality(j)
        params[f"out_cat{j}_w"] = _uniform(rng, e, (e, c))
        params[f"out_cat{j}_b"] = _uniform(rng, e, (c,))
    return params


def expected_shapes(config: NptConfig, schema: FeatureSchema) -> dict[str, tuple]:
    rng = np.random.Generator(np.random.Philox(0))
    return {k: v.shape for k, v in init_params(config, schema, rng).items()}


# ---------------------------------------------------------------- forward pass
def in_embed(encoded: list[np.ndarray], params: dict, schema: FeatureSchema) -> Tensor:
    """Per-feature linear maps plus index and feature-type embeddings -> (n, d, e)."""
    parts = []
    num_idx = schema.num_idx
    if num_idx:
        x = Tensor(np.stack([encoded[j] for j in num_idx]))          # (d_num, n, 2)
        h = x @ params["in_num_w"] + params["in_num_b"]                # (d_num, n, e)
        parts.append(transpose(h, (1, 0, 2)))
    cats = [Tensor(encoded[j]) @ params[f"in_cat{j}_w"] + params[f"in_cat{j}_b"]
            for j in schema.cat_idx]
    if cats:
        parts.append(stack(cats, axis=1))
    H = parts[0] if len(parts) == 1 else concat(parts, axis=1)
    type_ids = np.array([0] * len(num_idx) + [1] * len(schema.cat_idx))
    return H + params["index_embed"] + params["type_embed"][type_ids]


def mhsa_block(H: Tensor, p: dict, heads: int, dropout_p: float = 0.0,
               training: bool = False, rng=None) -> Tensor:
    """Pre-LN multi-head self-attention block over the second-to-last axis.

    ``H`` has shape ``(..., N, h)``; leading axes are independent batches.
    Computes ``Res = H W_res + MultiHead(LN(H))`` then ``Res + rFF(LN(Res))``.
    """
    *lead, N, h = H.shape
    if h % heads:
        raise ContractError(f"hidden size {h} not divisible by {heads} heads")
    dk = h // heads
    nb = len(lead)

    def split(t):
        t = t.reshape(*lead, N, heads, dk)
        return transpose(t, tuple(range(nb)) + (nb + 1, nb, nb + 2))   # (..., k, N, dk)

    x = layer_norm(H, p["ln1_g"], p["ln1_b"])
    q = split(x @ p["wq"] + p["bq"])
    k = split(x @ p["wk"] + p["bk"])
    v = split(x @ p["wv"] + p["bv"])
    att = softmax((q @ swap_last(k)) * (1.0 / np.sqrt(dk)), axis=-1)
    att = dropout(att, dropout_p, training, rng)
    o = transpose(att @ v, tuple(range(nb)) + (nb + 1, nb, nb + 2)).reshape(*lead, N, h)
    res = H @ p["wres"] + (o @ p["wo"] + p["bo"])
    hidden = gelu(layer_norm(res, p["ln2_g"], p["ln2_b"]) @ p["w1"] + p["b1"])
    hidden = dropout(hidden, dropout_p, training, rng)
    return res + (hidden @ p["w2"] + p["b2"])


def abd(H: Tensor, p: dict, heads: int, dropout_p=0.0, training=False, rng=None) -> Tensor:
    """Attention between datapoints on the flattened ``(n, d*e)`` view."""
    n, d, e = H.shape
    out = mhsa_block(H.reshape(n, d * e), p, heads, dropout_p, training, rng)
    return out.reshape(n, d, e)


def aba(H: Tensor, p: dict, heads: int, dropout_p=0.0, training=False, rng=None) -> Tensor:
    """Attention between the d attributes of each datapoint independently."""
    return mhsa_block(H, p, heads, dropout_p, training, rng)


def _layer(params: dict, layer: int) -> dict:
    prefix = f"layer{layer}_"
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def out_embed(H: Tensor, params: dict, schema: FeatureSchema) -> Reconstruction:
    d_num = len(schema.num_idx)
    if d_num:
        hn = transpose(H[:, :d_num, :], (1, 0, 2))                     # (d_num, n, e)
        num = (hn @ params["out_num_w"] + params["out_num_b"])         # (d_num, n, 1)
        num = transpose(num.reshape(d_num, H.shape[0]), (1, 0))
    else:
        num = Tensor(np.zeros((H.shape[0], 0)))
    cat = [H[:, d_num + i, :] @ params[f"out_cat{j}_w"] + params[f"out_cat{j}_b"]
           for i, j in enumerate(schema.cat_idx)]
    return Reconstruction(num, cat)


def npt_forward(X, M, params: dict, config: NptConfig, schema: FeatureSchema,
                training: bool = False, rng=None) -> Reconstruction:
    """Reconstruct every feature of every row of ``X`` given mask matrix ``M``.

    Numerical outputs are in normalized space; categorical outputs are logits.
    """
    X = np.asarray(X)
    M = np.asarray(M, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != schema.d:
        raise ContractError(f"X has shape {X.shape}, schema expects {schema.d} columns")
    if M.shape[-1] != schema.d:
        raise ContractError(f"mask has {M.shape[-1]} columns, schema expects {schema.d}")
    H = in_embed(encode(X, schema, M), params, schema)
    for layer, kind in enumerate(config.layer_kinds()):
        block = abd if kind == "abd" else aba
        H = block(H, _layer(params, layer), config.heads, config.dropout_p, training, rng)
    return out_embed(H, params, schema)


# ---------------------------------------------------------------------- losses
def entry_losses(recon: Reconstruction, targets: Targets) -> Tensor:
    """Per-entry loss ``(n, d)`` in internal order: squared error or cross-entropy."""
    parts = []
    if recon.numerical.shape[1]:
        diff = recon.numerical - targets.numerical
        parts.append(diff * diff)
    if recon.categorical:
        parts.append(stack([cross_entropy(logits, t)
                            for logits, t in zip(recon.categorical, targets.categorical)], axis=1))
    return parts[0] if len(parts) == 1 else concat(parts, axis=1)


def masked_loss(recon: Reconstruction, targets: Targets, M, schema: FeatureSchema) -> Tensor:
    """Mean loss over masked entries only; 0 when nothing is masked."""
    Mi = np.asarray(M, dtype=np.float64)[:, schema.order]
    count = Mi.sum()
    if count == 0:
        return Tensor(0.0)
    return (entry_losses(recon, targets) * Mi).sum() * (1.0 / count)


def row_losses(recon: Reconstruction, targets: Targets, M, schema: FeatureSchema) -> np.ndarray:
    """Per-row mean loss over that row's masked entries (0 for unmasked rows)."""
    Mi = np.asarray(M, dtype=np.float64)[:, schema.order]
    L = entry_losses(recon, targets).data
    counts = Mi.sum(axis=1)
    return np.where(counts > 0, (L * Mi).sum(axis=1) / np.maximum(counts, 1), 0.0)


# ------------------------------------------------------------------ checkpoint
CHECKPOINT_VERSION = 1


def save_checkpoint(path, config: NptConfig, schema: FeatureSchema, params: dict,
                    context: np.ndarray | None = None, extra: dict | None = None):
    """Write config, schema, parameters and optional training context to ``.npz``."""
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(config), "schema": schema.to_dict(),
            "extra": extra or {}}
    arrays = {f"param/{k}": v.data for k, v in params.items()}
    if context is not None:
        arrays["context"] = np.asarray(context)
    np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Return ``(config, schema, params, context, extra)``; every shape is validated."""
    with np.load(Path(path), allow_pickle=True) as f:
        meta = json.loads(str(f["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {meta.get('version')}")
        config = NptConfig(**meta["config"])
        schema = FeatureSchema.from_dict(meta["schema"])
        params = {k[len("param/"):]: Tensor(f[k], requires_grad=True)
                  for k in f.files if k.startswith("param/")}
        context = f["context"] if "context" in f.files else None
    shapes = expected_shapes(config, schema)
    if set(shapes) != set(params):
        raise ContractError("checkpoint parameter names do not match its config/schema")
    for k, shape in shapes.items():
        if params[k].shape != shape:
            raise ContractError(f"checkpoint parameter {k} has shape {params[k].shape}, expected {shape}")
    return config, schema, params, context, meta["extra"]


@dataclass
class NptModel:
    """A trained network: configuration, schema and parameters bundled together."""

    config: NptConfig
    schema: FeatureSchema
    params: dict

    def forward(self, X, M, training: bool = False, rng=None) -> Reconstruction:
        return npt_forward(X, M, self.params, self.config, self.schema, training, rng)

    def row_losses(self, X, M) -> np.ndarray:
        """Eval-mode per-row reconstruction loss over masked entries."""
        recon = self.forward(X, M)
        return row_losses(recon, self.schema.targets(X), M, self.schema)
