"""The graph-convolutional classifier and its parameter accounting.

Forward pipeline per graph, all plain numpy:

    h0        = relu(x @ W_pre.T + b_pre)        row-wise pre-layer (optional)
    agg_k     = coeffs @ h_k                      degree-normalized aggregation
    h'_{k+1}  = relu(agg_k @ W_msg[k].T)          shared transform, bias-free
    h_{k+1}   = h'_{k+1} + h_k                    skip, when enabled and shapes match
    h_graph   = mean over rows of h_K             readout
    probs     = softmax(W_out @ h_graph + b_out)  head; inverted dropout on
                                                  h_graph in train mode only

Without the pre-layer the first message-passing weight maps the raw input
dimension to the hidden width, so the first skip is shape-gated. The forward
cache retains every intermediate needed for exact reverse-mode gradients
(see ``training.backward``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import StandardizeStats
from .graph import Graph, norm_coefficients
from .util import substream, write_text_atomic

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters."""

    in_dim: int
    hidden_dim: int = 128
    num_layers: int = 2
    num_classes: int = 4
    use_pre: bool = True
    use_skip: bool = True
    dropout: float = 0.1
    self_in_aggregation: bool = True
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.in_dim < 1:
            raise ValueError("in_dim must be >= 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def layer_in_dim(self, k: int) -> int:
        """Input width of message-passing layer ``k``."""
        if k == 0 and not self.use_pre:
            return self.in_dim
        return self.hidden_dim


@dataclass
class ModelParams:
    """All learnable tensors; also reused as the container for gradients."""

    w_pre: np.ndarray | None  # (z, d) or None when the pre-layer is off
    b_pre: np.ndarray | None  # (z,)
    w_msg: list[np.ndarray]  # k-th is (z, layer_in_dim(k)), bias-free
    w_out: np.ndarray  # (C, z)
    b_out: np.ndarray  # (C,)

    def named_arrays(self):
        if self.w_pre is not None:
            yield "w_pre", self.w_pre
            yield "b_pre", self.b_pre
        for k, w in enumerate(self.w_msg):
            yield f"w_msg{k}", w
        yield "w_out", self.w_out
        yield "b_out", self.b_out

    def copy(self) -> "ModelParams":
        return ModelParams(
            None if self.w_pre is None else self.w_pre.copy(),
            None if self.b_pre is None else self.b_pre.copy(),
            [w.copy() for w in self.w_msg],
            self.w_out.copy(),
            self.b_out.copy(),
        )

    @property
    def size(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


@dataclass
class ForwardCache:
    """Everything the backward pass needs, from one train-mode forward."""

    x: np.ndarray
    coeffs: np.ndarray
    pre_act: np.ndarray | None  # pre-layer pre-activation, None when pre is off
    hs: list  # h_0 .. h_K
    aggs: list  # coeffs @ h_k per layer
    mp_preacts: list  # agg_k @ W_msg[k].T per layer
    skips: list  # whether the skip was applied at each layer
    h_graph: np.ndarray
    dropout_mask: np.ndarray | None  # None in eval mode
    h_dropped: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    mode: str


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max-subtracted)."""
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = substream(seed, "init")
    dt = config.np_dtype

    def glorot(fan_out: int, fan_in: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dt)

    z, c = config.hidden_dim, config.num_classes
    w_pre = b_pre = None
    if config.use_pre:
        w_pre = glorot(z, config.in_dim)
        b_pre = np.zeros(z, dtype=dt)
    w_msg = [glorot(z, config.layer_in_dim(k)) for k in range(config.num_layers)]
    w_out = glorot(c, z)
    b_out = np.zeros(c, dtype=dt)
    return ModelParams(w_pre, b_pre, w_msg, w_out, b_out)


# ---------------------------------------------------------------------------
# individual stages (also composed by ``forward``)


def pre_layer(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Row-wise relu(W_pre x + b_pre)."""
    if params.w_pre is None:
        raise ValueError("model has no pre-layer")
    if x.shape[1] != params.w_pre.shape[1]:
        raise ValueError(
            f"input width {x.shape[1]} does not match pre-layer {params.w_pre.shape}"
        )
    return _relu(x @ params.w_pre.T + params.b_pre)


def mp_layer(params: ModelParams, k: int, h: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """One message-passing step: relu((coeffs @ h) @ W_msg[k].T)."""
    w = params.w_msg[k]
    if h.shape[1] != w.shape[1]:
        raise ValueError(
            f"layer {k}: hidden width {h.shape[1]} does not match weight {w.shape}"
        )
    return _relu((coeffs @ h) @ w.T)


def apply_skip(h_prev: np.ndarray, h_new: np.ndarray) -> np.ndarray:
    """Elementwise residual sum; shapes must match exactly."""
    if h_prev.shape != h_new.shape:
        raise ValueError(f"skip shape mismatch: {h_prev.shape} vs {h_new.shape}")
    return h_new + h_prev


def readout_mean(h: np.ndarray) -> np.ndarray:
    """Permutation-invariant graph representation: mean over node rows."""
    if h.shape[0] < 1:
        raise ValueError("readout needs at least one node")
    return h.mean(axis=0)


def sample_dropout_mask(config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: entries 0 or 1/(1-p), keep probability 1-p."""
    dt = config.np_dtype
    if config.dropout == 0.0:
        return np.ones(config.hidden_dim, dtype=dt)
    keep = rng.random(config.hidden_dim) >= config.dropout
    return (keep / (1.0 - config.dropout)).astype(dt)


def classify(params: ModelParams, h_graph: np.ndarray, dropout_mask=None) -> np.ndarray:
    """Softmax head; the mask (train mode only) is applied to h_graph first."""
    h = h_graph if dropout_mask is None else h_graph * dropout_mask
    return softmax(params.w_out @ h + params.b_out)


# ---------------------------------------------------------------------------
# full forward


def forward_arrays(
    params: ModelParams,
    config: ModelConfig,
    x: np.ndarray,
    coeffs: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    dropout_mask: np.ndarray | None = None,
):
    """Forward pass on pre-extracted node features and aggregation coefficients.

    Returns (logits, probs, cache). In train mode a dropout mask is sampled
    from ``rng`` unless one is supplied explicitly (gradient checking fixes
    the mask so the loss stays deterministic under parameter perturbation).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got '{mode}'")
    dt = config.np_dtype
    x = np.ascontiguousarray(x, dtype=dt)
    coeffs = np.ascontiguousarray(coeffs, dtype=dt)
    if x.shape[1] != config.in_dim:
        raise ValueError(f"input width {x.shape[1]} != config.in_dim {config.in_dim}")

    if config.use_pre:
        pre_act = x @ params.w_pre.T + params.b_pre
        h = _relu(pre_act)
    else:
        pre_act = None
        h = x

    hs = [h]
    aggs: list[np.ndarray] = []
    mp_preacts: list[np.ndarray] = []
    skips: list[bool] = []
    for k in range(config.num_layers):
        agg = coeffs @ h
        preact = agg @ params.w_msg[k].T
        h_new = _relu(preact)
        skip = config.use_skip and h_new.shape == h.shape
        if skip:
            h_new = h_new + h
        aggs.append(agg)
        mp_preacts.append(preact)
        skips.append(skip)
        hs.append(h_new)
        h = h_new

    h_graph = h.mean(axis=0)
    if mode == "train":
        if dropout_mask is None:
            if rng is None and config.dropout > 0.0:
                raise ValueError("train mode needs an rng (or an explicit dropout mask)")
            dropout_mask = sample_dropout_mask(config, rng) if config.dropout > 0.0 \
                else np.ones(config.hidden_dim, dtype=dt)
        h_dropped = h_graph * dropout_mask
    else:
        dropout_mask = None
        h_dropped = h_graph

    logits = params.w_out @ h_dropped + params.b_out
    probs = softmax(logits)
    cache = ForwardCache(
        x=x,
        coeffs=coeffs,
        pre_act=pre_act,
        hs=hs,
        aggs=aggs,
        mp_preacts=mp_preacts,
        skips=skips,
        h_graph=h_graph,
        dropout_mask=dropout_mask,
        h_dropped=h_dropped,
        logits=logits,
        probs=probs,
        mode=mode,
    )
    return logits, probs, cache


def forward(
    params: ModelParams,
    config: ModelConfig,
    graph: Graph,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    dropout_mask: np.ndarray | None = None,
    coeffs: np.ndarray | None = None,
):
    """Full pipeline on a Graph; see ``forward_arrays`` for the return value."""
    if coeffs is None:
        coeffs = norm_coefficients(graph, include_self=config.self_in_aggregation)
    return forward_arrays(
        params, config, graph.features, coeffs, mode=mode, rng=rng,
        dropout_mask=dropout_mask,
    )


def param_count(config: ModelConfig) -> int:
    """Exact learnable-parameter count for the configuration.

    The skip connection is parameter-free, so it never changes the count.
    """
    z, c = config.hidden_dim, config.num_classes
    count = 0
    if config.use_pre:
        count += z * config.in_dim + z
    for k in range(config.num_layers):
        count += z * config.layer_in_dim(k)
    count += c * z + c
    return count


# ---------------------------------------------------------------------------
# checkpoints


@dataclass(frozen=True)
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    class_names: tuple[str, ...]
    standardizer: StandardizeStats | None = None
    train_meta: dict = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    config: ModelConfig,
    class_names,
    standardizer: StandardizeStats | None = None,
    train_meta: dict | None = None,
) -> None:
    """Write a self-contained JSON checkpoint.

    Floats are printed with shortest round-trip repr, so float64 checkpoints
    reload bit-exactly. ``standardizer`` and ``train_meta`` (e.g. the graph
    kind and threshold used in training) make the file sufficient for
    standalone evaluation.
    """
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "class_names": list(class_names),
        "params": {
            "W_p": None if params.w_pre is None else params.w_pre.tolist(),
            "b_p": None if params.b_pre is None else params.b_pre.tolist(),
            "W_e": [w.tolist() for w in params.w_msg],
            "W_o": params.w_out.tolist(),
            "b_o": params.b_out.tolist(),
        },
        "standardizer": None if standardizer is None else standardizer.to_dict(),
        "train_meta": train_meta or {},
    }
    write_text_atomic(path, json.dumps(obj) + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    version = obj.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format_version {version}")
    config = ModelConfig(**obj["config"])
    dt = config.np_dtype
    p = obj["params"]
    params = ModelParams(
        w_pre=None if p["W_p"] is None else np.asarray(p["W_p"], dtype=dt),
        b_pre=None if p["b_p"] is None else np.asarray(p["b_p"], dtype=dt),
        w_msg=[np.asarray(w, dtype=dt) for w in p["W_e"]],
        w_out=np.asarray(p["W_o"], dtype=dt),
        b_out=np.asarray(p["b_o"], dtype=dt),
    )
    standardizer = (
        None
        if obj.get("standardizer") is None
        else StandardizeStats.from_dict(obj["standardizer"])
    )
    return Checkpoint(
        params=params,
        config=config,
        class_names=tuple(obj["class_names"]),
        standardizer=standardizer,
        train_meta=obj.get("train_meta") or {},
    )
