"""Central finite-difference verification of the hand-derived gradients.

The checker never calls ``backward`` to produce its reference: it perturbs
every parameter entry by +/-step and differences the forward-pass loss, so
it stays an independent oracle for the analytic gradients.

Relative errors are guarded: each entry is scored as
|analytic - numeric| / max(|analytic|, |numeric|, floor), so entries that are
numerically zero on both routes (dead relu paths, dropped units) cannot
inflate the report through finite-difference round-off.

Instances with a relu pre-activation too close to its kink are re-drawn
(deterministically): central differences are invalid across the kink, and
a parameter perturbation of +/-step can push such a pre-activation over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import build_cosine_graph, build_temporal_graph, norm_coefficients
from .model import ModelConfig, ModelParams, forward_arrays, init_params
from .training import backward, cross_entropy_from_logits

DEFAULT_STEP = 1e-5
DEFAULT_TOL = 1e-4
_REL_FLOOR = 1e-3
_KINK_MARGIN = 1e-3  # min |relu pre-activation| for a usable instance


@dataclass(frozen=True)
class GradcheckInstance:
    config: ModelConfig
    params: ModelParams
    x: np.ndarray
    coeffs: np.ndarray
    label: int
    dropout_mask: np.ndarray
    graph_kind: str


@dataclass(frozen=True)
class GradcheckReport:
    max_rel_error: float
    n_instances: int
    worst_instance: int
    worst_param: str
    graph_kinds: tuple[str, ...]
    resampled: int

    def passed(self, tol: float = DEFAULT_TOL) -> bool:
        return self.max_rel_error < tol


def _loss(instance: GradcheckInstance, params: ModelParams) -> float:
    logits, _, _ = forward_arrays(
        params,
        instance.config,
        instance.x,
        instance.coeffs,
        mode="train",
        dropout_mask=instance.dropout_mask,
    )
    return cross_entropy_from_logits(logits, instance.label)


def finite_difference_grads(
    instance: GradcheckInstance, step: float = DEFAULT_STEP
) -> ModelParams:
    """Central differences of the loss w.r.t. every parameter entry."""
    params = instance.params.copy()
    grads = params.copy()
    for (_, p), (_, g) in zip(params.named_arrays(), grads.named_arrays()):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            up = _loss(instance, params)
            flat_p[i] = orig - step
            down = _loss(instance, params)
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * step)
    return grads


def max_relative_error(
    analytic: ModelParams, numeric: ModelParams, floor: float = _REL_FLOOR
) -> tuple[float, str]:
    """Largest guarded relative error over all entries, with its array name."""
    worst = 0.0
    worst_name = ""
    for (name, a), (_, n) in zip(analytic.named_arrays(), numeric.named_arrays()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        err = float((np.abs(a - n) / denom).max())
        if err > worst:
            worst = err
            worst_name = name
    return worst, worst_name


def _min_preactivation(instance: GradcheckInstance) -> float:
    _, _, cache = forward_arrays(
        instance.params,
        instance.config,
        instance.x,
        instance.coeffs,
        mode="train",
        dropout_mask=instance.dropout_mask,
    )
    # Rows whose aggregation coefficients are all zero (isolated nodes without
    # self-aggregation) have structurally-zero pre-activations that no
    # parameter perturbation can move, so they cannot cross the kink.
    movable = np.any(instance.coeffs != 0.0, axis=1)
    mins = []
    for p in cache.mp_preacts:
        if movable.any():
            mins.append(np.abs(p[movable]).min())
    if cache.pre_act is not None and cache.pre_act.size:
        mins.append(np.abs(cache.pre_act).min())
    return min(mins) if mins else np.inf


def _draw_instance(rng: np.random.Generator, index: int) -> GradcheckInstance:
    # Cycle the discrete axes so 20 instances cover both graph kinds and all
    # four skip/pre combinations; sizes stay small enough for exhaustive FD.
    graph_kind = ("cosine", "temporal")[index % 2]
    use_pre = bool((index // 2) % 2)
    use_skip = bool((index // 4) % 2)
    k = int(rng.integers(1, 4))
    n = int(rng.integers(1, 7))
    z = int(rng.integers(2, 9))
    d = z if index % 5 == 0 else int(rng.integers(2, 7))  # include d == z skips
    c = int(rng.integers(2, 5))
    dropout = 0.1 if index % 2 == 0 else 0.0
    self_agg = index % 3 != 0

    config = ModelConfig(
        in_dim=d,
        hidden_dim=z,
        num_layers=k,
        num_classes=c,
        use_pre=use_pre,
        use_skip=use_skip,
        dropout=dropout,
        self_in_aggregation=self_agg,
        dtype="float64",
    )
    x = rng.standard_normal((n, d))
    if graph_kind == "cosine":
        g = build_cosine_graph(x, float(rng.uniform(0.3, 0.7)))
    else:
        g = build_temporal_graph(x)
    coeffs = norm_coefficients(g, include_self=self_agg)
    params = init_params(config, int(rng.integers(2**31)))
    label = int(rng.integers(c))
    if dropout > 0.0:
        keep = rng.random(z) >= dropout
        mask = keep.astype(np.float64) / (1.0 - dropout)
    else:
        mask = np.ones(z, dtype=np.float64)
    return GradcheckInstance(config, params, x, coeffs, label, mask, graph_kind)


def run_gradcheck(
    n_instances: int = 20,
    seed: int = 0,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_TOL,
) -> GradcheckReport:
    """Compare ``backward`` against central differences on random instances."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(17,)))
    worst = 0.0
    worst_instance = -1
    worst_param = ""
    kinds = set()
    resampled = 0
    for index in range(n_instances):
        instance = _draw_instance(rng, index)
        while _min_preactivation(instance) < _KINK_MARGIN:
            resampled += 1
            instance = _draw_instance(rng, index)
        kinds.add(instance.graph_kind)

        _, _, cache = forward_arrays(
            instance.params,
            instance.config,
            instance.x,
            instance.coeffs,
            mode="train",
            dropout_mask=instance.dropout_mask,
        )
        analytic = backward(instance.params, instance.config, cache, instance.label)
        numeric = finite_difference_grads(instance, step=step)
        err, name = max_relative_error(analytic, numeric)
        if err > worst:
            worst, worst_instance, worst_param = err, index, name
    return GradcheckReport(
        max_rel_error=worst,
        n_instances=n_instances,
        worst_instance=worst_instance,
        worst_param=worst_param,
        graph_kinds=tuple(sorted(kinds)),
        resampled=resampled,
    )
