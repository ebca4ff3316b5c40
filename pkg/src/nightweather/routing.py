"""Toy-scale sparse dynamic selection with verifiable gradients.

A knowledge-sharing affine map feeds three heads: a router whose softmax
top-K picks candidate units, a gate whose softmax weighs the selected
units, and a multi-label weather instructor. Gate weights are taken over
all units and restricted to the selection without renormalization (a
renormalized variant is available behind a flag). All math runs in
float64 so analytic gradients can be checked against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .core import DimensionMismatch, InvalidConfig, InvalidInput, SeededRng

BCE_CLAMP = 1e-12
WEATHER_CLASSES = ("H", "RS", "RD", "S")


@dataclass
class RoutingConfig:
    num_units: int = 25  # B
    top_k: int = 10  # K
    dim: int = 16  # D

    def __post_init__(self):
        if not (1 <= self.top_k <= self.num_units):
            raise InvalidConfig("require 1 <= K <= B")
        if self.dim < 1:
            raise InvalidConfig("feature dim must be >= 1")


@dataclass
class RoutingParams:
    w_ksu: np.ndarray  # (D, D)
    b_ksu: np.ndarray  # (D,)
    w_router: np.ndarray  # (D, B)
    w_gate: np.ndarray  # (D, B)
    w_units: np.ndarray  # (B, D, D)
    b_units: np.ndarray  # (B, D)
    w_instructor: np.ndarray  # (D, 4)
    b_instructor: np.ndarray  # (4,)

    def __post_init__(self):
        for name in vars(self):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise InvalidInput(f"{name} contains non-finite values")
            setattr(self, name, arr)

    @classmethod
    def random(cls, config: RoutingConfig, rng: SeededRng, scale: float = 0.5) -> "RoutingParams":
        g = rng.generator
        d, b = config.dim, config.num_units
        s = scale / np.sqrt(d)
        return cls(
            w_ksu=g.normal(0, s, (d, d)),
            b_ksu=g.normal(0, s, d),
            w_router=g.normal(0, s, (d, b)),
            w_gate=g.normal(0, s, (d, b)),
            w_units=g.normal(0, s, (b, d, d)),
            b_units=g.normal(0, s, (b, d)),
            w_instructor=g.normal(0, s, (d, 4)),
            b_instructor=g.normal(0, s, 4),
        )

    def flat_views(self):
        return {name: getattr(self, name) for name in (
            "w_ksu", "b_ksu", "w_router", "w_gate", "w_units", "b_units",
            "w_instructor", "b_instructor",
        )}


@dataclass
class SelectionResult:
    indices: np.ndarray  # (T, K), sorted ascending per token
    gate: np.ndarray  # (T, B), rows sum to 1
    router: np.ndarray  # (T, B), rows sum to 1


@dataclass
class LossWeights:
    perceptual: float = 0.1
    bce: float = 0.001
    load_balance: float = 0.01
    depth: float = 0.02

    def __post_init__(self):
        for name, v in vars(self).items():
            if v < 0:
                raise InvalidInput(f"{name} weight must be >= 0")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ksu_forward(f_enc: np.ndarray, params: RoutingParams) -> np.ndarray:
    f_enc = np.asarray(f_enc, dtype=np.float64)
    if f_enc.ndim != 2 or f_enc.shape[1] != params.w_ksu.shape[0]:
        raise DimensionMismatch(f"expected (T, {params.w_ksu.shape[0]}), got {f_enc.shape}")
    return f_enc @ params.w_ksu + params.b_ksu


def _top_k_indices(router_logits: np.ndarray, k: int) -> np.ndarray:
    # Stable argsort on negated logits breaks ties toward the lowest index.
    order = np.argsort(-router_logits, axis=1, kind="stable")[:, :k]
    return np.sort(order, axis=1)


def route(
    fbar: np.ndarray,
    params: RoutingParams,
    config: RoutingConfig,
    renormalize: bool = False,
) -> Tuple[np.ndarray, SelectionResult]:
    """Sparse mixture of the top-K units, weighed by gate softmax."""
    fbar = np.asarray(fbar, dtype=np.float64)
    if config.top_k > config.num_units:
        raise InvalidConfig("K must not exceed B")
    if fbar.ndim != 2 or fbar.shape[1] != config.dim:
        raise DimensionMismatch(f"expected (T, {config.dim}), got {fbar.shape}")
    router_probs = _softmax(fbar @ params.w_router)
    gate = _softmax(fbar @ params.w_gate)
    indices = _top_k_indices(fbar @ params.w_router, config.top_k)

    t = fbar.shape[0]
    # unit outputs for the selected units only: (T, K, D)
    unit_out = np.einsum("td,tkde->tke", fbar, params.w_units[indices]) + params.b_units[indices]
    weights = np.take_along_axis(gate, indices, axis=1)
    if renormalize:
        weights = weights / weights.sum(axis=1, keepdims=True)
    output = np.einsum("tk,tke->te", weights, unit_out)
    return output, SelectionResult(indices=indices, gate=gate, router=router_probs)


def weather_instruct(fbar: np.ndarray, params: RoutingParams) -> np.ndarray:
    fbar = np.asarray(fbar, dtype=np.float64)
    if fbar.ndim != 2 or fbar.shape[1] != params.w_instructor.shape[0]:
        raise DimensionMismatch("feature dim does not match instructor weights")
    z = fbar @ params.w_instructor + params.b_instructor
    return 1.0 / (1.0 + np.exp(-z))


def bce_loss(probs: np.ndarray, tags: np.ndarray) -> float:
    probs = np.clip(np.asarray(probs, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    tags = np.asarray(tags, dtype=np.float64)
    if probs.shape != tags.shape:
        raise DimensionMismatch("probs and tags shapes differ")
    return float(-np.mean(tags * np.log(probs) + (1.0 - tags) * np.log(1.0 - probs)))


def load_balance_loss(sel: SelectionResult) -> float:
    """B * sum_i f_i * P_i with dispatch fractions f and mean router probs P."""
    t, b = sel.router.shape
    k = sel.indices.shape[1]
    counts = np.bincount(sel.indices.ravel(), minlength=b).astype(np.float64)
    dispatch = counts / (t * k)
    mean_prob = sel.router.mean(axis=0)
    return float(b * np.dot(dispatch, mean_prob))


def total_loss(l1: float, l_per: float, l_bce: float, l_lb: float, l_depth: float,
               w: LossWeights = LossWeights()) -> float:
    parts = (l1, l_per, l_bce, l_lb, l_depth)
    if not all(np.isfinite(parts)):
        raise InvalidInput("loss components must be finite")
    return float(l1 + w.perceptual * l_per + w.bce * l_bce + w.load_balance * l_lb + w.depth * l_depth)


# --- analytic backward --------------------------------------------------------


def objective(
    f_enc: np.ndarray,
    tags: np.ndarray,
    coeff: np.ndarray,
    params: RoutingParams,
    config: RoutingConfig,
    weights: LossWeights = LossWeights(),
) -> float:
    """Scalar used for gradient verification.

    sum(coeff * mixture output) + bce weight * bce + lb weight * lb.
    """
    f_enc = np.asarray(f_enc, dtype=np.float64)
    t = f_enc.shape[0]
    b, k = config.num_units, config.top_k
    fbar = f_enc @ params.w_ksu + params.b_ksu
    zr = fbar @ params.w_router
    zr_s = zr - zr.max(axis=1, keepdims=True)
    er = np.exp(zr_s)
    router = er / er.sum(axis=1, keepdims=True)
    zg = fbar @ params.w_gate
    zg_s = zg - zg.max(axis=1, keepdims=True)
    eg = np.exp(zg_s)
    gate = eg / eg.sum(axis=1, keepdims=True)
    indices = np.sort(np.argsort(-zr, axis=1, kind="stable")[:, :k], axis=1)

    unit_all = np.einsum("td,bde->tbe", fbar, params.w_units) + params.b_units
    sel_units = np.take_along_axis(unit_all, indices[:, :, None], axis=1)
    sel_gate = np.take_along_axis(gate, indices, axis=1)
    mix = float(np.sum(coeff * np.einsum("tk,tke->te", sel_gate, sel_units)))

    z_inst = fbar @ params.w_instructor + params.b_instructor
    probs = np.clip(1.0 / (1.0 + np.exp(-z_inst)), BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = float(-np.mean(tags * np.log(probs) + (1.0 - tags) * np.log(1.0 - probs)))

    counts = np.bincount(indices.ravel(), minlength=b).astype(np.float64)
    lb = float(b * np.dot(counts / (t * k), router.mean(axis=0)))
    return mix + weights.bce * bce + weights.load_balance * lb


def backward(
    f_enc: np.ndarray,
    tags: np.ndarray,
    coeff: np.ndarray,
    params: RoutingParams,
    config: RoutingConfig,
    weights: LossWeights = LossWeights(),
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Gradients of `objective` for all parameters and the input.

    The selection set is held fixed and dispatch fractions are treated as
    constants (straight-through); the balance loss flows through the mean
    router probabilities only.
    """
    f_enc = np.asarray(f_enc, dtype=np.float64)
    coeff = np.asarray(coeff, dtype=np.float64)
    tags = np.asarray(tags, dtype=np.float64)
    fbar = ksu_forward(f_enc, params)
    if coeff.shape != fbar.shape:
        raise DimensionMismatch("coeff shape must match mixture output")
    t, d = fbar.shape
    b, k = config.num_units, config.top_k

    _, sel = route(fbar, params, config)
    probs = weather_instruct(fbar, params)
    grads = {name: np.zeros_like(arr) for name, arr in params.flat_views().items()}
    dfbar = np.zeros_like(fbar)

    # mixture term: through units and gate (selection fixed)
    dgate = np.zeros((t, b))
    for ti in range(t):
        for ki in sel.indices[ti]:
            u = fbar[ti] @ params.w_units[ki] + params.b_units[ki]
            g = sel.gate[ti, ki]
            dgate[ti, ki] = coeff[ti] @ u
            grads["w_units"][ki] += g * np.outer(fbar[ti], coeff[ti])
            grads["b_units"][ki] += g * coeff[ti]
            dfbar[ti] += g * (params.w_units[ki] @ coeff[ti])
    dz_gate = sel.gate * (dgate - np.sum(sel.gate * dgate, axis=1, keepdims=True))
    grads["w_gate"] = fbar.T @ dz_gate
    dfbar += dz_gate @ params.w_gate.T

    # load balance: through router probabilities only
    counts = np.bincount(sel.indices.ravel(), minlength=b).astype(np.float64)
    dispatch = counts / (t * k)
    dprob = np.broadcast_to(weights.load_balance * b * dispatch / t, (t, b))
    dz_router = sel.router * (dprob - np.sum(sel.router * dprob, axis=1, keepdims=True))
    grads["w_router"] = fbar.T @ dz_router
    dfbar += dz_router @ params.w_router.T

    # instructor bce (clamp inactive away from saturation)
    dz_inst = weights.bce * (probs - tags) / tags.size
    grads["w_instructor"] = fbar.T @ dz_inst
    grads["b_instructor"] = dz_inst.sum(axis=0)
    dfbar += dz_inst @ params.w_instructor.T

    # knowledge-sharing unit
    grads["w_ksu"] = f_enc.T @ dfbar
    grads["b_ksu"] = dfbar.sum(axis=0)
    df_enc = dfbar @ params.w_ksu.T
    return grads, df_enc


try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _HAVE_NUMBA = False

    def _njit(**kwargs):
        def wrap(fn):
            return fn

        return wrap


@_njit(cache=True)
def _objective_kernel(f_enc, tags, coeff, w_ksu, b_ksu, w_router, w_gate,
                      w_units, b_units, w_instructor, b_instructor,
                      k, w_bce, w_lb):  # pragma: no cover - exercised via grad_check
    t, d = f_enc.shape
    b = w_router.shape[1]
    fbar = f_enc @ w_ksu
    for ti in range(t):
        fbar[ti] += b_ksu
    zr = fbar @ w_router
    zg = fbar @ w_gate

    counts = np.zeros(b)
    mean_prob = np.zeros(b)
    mix = 0.0
    taken = np.empty(b, dtype=np.bool_)
    for ti in range(t):
        # router softmax
        m = zr[ti].max()
        er = np.exp(zr[ti] - m)
        er_sum = er.sum()
        for i in range(b):
            mean_prob[i] += er[i] / er_sum / t
        # gate softmax
        mg = zg[ti].max()
        eg = np.exp(zg[ti] - mg)
        eg_sum = eg.sum()
        # top-K with ties toward the lowest index
        taken[:] = False
        for _ in range(k):
            best = -1
            best_v = -np.inf
            for i in range(b):
                if not taken[i] and zr[ti, i] > best_v:
                    best_v = zr[ti, i]
                    best = i
            taken[best] = True
            counts[best] += 1.0
            g = eg[best] / eg_sum
            for e in range(d):
                u = b_units[best, e]
                for dd in range(d):
                    u += fbar[ti, dd] * w_units[best, dd, e]
                mix += coeff[ti, e] * g * u

    lb = 0.0
    for i in range(b):
        lb += counts[i] / (t * k) * mean_prob[i]
    lb *= b

    z_inst = fbar @ w_instructor
    bce = 0.0
    for ti in range(t):
        for c in range(4):
            z = z_inst[ti, c] + b_instructor[c]
            p = 1.0 / (1.0 + np.exp(-z))
            if p < BCE_CLAMP:
                p = BCE_CLAMP
            elif p > 1.0 - BCE_CLAMP:
                p = 1.0 - BCE_CLAMP
            bce -= tags[ti, c] * np.log(p) + (1.0 - tags[ti, c]) * np.log(1.0 - p)
    bce /= t * 4

    return mix + w_bce * bce + w_lb * lb


def _fast_objective(f_enc, tags, coeff, params, config, weights):
    return _objective_kernel(
        f_enc, tags, coeff,
        params.w_ksu, params.b_ksu, params.w_router, params.w_gate,
        params.w_units, params.b_units, params.w_instructor, params.b_instructor,
        config.top_k, weights.bce, weights.load_balance,
    )


def selection_margin(fbar: np.ndarray, params: RoutingParams, config: RoutingConfig) -> float:
    """Smallest gap between the K-th and (K+1)-th router logits over tokens."""
    if config.top_k == config.num_units:
        return np.inf
    logits = np.sort(np.asarray(fbar, dtype=np.float64) @ params.w_router, axis=1)[:, ::-1]
    return float(np.min(logits[:, config.top_k - 1] - logits[:, config.top_k]))


def grad_check(
    config: RoutingConfig,
    seed: int,
    h: float = 1e-5,
    n_instances: int = 1,
    tokens: int = 2,
    weights: LossWeights = LossWeights(),
) -> dict:
    """Compare analytic gradients against central differences per parameter.

    Instances whose top-K router-logit margin is below 10*h are rejected
    and resampled (the selection set is not differentiable there).
    """
    if h <= 0:
        raise InvalidInput("step size h must be positive")
    rng = SeededRng(seed, "gradcheck")
    g = rng.generator
    max_rel = 0.0
    checked = 0
    rejected = 0
    attempt = 0
    for _ in range(n_instances):
        while True:
            params = RoutingParams.random(config, rng.derive(f"params/{attempt}"))
            attempt += 1
            f_enc = g.normal(0, 1.0, (tokens, config.dim))
            coeff = g.normal(0, 1.0, (tokens, config.dim))
            tags = (g.uniform(size=(tokens, 4)) < 0.5).astype(np.float64)
            if selection_margin(ksu_forward(f_enc, params), params, config) >= 10.0 * h:
                break
            rejected += 1
        analytic, d_enc = backward(f_enc, tags, coeff, params, config, weights)
        analytic = dict(analytic)
        analytic["f_enc"] = d_enc

        arrays = dict(params.flat_views())
        arrays["f_enc"] = f_enc
        for name, arr in arrays.items():
            flat = arr.ravel()
            grad_flat = analytic[name].ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = _fast_objective(f_enc, tags, coeff, params, config, weights)
                flat[i] = orig - h
                fm = _fast_objective(f_enc, tags, coeff, params, config, weights)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                # floor keeps finite-difference cancellation noise on
                # near-zero gradients from dominating the relative error
                denom = max(abs(numeric), abs(grad_flat[i]), 1e-6)
                max_rel = max(max_rel, abs(numeric - grad_flat[i]) / denom)
                checked += 1
    return {
        "max_rel_error": max_rel,
        "parameters_checked": checked,
        "instances": n_instances,
        "rejected_instances": rejected,
        "h": h,
        "seed": seed,
        "config": {"B": config.num_units, "K": config.top_k, "D": config.dim},
    }


def train_step(
    f_enc: np.ndarray,
    tags: np.ndarray,
    params: RoutingParams,
    config: RoutingConfig,
    lr: float,
    weights: LossWeights = LossWeights(),
) -> None:
    """One SGD step on the bce + load-balance objective, in place."""
    coeff = np.zeros_like(np.asarray(f_enc, dtype=np.float64))
    grads, _ = backward(f_enc, tags, coeff, params, config, weights)
    for name, grad in grads.items():
        getattr(params, name)[...] -= lr * grad
