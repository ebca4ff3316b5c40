#!/usr/bin/env python3
"""Exercise the sparse routing core: gradient check, then a short training run.

Trains the instructor/balance objective on two synthetic weather clusters and
reports how consistently tokens from the same cluster pick the same units.
"""

import argparse
import json

import numpy as np

from nightweather.core import SeededRng
from nightweather.routing import (
    LossWeights,
    RoutingConfig,
    RoutingParams,
    WEATHER_CLASSES,
    bce_loss,
    grad_check,
    ksu_forward,
    load_balance_loss,
    route,
    train_step,
    weather_instruct,
)


def selection_overlap(indices: np.ndarray) -> float:
    """Mean pairwise |intersection| of per-token selection sets."""
    t = indices.shape[0]
    overlaps = [
        len(set(indices[i]) & set(indices[j]))
        for i in range(t)
        for j in range(i + 1, t)
    ]
    return float(np.mean(overlaps)) if overlaps else float(indices.shape[1])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--B", type=int, default=25)
    parser.add_argument("--K", type=int, default=10)
    parser.add_argument("--D", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--tokens-per-class", type=int, default=8)
    parser.add_argument("--gradcheck-instances", type=int, default=3)
    args = parser.parse_args()

    config = RoutingConfig(num_units=args.B, top_k=args.K, dim=args.D)
    report = grad_check(config, seed=args.seed, n_instances=args.gradcheck_instances)
    print("gradient check:", json.dumps(report, indent=2))

    rng = SeededRng(args.seed, "routing-demo")
    g = rng.generator
    params = RoutingParams.random(config, rng.derive("params"))
    centers = g.normal(0, 2.0, (len(WEATHER_CLASSES), config.dim))
    f_enc = np.concatenate(
        [c + 0.1 * g.normal(size=(args.tokens_per_class, config.dim)) for c in centers]
    )
    tags = np.zeros((f_enc.shape[0], len(WEATHER_CLASSES)))
    for c in range(len(WEATHER_CLASSES)):
        tags[c * args.tokens_per_class : (c + 1) * args.tokens_per_class, c] = 1.0

    w = LossWeights()

    def report_state(label):
        fbar = ksu_forward(f_enc, params)
        _, sel = route(fbar, params, config)
        loss = w.bce * bce_loss(weather_instruct(fbar, params), tags) + w.load_balance * load_balance_loss(sel)
        print(f"{label}: objective={loss:.6f}")
        for c, tag in enumerate(WEATHER_CLASSES):
            rows = sel.indices[c * args.tokens_per_class : (c + 1) * args.tokens_per_class]
            print(f"  {tag:>2s}: mean same-class selection overlap "
                  f"{selection_overlap(rows):.2f} / {config.top_k}")

    report_state("before training")
    for _ in range(args.steps):
        train_step(f_enc, tags, params, config, lr=0.5, weights=w)
    report_state(f"after {args.steps} steps")


if __name__ == "__main__":
    main()
