"""Seed-keyed random streams.

Every trial gets its own Philox stream keyed by ``(base_seed, trial)``; the
iteration index is the position within that stream. Trials therefore never
share generator state and can run in any order.
"""

from __future__ import annotations

import numpy as np


def trial_rng(base_seed: int, trial: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(trial)])
    return np.random.Generator(np.random.Philox(ss))


def edge_draws(base_seed: int, trial: int, n_edges: int, T: int, per_step: int = 1) -> np.ndarray:
    """Edge indices drawn uniformly for iterations 1..T, shape ``(T, per_step)``."""
    if T <= 0:
        return np.zeros((0, per_step), dtype=np.int64)
    return trial_rng(base_seed, trial).integers(0, n_edges, size=(T, per_step))


def batch_edge_draws(
    base_seed: int, trials: range | list[int], n_edges: int, T: int, per_step: int = 1
) -> np.ndarray:
    """Stack of :func:`edge_draws` for several trials, shape ``(R, T, per_step)``."""
    return np.stack([edge_draws(base_seed, r, n_edges, T, per_step) for r in trials])
