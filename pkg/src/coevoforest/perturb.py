"""Adversarial perturbations inside the L-infinity epsilon ball.

A perturbation is an additive (m, d) delta matrix with every entry in
[-epsilon, epsilon].  Applying it to a training view clamps the result to
[0, 1], so perturbed points stay both inside the feature domain and inside
the ball.  Deltas are immutable after construction; the reference-accuracy
cache is write-once and is dropped by every operator that changes deltas.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import BootstrapView


@dataclass
class Perturbation:
    deltas: np.ndarray
    epsilon: float
    cached_reference_accuracy: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float)
        if deltas.ndim != 2:
            raise ValueError(f"deltas must be 2-d, got shape {deltas.shape}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if deltas.size and np.abs(deltas).max() > self.epsilon + 1e-12:
            raise ValueError("delta outside the epsilon ball")
        deltas.setflags(write=False)
        self.deltas = deltas

    @property
    def shape(self) -> tuple[int, int]:
        return self.deltas.shape

    def clone(self, clear_cache: bool = True) -> "Perturbation":
        """Independent copy; the cache is dropped by default because its
        value is only meaningful relative to one island's view."""
        return Perturbation(
            deltas=self.deltas.copy(),
            epsilon=self.epsilon,
            cached_reference_accuracy=None if clear_cache else self.cached_reference_accuracy,
        )


def apply(p: Perturbation, view) -> np.ndarray:
    """Perturbed instance matrix: clamp(x + delta, 0, 1) row by row."""
    base = view.instances if isinstance(view, BootstrapView) else np.asarray(view)
    if base.shape != p.deltas.shape:
        raise ValueError(f"shape mismatch: instances {base.shape}, deltas {p.deltas.shape}")
    return np.clip(base + p.deltas, 0.0, 1.0)


def zero(m: int, d: int, epsilon: float) -> Perturbation:
    return Perturbation(deltas=np.zeros((m, d)), epsilon=epsilon)


def sample_uniform(m: int, d: int, epsilon: float, rng: np.random.Generator) -> Perturbation:
    """Every delta i.i.d. uniform on [-epsilon, epsilon]."""
    return Perturbation(deltas=rng.uniform(-epsilon, epsilon, size=(m, d)), epsilon=epsilon)


def mutate_perturbation(p: Perturbation, rng: np.random.Generator) -> Perturbation:
    """Each cell is independently redrawn from the ball with probability 0.5."""
    redraw = rng.random(p.deltas.shape) < 0.5
    fresh = rng.uniform(-p.epsilon, p.epsilon, size=p.deltas.shape)
    return Perturbation(deltas=np.where(redraw, fresh, p.deltas), epsilon=p.epsilon)


def crossover_perturbations(
    p1: Perturbation, p2: Perturbation, rng: np.random.Generator
) -> tuple[Perturbation, Perturbation]:
    """Exchange whole instance rows between the parents with fair coins."""
    if p1.deltas.shape != p2.deltas.shape:
        raise ValueError("perturbation shapes differ")
    if p1.epsilon != p2.epsilon:
        raise ValueError("perturbation epsilons differ")
    take_first = rng.random(p1.deltas.shape[0]) < 0.5
    mask = take_first[:, None]
    c1 = np.where(mask, p1.deltas, p2.deltas)
    c2 = np.where(mask, p2.deltas, p1.deltas)
    return (
        Perturbation(deltas=c1, epsilon=p1.epsilon),
        Perturbation(deltas=c2, epsilon=p1.epsilon),
    )
