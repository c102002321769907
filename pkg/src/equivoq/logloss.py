"""Log-loss payoffs and the eavesdropper's posterior best response.

Under log-loss the eavesdropper announces a pmf ``z`` and pays
``log2(1 / z(target))``. The expected payoff of any soft strategy decomposes
as H(target | conditioning) plus the average KL divergence between the
posterior and the strategy, so the posterior is the unique best response on
the support and the minimum is a conditional entropy.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .prob import JointPmf, Kernel, Pmf, conditional_entropy

# Stand-in for log(1/0): keeps the arithmetic finite.
INFINITE_LOSS = 1e12


class LogLossPayoff(enum.Enum):
    SOURCE = "pi1"  # z is a pmf on X, scored at x
    RECONSTRUCTION = "pi2"  # z is a pmf on Y, scored at y
    JOINT = "pi3"  # z is a pmf on X x Y, scored at (x, y)

    @classmethod
    def parse(cls, s) -> "LogLossPayoff":
        if isinstance(s, cls):
            return s
        aliases = {"source": cls.SOURCE, "reconstruction": cls.RECONSTRUCTION, "joint": cls.JOINT}
        s = str(s).lower()
        if s in aliases:
            return aliases[s]
        try:
            return cls(s)
        except ValueError:
            raise ArgumentError(f"unknown log-loss variant {s!r}; use pi1, pi2 or pi3") from None

    def support_size(self, nx: int, ny: int) -> int:
        return {LogLossPayoff.SOURCE: nx, LogLossPayoff.RECONSTRUCTION: ny, LogLossPayoff.JOINT: nx * ny}[self]

    def target_index(self, x: int, y: int, ny: int) -> int:
        if self is LogLossPayoff.SOURCE:
            return x
        if self is LogLossPayoff.RECONSTRUCTION:
            return y
        return x * ny + y


@dataclass(frozen=True, eq=False)
class SoftStrategy:
    """Eavesdropper strategy: row ``c`` is the pmf announced after observing ``c``."""

    table: Kernel

    @property
    def rows(self) -> np.ndarray:
        return self.table.rows

    def to_json(self) -> list:
        return self.table.to_json()

    @classmethod
    def from_json(cls, data) -> "SoftStrategy":
        return cls(Kernel(data))


def _loss(prob: float) -> float:
    return INFINITE_LOSS if prob <= 0 else -math.log2(prob)


def evaluate_payoff(variant, x: int, y: int, z, alphabet_sizes: tuple) -> float:
    """Log-loss in bits of announcing ``z`` when the outcome is ``(x, y)``.

    ``alphabet_sizes`` is ``(|X|, |Y|)``. For the joint variant ``z`` may be a
    flat pmf over X x Y (row-major in x) or a 2-D JointPmf.
    """
    variant = LogLossPayoff.parse(variant)
    nx, ny = alphabet_sizes
    probs = np.asarray(z.probs if isinstance(z, (Pmf, JointPmf)) else z, dtype=float).ravel()
    expected = variant.support_size(nx, ny)
    if probs.size != expected:
        raise ArgumentError(f"{variant.value} needs a pmf with {expected} entries, got {probs.size}")
    if not (0 <= x < nx and 0 <= y < ny):
        raise ArgumentError(f"outcome ({x}, {y}) outside alphabets {alphabet_sizes}")
    return _loss(probs[variant.target_index(x, y, ny)])


def _table(joint) -> np.ndarray:
    if isinstance(joint, JointPmf):
        if joint.ndim != 2:
            raise ArgumentError("expected a joint over (conditioning, target)")
        return joint.probs
    arr = np.asarray(joint, dtype=float)
    if arr.ndim != 2:
        raise ArgumentError("expected a joint over (conditioning, target)")
    return arr


def posterior_strategy(joint) -> SoftStrategy:
    """Conditional law of the target given each conditioning symbol.

    Conditioning symbols of probability zero get a uniform row.
    """
    t = _table(joint)
    mass = t.sum(axis=1, keepdims=True)
    rows = np.where(mass > 0, t / np.where(mass > 0, mass, 1.0), 1.0 / t.shape[1])
    return SoftStrategy(Kernel(rows))


def expected_logloss(strategy, joint):
    """E log2(1 / z_C(T)) for (C, T) distributed as ``joint``.

    ``strategy`` is a SoftStrategy, or an array of shape (..., |C|, |T|)
    holding several strategy tables; the latter returns one loss per table.
    """
    t = _table(joint)
    if isinstance(strategy, SoftStrategy):
        z = strategy.rows
    else:
        z = np.asarray(strategy, dtype=float)
        if z.ndim < 2 or np.any(z < 0) or not np.allclose(z.sum(axis=-1), 1.0, atol=1e-9):
            raise ArgumentError("strategy tables must have pmf rows")
    if z.shape[-2:] != t.shape:
        raise ArgumentError(f"strategy shape {z.shape} does not match joint shape {t.shape}")
    on = t > 0
    with np.errstate(divide="ignore"):
        loss = np.where(z > 0, -np.log2(np.where(z > 0, z, 1.0)), INFINITE_LOSS)
    total = np.where(on, t * loss, 0.0).sum(axis=(-2, -1))
    return float(total) if np.ndim(total) == 0 else total


def min_expected_logloss(joint) -> float:
    """Minimum expected log-loss over soft strategies, i.e. H(target | conditioning)."""
    if not isinstance(joint, JointPmf):
        joint = JointPmf(_table(joint))
    return conditional_entropy(joint, 1, 0)
