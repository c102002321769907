"""Finite-alphabet distributions and information functionals.

Every information quantity is returned in bits. Distributions are immutable:
the backing arrays are copied on construction and marked read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ArgumentError

# Mass deviations up to RENORM_TOL are renormalized away, larger ones rejected.
# Deviations below EXACT_TOL are float noise and left untouched so that
# serialized distributions re-parse bit-exactly.
RENORM_TOL = 1e-9
EXACT_TOL = 1e-12
NEG_TOL = 1e-12

Axis = Union[int, str]


def _checked_probs(values, min_ndim: int = 1, max_ndim: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim < min_ndim or (max_ndim is not None and arr.ndim > max_ndim):
        raise ArgumentError(f"expected an array with {min_ndim}..{max_ndim} axes, got shape {arr.shape}")
    if arr.size == 0:
        raise ArgumentError("empty distribution")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("distribution contains non-finite entries")
    if arr.min() < -NEG_TOL:
        raise ArgumentError(f"negative probability {arr.min():.3g}")
    arr = np.clip(arr, 0.0, None)
    total = arr.sum()
    dev = abs(total - 1.0)
    if dev > RENORM_TOL:
        raise ArgumentError(f"probabilities sum to {float(total)!r}, not 1")
    if dev > EXACT_TOL:
        arr = arr / total
    arr.setflags(write=False)
    return arr


def _xlogx_sum(arr: np.ndarray) -> float:
    """Return -sum a*log2(a) with 0 log 0 = 0."""
    a = np.asarray(arr, dtype=float).ravel()
    a = a[a > 0]
    return float(-np.dot(a, np.log2(a)))


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function over ``{0, ..., alphabet_size - 1}``."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _checked_probs(self.probs, 1, 1))

    @property
    def alphabet_size(self) -> int:
        return self.probs.shape[0]

    def __len__(self):
        return self.alphabet_size

    def __getitem__(self, a):
        return self.probs[a]

    @classmethod
    def uniform(cls, n: int) -> "Pmf":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, n: int, a: int) -> "Pmf":
        p = np.zeros(n)
        p[a] = 1.0
        return cls(p)

    def to_json(self) -> list:
        return self.probs.tolist()

    @classmethod
    def from_json(cls, data) -> "Pmf":
        return cls(data)


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Joint law on a product of finite alphabets, one array axis per variable.

    ``axis_labels`` names the axes; operations accept either a label or an
    integer position wherever an axis is expected.
    """

    probs: np.ndarray
    axis_labels: tuple = field(default=None)

    def __post_init__(self):
        probs = _checked_probs(self.probs, 1)
        object.__setattr__(self, "probs", probs)
        labels = self.axis_labels
        if labels is None:
            labels = tuple(f"a{i}" for i in range(probs.ndim))
        labels = tuple(str(s) for s in labels)
        if len(labels) != probs.ndim:
            raise ArgumentError(f"{len(labels)} axis labels for a {probs.ndim}-axis joint")
        if len(set(labels)) != len(labels):
            raise ArgumentError(f"duplicate axis labels {labels}")
        object.__setattr__(self, "axis_labels", labels)

    @property
    def ndim(self) -> int:
        return self.probs.ndim

    @property
    def shape(self) -> tuple:
        return self.probs.shape

    def axis(self, a: Axis) -> int:
        if isinstance(a, (int, np.integer)) and not isinstance(a, bool):
            if not 0 <= a < self.ndim:
                raise ArgumentError(f"axis {a} out of range for {self.ndim} axes")
            return int(a)
        if isinstance(a, str) and a in self.axis_labels:
            return self.axis_labels.index(a)
        raise ArgumentError(f"unknown axis {a!r}; axes are {self.axis_labels}")

    def axes(self, spec) -> tuple:
        """Normalize a single axis or an iterable of axes to integer positions."""
        if isinstance(spec, (int, np.integer, str)):
            spec = (spec,)
        out = tuple(self.axis(a) for a in spec)
        if len(set(out)) != len(out):
            raise ArgumentError(f"repeated axis in {spec!r}")
        return out

    def to_json(self) -> dict:
        return {"axes": list(self.axis_labels), "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, data) -> "JointPmf":
        if isinstance(data, dict):
            return cls(data["probs"], tuple(data["axes"]))
        return cls(data)


@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic matrix: row ``c`` is the law of the output given input ``c``."""

    rows: np.ndarray

    def __post_init__(self):
        arr = np.array(self.rows, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise ArgumentError(f"kernel must be a nonempty matrix, got shape {arr.shape}")
        arr = np.stack([_checked_probs(r, 1, 1) for r in arr])
        arr.setflags(write=False)
        object.__setattr__(self, "rows", arr)

    @property
    def n_inputs(self) -> int:
        return self.rows.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.rows.shape[1]

    def row(self, c: int) -> Pmf:
        return Pmf(self.rows[c])

    @classmethod
    def identity(cls, n: int) -> "Kernel":
        return cls(np.eye(n))

    @classmethod
    def constant(cls, p: Pmf, n_inputs: int) -> "Kernel":
        return cls(np.tile(p.probs, (n_inputs, 1)))

    def to_json(self) -> list:
        return self.rows.tolist()

    @classmethod
    def from_json(cls, data) -> "Kernel":
        return cls(data)


def entropy(p) -> float:
    """Shannon entropy in bits of a Pmf (or any nonnegative array summing to one)."""
    arr = p.probs if isinstance(p, (Pmf, JointPmf)) else np.asarray(p, dtype=float)
    return _xlogx_sum(arr)


def _marginal_array(j: JointPmf, keep: Sequence[int]) -> np.ndarray:
    drop = tuple(i for i in range(j.ndim) if i not in keep)
    arr = j.probs.sum(axis=drop) if drop else j.probs
    # sum keeps the original axis order; reorder to the requested one
    order = sorted(keep)
    return np.transpose(arr, [order.index(k) for k in keep])


def marginalize(j: JointPmf, keep_axes) -> Union[Pmf, JointPmf]:
    """Sum out every axis not in ``keep_axes``.

    A single kept axis yields a Pmf; several yield a JointPmf whose axes follow
    the order given in ``keep_axes``.
    """
    keep = j.axes(keep_axes)
    if not keep:
        raise ArgumentError("keep_axes must be nonempty")
    arr = _marginal_array(j, keep)
    if len(keep) == 1:
        return Pmf(arr)
    return JointPmf(arr, tuple(j.axis_labels[k] for k in keep))


def _joint_entropy(j: JointPmf, axes: tuple) -> float:
    if not axes:
        return 0.0
    return _xlogx_sum(_marginal_array(j, axes))


def conditional_entropy(j: JointPmf, target_axis, given_axes=()) -> float:
    """H(target | given) = H(target, given) - H(given), in bits."""
    target = j.axes(target_axis)
    given = j.axes(given_axes)
    if not target:
        raise ArgumentError("target axis set is empty")
    if set(target) & set(given):
        raise ArgumentError(f"target {target} and conditioning {given} overlap")
    value = _joint_entropy(j, target + given) - _joint_entropy(j, given)
    return max(value, 0.0)


def mutual_information(j: JointPmf, axes_a, axes_b) -> float:
    """I(a; b) = H(a) + H(b) - H(a, b), in bits, clamped at zero."""
    a = j.axes(axes_a)
    b = j.axes(axes_b)
    if not a or not b:
        raise ArgumentError("mutual information needs two nonempty axis sets")
    if set(a) & set(b):
        raise ArgumentError(f"axis sets {a} and {b} overlap")
    value = _joint_entropy(j, a) + _joint_entropy(j, b) - _joint_entropy(j, a + b)
    return max(value, 0.0)


def kl_divergence(p, q) -> float:
    """D(p || q) in bits. Mass of ``p`` where ``q`` vanishes is an error."""
    p = np.asarray(p.probs if isinstance(p, Pmf) else p, dtype=float)
    q = np.asarray(q.probs if isinstance(q, Pmf) else q, dtype=float)
    if p.shape != q.shape:
        raise ArgumentError(f"shape mismatch {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ArgumentError("p puts mass where q vanishes; divergence is infinite")
    return float(np.dot(p[support], np.log2(p[support] / q[support])))


def compose(p_u: Pmf, k_xu: Kernel, k_yu: Kernel) -> JointPmf:
    """Joint law of (X, U, Y) with X and Y conditionally independent given U.

    probs[x, u, y] = p_u[u] * k_xu[u, x] * k_yu[u, y]
    """
    nu = p_u.alphabet_size
    if k_xu.n_inputs != nu or k_yu.n_inputs != nu:
        raise ArgumentError(
            f"kernels have {k_xu.n_inputs} and {k_yu.n_inputs} rows, expected |U| = {nu}"
        )
    t = np.einsum("u,ux,uy->xuy", p_u.probs, k_xu.rows, k_yu.rows)
    return JointPmf(t, ("x", "u", "y"))


def product(*pmfs: Pmf, labels: Iterable[str] | None = None) -> JointPmf:
    """Independent coupling of the given marginals."""
    arr = pmfs[0].probs
    for p in pmfs[1:]:
        arr = np.multiply.outer(arr, p.probs)
    return JointPmf(arr, tuple(labels) if labels is not None else None)


def binary_entropy(p: float) -> float:
    return entropy([p, 1.0 - p])
