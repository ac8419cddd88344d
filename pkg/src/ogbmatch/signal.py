"""Finite multivariate discrete-time signals.

A :class:`Trajectory` stores ``q`` channels over ``T`` time steps as a
``(q, T)`` array, one column per time step. Documentation counts time from 1
(``w(1)`` is the first column); indexing in code is 0-based.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class SignalError(ValueError):
    """Raised on malformed or incompatible trajectories."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Immutable q-variate signal of length T.

    ``groups`` optionally names contiguous or scattered channel subsets
    (e.g. ``{"u_h": (0,), "y": (1,), "u_nl": (2,)}``).
    """

    values: np.ndarray
    labels: tuple[str, ...] = ()
    groups: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise SignalError(f"values must be 2-D (q, T), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise SignalError("trajectory contains NaN or Inf")
        labels = tuple(self.labels) or tuple(f"w{i + 1}" for i in range(v.shape[0]))
        if len(labels) != v.shape[0]:
            raise SignalError(f"{len(labels)} labels for {v.shape[0]} channels")
        groups = {k: tuple(int(i) for i in idx) for k, idx in dict(self.groups).items()}
        for name, idx in groups.items():
            if any(i < 0 or i >= v.shape[0] for i in idx):
                raise SignalError(f"group {name!r} has out-of-range channel index")
        object.__setattr__(self, "values", _freeze(v))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)

    @property
    def q(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.T

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.labels == other.labels
                and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"Trajectory(q={self.q}, T={self.T}, labels={list(self.labels)})"

    def group(self, name: str) -> Trajectory:
        """Sub-trajectory holding the channels of group ``name``."""
        try:
            idx = self.groups[name]
        except KeyError:
            raise SignalError(f"no channel group {name!r}") from None
        return select(self, idx)

    def window(self, start: int, stop: int) -> Trajectory:
        """Columns ``start:stop`` (0-based, half-open)."""
        if not 0 <= start <= stop <= self.T:
            raise SignalError(f"window [{start}, {stop}) outside length {self.T}")
        return Trajectory(self.values[:, start:stop], self.labels, self.groups)


@dataclass(frozen=True)
class Partitioning:
    """Input/output split of the channels (0-based indices)."""

    input_indices: tuple[int, ...]
    output_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_indices", tuple(int(i) for i in self.input_indices))
        object.__setattr__(self, "output_indices", tuple(int(i) for i in self.output_indices))
        both = self.input_indices + self.output_indices
        if len(set(both)) != len(both):
            raise SignalError("input and output indices must be disjoint and unique")
        if sorted(both) != list(range(len(both))):
            raise SignalError("partitioning must cover channels 0..q-1 exactly")

    @property
    def n_u(self) -> int:
        return len(self.input_indices)

    @property
    def n_y(self) -> int:
        return len(self.output_indices)

    @property
    def q(self) -> int:
        return self.n_u + self.n_y


@dataclass(frozen=True)
class ExcitationSpec:
    """iid uniform excitation on the open interval ``]low, high[``."""

    length: int
    low: float
    high: float
    leading_zeros: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise SignalError("excitation length must be positive")
        if not self.low < self.high:
            raise SignalError("need low < high")
        if not 0 <= self.leading_zeros <= self.length:
            raise SignalError("leading_zeros must lie in [0, length]")
        if not 0 <= int(self.seed) < 2**64:
            raise SignalError("seed must be an unsigned 64-bit integer")


def as_trajectory(w, labels: Sequence[str] = ()) -> Trajectory:
    if isinstance(w, Trajectory):
        return w
    return Trajectory(np.asarray(w, dtype=float), tuple(labels))


def concat(w1: Trajectory, w2: Trajectory) -> Trajectory:
    """Time concatenation ``w1 ∧ w2``."""
    if w1.q != w2.q:
        raise SignalError(f"channel count mismatch: {w1.q} vs {w2.q}")
    if w1.labels != w2.labels:
        raise SignalError(f"channel labels differ: {w1.labels} vs {w2.labels}")
    return Trajectory(np.hstack([w1.values, w2.values]), w1.labels, w1.groups)


def shift(w: Trajectory, k: int) -> Trajectory:
    """Window of length ``T - |k|`` advanced (k > 0) or delayed (k < 0) by ``|k|``.

    ``shift(w, 1)`` is ``σw`` restricted to the samples that exist.
    """
    k = int(k)
    if abs(k) >= w.T:
        raise SignalError(f"shift by {k} leaves nothing of a length-{w.T} trajectory")
    if k >= 0:
        return w.window(k, w.T)
    return w.window(0, w.T + k)


def select(w: Trajectory, idx: Sequence[int]) -> Trajectory:
    idx = [int(i) for i in idx]
    bad = [i for i in idx if not 0 <= i < w.q]
    if bad:
        raise SignalError(f"channel indices {bad} out of range for q={w.q}")
    return Trajectory(w.values[idx, :], tuple(w.labels[i] for i in idx))


def split(w: Trajectory, p: Partitioning) -> tuple[Trajectory, Trajectory]:
    """Apply ``P w = [u; y]``."""
    if p.q != w.q:
        raise SignalError(f"partitioning covers {p.q} channels, trajectory has {w.q}")
    return select(w, p.input_indices), select(w, p.output_indices)


def merge(u: Trajectory, y: Trajectory, p: Partitioning) -> Trajectory:
    """Inverse of :func:`split`."""
    if u.T != y.T:
        raise SignalError("u and y lengths differ")
    if (u.q, y.q) != (p.n_u, p.n_y):
        raise SignalError("u/y channel counts do not match the partitioning")
    q = p.q
    vals = np.empty((q, u.T))
    labels = [""] * q
    for row, i in enumerate(p.input_indices):
        vals[i] = u.values[row]
        labels[i] = u.labels[row]
    for row, i in enumerate(p.output_indices):
        vals[i] = y.values[row]
        labels[i] = y.labels[row]
    return Trajectory(vals, tuple(labels))


def stack(*parts: Trajectory, names: Sequence[str] | None = None) -> Trajectory:
    """Stack channel groups of equal length; records ``groups`` when named."""
    if not parts:
        raise SignalError("nothing to stack")
    T = parts[0].T
    if any(p.T != T for p in parts):
        raise SignalError("cannot stack trajectories of different lengths")
    groups = {}
    if names is not None:
        if len(names) != len(parts):
            raise SignalError("one name per stacked part")
        start = 0
        for name, p in zip(names, parts):
            groups[name] = tuple(range(start, start + p.q))
            start += p.q
    vals = np.vstack([p.values for p in parts]) if T else np.zeros((sum(p.q for p in parts), 0))
    labels = tuple(lab for p in parts for lab in p.labels)
    return Trajectory(vals, labels, groups)


def generate_excitation(spec: ExcitationSpec, n_channels: int = 1,
                        prefix: str = "u") -> Trajectory:
    """Seeded iid uniform excitation with optional leading zeros.

    Samples are drawn from ``[low, high)`` with numpy's PCG64 generator and
    any draw equal to ``low`` is redrawn, so all nonzero entries lie in the
    open interval. Identical (spec, n_channels) give bitwise-identical output.
    """
    rng = np.random.default_rng(int(spec.seed))
    n_rand = spec.length - spec.leading_zeros
    draws = rng.uniform(spec.low, spec.high, size=(n_rand, n_channels))
    hit = draws <= spec.low
    while hit.any():
        draws[hit] = rng.uniform(spec.low, spec.high, size=int(hit.sum()))
        hit = draws <= spec.low
    vals = np.zeros((n_channels, spec.length))
    vals[:, spec.leading_zeros:] = draws.T
    labels = (prefix,) if n_channels == 1 else tuple(f"{prefix}{i + 1}" for i in range(n_channels))
    return Trajectory(vals, labels)


def json_safe(obj):
    """Replace non-finite floats (not representable in strict JSON) by None, recursively."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return json_safe(obj.item())
    return obj


def write_csv(w: Trajectory, path) -> None:
    """Header row of labels, then one row per time step in round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(w.labels)
        for col in w.values.T:
            writer.writerow([repr(float(x)) for x in col])


def read_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SignalError(f"{path}: empty CSV")
    labels = tuple(rows[0])
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        data = np.zeros((0, len(labels)))
    if data.shape[1] != len(labels):
        raise SignalError(f"{path}: {data.shape[1]} columns, {len(labels)} labels")
    return Trajectory(data.T, labels)
