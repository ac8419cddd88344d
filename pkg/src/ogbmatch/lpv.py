"""LPV systems with affine dependence on a known scheduling signal.

    y(t) + sum_{i=1}^{n_a} a_i(p(t-i)) y(t-i) = sum_{i=0}^{n_b} b_i(p(t-i)) u(t-i)

with ``a_i(p) = sum_j a[i-1, j] p_j`` and ``b_i(p) = sum_j b[i, j] p_j``.
Such a system is OGB: with ``u_nl(t) = [p(t) ⊗ u(t); p(t) ⊗ y(t)]`` the
output is a finite impulse response of the additional inputs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .hankel import hankel_matrix
from .matcher import MatchProblem, assemble
from .numlin import rank_of
from .ogb import (BasisFunction, ExogenousSignal, OgbModel, build_extended,
                  exogenous_term)
from .plants import Plant
from .signal import Trajectory


class SchedulingError(KeyError):
    """Scheduling value requested outside the known range."""


@dataclass(frozen=True, eq=False)
class LpvModel:
    """Coefficients ``a`` of shape ``(n_a, n_p, n_y, n_y)`` and ``b`` of shape
    ``(n_b + 1, n_p, n_y, n_u)``; ``a[i-1, j]`` multiplies ``p_j(t-i) y(t-i)``."""

    a: np.ndarray
    b: np.ndarray
    scheduling: ExogenousSignal

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 4 or b.shape[0] < 1:
            raise ValueError("b must have shape (n_b + 1, n_p, n_y, n_u)")
        n_p, n_y = b.shape[1], b.shape[2]
        if a.size == 0:
            a = np.zeros((0, n_p, n_y, n_y))
        if a.ndim != 4 or a.shape[1:] != (n_p, n_y, n_y):
            raise ValueError(f"a must have shape (n_a, {n_p}, {n_y}, {n_y}), got {a.shape}")
        if self.scheduling.dim != n_p:
            raise ValueError(f"scheduling has dimension {self.scheduling.dim}, coefficients need {n_p}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    n_a = property(lambda self: self.a.shape[0])
    n_b = property(lambda self: self.b.shape[0] - 1)
    n_p = property(lambda self: self.b.shape[1])
    n_y = property(lambda self: self.b.shape[2])
    n_u = property(lambda self: self.b.shape[3])

    @property
    def lag(self) -> int:
        return max(self.n_a, self.n_b)

    def p(self, t: int) -> np.ndarray:
        try:
            return self.scheduling(t)
        except KeyError as exc:
            raise SchedulingError(str(exc)) from None

    def with_scheduling(self, scheduling: ExogenousSignal) -> LpvModel:
        return LpvModel(self.a, self.b, scheduling)

    def markov_blocks(self) -> list[np.ndarray]:
        """``G_k`` with ``y(t) = sum_k G_k u_nl(t-k)`` for ``u_nl = [p⊗u; p⊗y]``."""
        blocks = []
        for k in range(self.lag + 1):
            bu = (np.hstack(list(self.b[k])) if k <= self.n_b
                  else np.zeros((self.n_y, self.n_p * self.n_u)))
            ay = (-np.hstack(list(self.a[k - 1])) if 1 <= k <= self.n_a
                  else np.zeros((self.n_y, self.n_p * self.n_y)))
            blocks.append(np.hstack([bu, ay]))
        return blocks

    def extended_order(self) -> int:
        """Minimal state dimension of the FIR map from additional inputs to outputs."""
        G = self.markov_blocks()[1:]
        if not G or not any(np.any(g) for g in G):
            return 0
        k = len(G)
        rows = [np.hstack([G[i + j] if i + j < k else np.zeros_like(G[0]) for j in range(k)])
                for i in range(k)]
        return rank_of(np.vstack(rows))


# ------------------------------------------------------------------ simulate

def simulate_lpv(m: LpvModel, u, y_init, t0: int = 0) -> Trajectory:
    """Forward recursion; ``y_init`` supplies the first ``m.lag`` outputs.

    ``t0`` is the absolute time of the first sample, used to read ``p``.
    """
    uv = np.atleast_2d(np.asarray(u.values if isinstance(u, Trajectory) else u, dtype=float))
    yi = np.asarray(y_init.values if isinstance(y_init, Trajectory) else y_init, dtype=float)
    yi = yi.reshape(m.n_y, -1)
    if uv.shape[0] != m.n_u:
        raise ValueError(f"expected {m.n_u} input channels, got {uv.shape[0]}")
    lag = m.lag
    if yi.shape[1] < lag:
        raise ValueError(f"need {lag} initial outputs, got {yi.shape[1]}")
    T = uv.shape[1]
    y = np.zeros((m.n_y, T))
    y[:, :min(lag, T)] = yi[:, :min(lag, T)]
    for t in range(lag, T):
        acc = np.zeros(m.n_y)
        for i in range(m.n_b + 1):
            acc += np.tensordot(m.p(t0 + t - i), m.b[i], axes=1) @ uv[:, t - i]
        for i in range(1, m.n_a + 1):
            acc -= np.tensordot(m.p(t0 + t - i), m.a[i - 1], axes=1) @ y[:, t - i]
        y[:, t] = acc
    labels = ("y",) if m.n_y == 1 else tuple(f"y{i + 1}" for i in range(m.n_y))
    return Trajectory(y, labels)


class LpvPlant(Plant):
    """:func:`simulate_lpv` behind the plant interface."""

    name = "lpv"

    def __init__(self, model: LpvModel):
        self.model = model
        self.n_u, self.n_y, self.lag = model.n_u, model.n_y, model.lag

    def simulate(self, u, y_init, t0: int = 0) -> np.ndarray:
        return simulate_lpv(self.model, u, y_init, t0).values


# -------------------------------------------------------------- OGB forms

def _p_kron_y(signal: ExogenousSignal, delays, n_y: int):
    def fn(x, t):
        return np.concatenate([np.kron(signal(t - d), x[s * n_y:(s + 1) * n_y])
                               for s, d in enumerate(delays)])
    return fn


def to_ogb(m: LpvModel, reduced: bool = True) -> OgbModel:
    """OGB form of an LPV model.

    ``reduced=True`` gives ``u_nl(t) = [p(t) ⊗ u(t); p(t) ⊗ y(t)]``, the form
    used for matching. ``reduced=False`` gives the unpruned layout
    ``phi_b = [p(t); ...; p(t-n_b)]`` against ``x_hu = [u(t-n_b); ...; u(t)]``
    with ``p(t-i) ⊗ y(t-i)``, ``i = 1..n_a``, in the padding rows. Many of
    its additional inputs are time shifts of others or have zero weight.
    """
    sig = m.scheduling
    lag, order = m.lag, m.extended_order()
    if reduced:
        py = BasisFunction(_p_kron_y(sig, (0,), m.n_y), m.n_p * m.n_y, "p(t)⊗y(t)")
        return OgbModel(m.n_u, m.n_y, y_delays=(0,), u_delays=(0,),
                        phi_b=(exogenous_term(sig, 0, name="p(t)"),), phi_b0=(py,),
                        lag=lag, order=order, name="lpv")
    phi_b = tuple(exogenous_term(sig, i, name=f"p(t-{i})") for i in range(m.n_b + 1))
    y_delays = tuple(range(1, m.n_a + 1))
    phi_b0 = ()
    if m.n_a:
        phi_b0 = (BasisFunction(_p_kron_y(sig, y_delays, m.n_y), m.n_p * m.n_y * m.n_a,
                                "p(t-i)⊗y(t-i)"),)
    return OgbModel(m.n_u, m.n_y, y_delays=y_delays, u_delays=tuple(range(m.n_b, -1, -1)),
                    phi_b=phi_b, phi_b0=phi_b0, pad=m.n_p * m.n_y * m.n_a,
                    lag=lag, order=order, name="lpv_full")


def theta_nl_layout(m: LpvModel) -> np.ndarray:
    """Per-output weight vectors, shape ``(n_y, n_p (n_u (n_b + 1) + n_y n_a))``.

    Entry order: ``b_{0,1}(i, 1..n_u), b_{0,2}(i, ·), ..., b_{n_b,n_p}(i, ·)``,
    then ``-a_{1,1}(i, 1..n_y), ..., -a_{n_a,n_p}(i, ·)``.
    """
    rows = []
    for i in range(m.n_y):
        bpart = [m.b[k, j, i, :] for k in range(m.n_b + 1) for j in range(m.n_p)]
        apart = [-m.a[k, j, i, :] for k in range(m.n_a) for j in range(m.n_p)]
        rows.append(np.concatenate(bpart + apart))
    return np.vstack(rows)


def theta_full(m: LpvModel) -> np.ndarray:
    """Weights ``(n_y, n_nl)`` with ``y(t) = W u_nl(t)`` for ``to_ogb(m, reduced=False)``.

    Cross terms ``p(t-i) u(t-k)`` with ``i != k`` get weight zero.
    """
    n_u, n_p, n_b = m.n_u, m.n_p, m.n_b
    per = n_u * (n_b + 1)  # entries of x_hu
    W = np.zeros((m.n_y, n_p * (n_b + 1) * per + n_p * m.n_y * m.n_a))
    for i in range(n_b + 1):
        slot = n_b - i  # x_hu position of u(t-i)
        for j in range(n_p):
            base = (i * n_p + j) * per + slot * n_u
            W[:, base:base + n_u] = m.b[i, j]
    off = n_p * (n_b + 1) * per
    for i in range(m.n_a):
        for j in range(n_p):
            base = off + (i * n_p + j) * m.n_y
            W[:, base:base + m.n_y] = -m.a[i, j]
    return W


# ------------------------------------------------------ equivalence check

@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    equivalent: bool
    max_deviation: float
    tolerance: float
    permutation: np.ndarray
    rows: int

    def to_dict(self) -> dict:
        return {"equivalent": self.equivalent, "max_deviation": self.max_deviation,
                "tolerance": self.tolerance, "rows": self.rows,
                "permutation": self.permutation.tolist()}


def direct_lpv_system(u: np.ndarray, y: np.ndarray, p_data: np.ndarray, p_exp: np.ndarray,
                      u_ini: np.ndarray, y_ini: np.ndarray, y_r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Matching system built straight from the LPV signals, interleaved per step.

    Data columns are ``[u; y; p⊗u; p⊗y]`` with ``p_data`` aligned to the data;
    ``p_exp`` covers the ``T_ini + L`` experiment steps. Returns ``[A | b]``
    row blocks ordered by time step.
    """
    n_u, n_y = u.shape[0], y.shape[0]
    n_p = p_data.shape[0]
    T_ini, L = u_ini.shape[1], y_r.shape[1]
    depth = T_ini + L
    pu = np.vstack([np.kron(p_data[:, t], u[:, t]) for t in range(u.shape[1])]).T
    py = np.vstack([np.kron(p_data[:, t], y[:, t]) for t in range(u.shape[1])]).T
    w = np.vstack([u, y, pu, py])
    q = w.shape[0]
    H = hankel_matrix(w, depth)
    y_all = np.hstack([y_ini, y_r])
    rows, rhs = [], []
    for k in range(depth):
        blk = H[k * q:(k + 1) * q]
        Hu, Hy = blk[:n_u], blk[n_u:n_u + n_y]
        Hpu = blk[n_u + n_y:n_u + n_y + n_p * n_u]
        Hpy = blk[n_u + n_y + n_p * n_u:]
        pk = p_exp[:, k]
        if k < T_ini:
            rows += [Hu, Hy, Hpu]
            rhs += [u_ini[:, k], y_ini[:, k], np.kron(pk, u_ini[:, k])]
        else:
            rows += [Hy, Hpu - np.kron(pk[:, None], np.eye(n_u)) @ Hu]
            rhs += [y_r[:, k - T_ini], np.zeros(n_p * n_u)]
        rows.append(Hpy)
        rhs.append(np.kron(pk, y_all[:, k]))
    return np.vstack(rows), np.concatenate(rhs)


def match_rows(M1: np.ndarray, M2: np.ndarray) -> tuple[np.ndarray, float]:
    """Row bijection ``perm`` minimizing ``max |M1[perm] - M2|`` in the assignment sense."""
    if M1.shape != M2.shape:
        return np.zeros(0, dtype=int), float("inf")
    # Squared Euclidean distances between all row pairs.
    d = (np.sum(M1 ** 2, 1)[:, None] + np.sum(M2 ** 2, 1)[None, :] - 2 * M1 @ M2.T)
    row, col = linear_sum_assignment(np.maximum(d, 0.0))
    perm = np.empty(M1.shape[0], dtype=int)
    perm[col] = row
    return perm, float(np.max(np.abs(M1[perm] - M2), initial=0.0))


def verify_row_permutation_equivalence(m: LpvModel, data: Trajectory, L: int, T_ini: int,
                                       t0: int = 0, direct_scheduling: ExogenousSignal | None = None,
                                       rtol: float = 1e-12) -> EquivalenceReport:
    """Compare the OGB matching system with the directly built LPV system.

    ``data`` stacks ``n_u`` inputs then ``n_y`` outputs, starting at absolute
    time ``t0``. Its last ``T_ini + L`` samples serve as the experiment and
    the full record as data. ``direct_scheduling`` replaces the scheduling
    used by the direct construction (for negative controls).
    """
    u = data.values[:m.n_u]
    y = data.values[m.n_u:m.n_u + m.n_y]
    T = data.T
    depth = T_ini + L
    if T < depth + 1:
        raise ValueError(f"data of length {T} too short for depth {depth}")
    e0 = T - depth
    model = to_ogb(m)
    w_ext = build_extended(model, Trajectory(u), Trajectory(y), t0)
    prob = MatchProblem(w_ext, model, u[:, e0:e0 + T_ini], y[:, e0:e0 + T_ini], y[:, e0 + T_ini:],
                        t0=t0 + e0)
    sys_ = assemble(prob)
    ogb_aug = np.column_stack([sys_.A, sys_.b])
    sched = m.scheduling if direct_scheduling is None else direct_scheduling
    p_data = np.column_stack([sched(t0 + t) for t in range(T)])
    p_exp = p_data[:, e0:]
    A2, b2 = direct_lpv_system(u, y, p_data, p_exp, u[:, e0:e0 + T_ini], y[:, e0:e0 + T_ini],
                               y[:, e0 + T_ini:])
    direct_aug = np.column_stack([A2, b2])
    perm, dev = match_rows(ogb_aug, direct_aug)
    tol = rtol * max(1.0, float(np.max(np.abs(ogb_aug))))
    return EquivalenceReport(bool(dev <= tol), dev, tol, perm, ogb_aug.shape[0])


# ------------------------------------------------------------- generators

def random_lpv(rng: np.random.Generator, n_u: int = 1, n_y: int = 1, n_p: int = 1,
               n_a: int = 1, n_b: int = 1, T: int = 500, t0: int = 0,
               scale: float = 0.4) -> LpvModel:
    """Random model with scheduling iid uniform in [-1, 1].

    ``scale`` bounds the summed autoregressive gain, which keeps the
    recursion bounded for ``|p| <= 1``.
    """
    a = rng.uniform(-1, 1, (n_a, n_p, n_y, n_y))
    if n_a:
        a *= scale / max(np.sum(np.abs(a), axis=(0, 1, 3)).max(), 1e-12)
    b = rng.uniform(-1, 1, (n_b + 1, n_p, n_y, n_u))
    p = ExogenousSignal(rng.uniform(-1, 1, (n_p, T)), origin=t0)
    return LpvModel(a, b, p)


def sinusoid_scheduling(amplitude, frequency, phase, offset, length: int,
                        origin: int = 0) -> ExogenousSignal:
    """``p_j(t) = offset_j + amplitude_j sin(2π frequency_j t + phase_j)``; frequency in cycles per step."""
    amp, freq, ph, off = (np.atleast_1d(np.asarray(v, dtype=float)) for v in
                          (amplitude, frequency, phase, offset))
    t = np.arange(origin, origin + length)
    vals = off[:, None] + amp[:, None] * np.sin(2 * np.pi * freq[:, None] * t[None, :] + ph[:, None])
    return ExogenousSignal(vals, origin=origin)


def lpv_from_dict(cfg: dict, base_dir: Path | str = ".") -> LpvModel:
    """Build a model from a parsed JSON description.

    ``a`` lists, for each lag ``i = 1..n_a``, one ``n_y x n_y`` matrix per
    scheduling channel; ``b`` likewise for ``i = 0..n_b``. ``scheduling`` is
    either ``{"kind": "sinusoid", amplitude, frequency, phase, offset, length}``
    or ``{"kind": "csv", "path": ...}`` with one column per channel.
    """
    b = np.asarray(cfg["b"], dtype=float)
    a = np.asarray(cfg.get("a", []), dtype=float)
    s = cfg["scheduling"]
    origin = int(s.get("origin", 0))
    kind = s.get("kind")
    if kind == "sinusoid":
        sig = sinusoid_scheduling(s["amplitude"], s["frequency"], s.get("phase", 0.0),
                                  s.get("offset", 0.0), int(s["length"]), origin)
    elif kind == "csv":
        path = Path(base_dir) / s["path"]
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh)][1:]
        sig = ExogenousSignal(np.array(rows, dtype=float).T, origin=origin)
    else:
        raise ValueError(f"unknown scheduling kind {kind!r}")
    return LpvModel(a, b, sig)


def load_lpv_model(path) -> LpvModel:
    path = Path(path)
    with open(path) as fh:
        return lpv_from_dict(json.load(fh), path.parent)
