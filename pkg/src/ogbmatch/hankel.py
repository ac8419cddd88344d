"""Block Hankel matrices of (extended) trajectories and the rank condition."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numlin import DEFAULT_POLICY, RankPolicy, rank_of, singular_values
from .signal import Trajectory


class InsufficientDataError(ValueError):
    """Trajectory too short for the requested Hankel depth."""

    def __init__(self, message: str, required: int, available: int):
        super().__init__(f"{message} (required {required}, available {available})")
        self.required = required
        self.available = available


@dataclass(frozen=True)
class SystemDims:
    """Sizes of the extended LTI system.

    ``n_nl`` counts additional inputs per time step, ``lag`` and ``order`` are
    those of the extended system, ``unl_lookback`` is how many samples before
    ``t`` the additional input ``u_nl(t)`` reads.
    """

    n_u: int
    n_y: int
    n_nl: int = 0
    lag: int = 0
    order: int = 0
    unl_lookback: int = 0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v}")

    @property
    def m(self) -> int:
        """Number of free inputs of the extended system."""
        return self.n_u + self.n_nl


@dataclass(frozen=True, eq=False)
class BlockHankel:
    matrix: np.ndarray
    block_rows: int
    channels: int

    @property
    def columns(self) -> int:
        return self.matrix.shape[1]

    def block(self, i: int, j: int) -> np.ndarray:
        """Entry ``w(i + j)`` for 0-based block row ``i`` and column ``j``."""
        q = self.channels
        return self.matrix[i * q:(i + 1) * q, j]


def hankel_matrix(values: np.ndarray, L: int) -> np.ndarray:
    """``H_L`` of a ``(q, T)`` array as a ``(q*L, T-L+1)`` array."""
    values = np.asarray(values, dtype=float)
    q, T = values.shape
    if L < 1:
        raise ValueError("need at least one block row")
    if L > T:
        raise InsufficientDataError(f"Hankel matrix with {L} block rows", L, T)
    windows = sliding_window_view(values, L, axis=1)  # (q, T-L+1, L)
    return np.ascontiguousarray(windows.transpose(2, 0, 1).reshape(q * L, T - L + 1))


def build_hankel(w: Trajectory, L: int) -> BlockHankel:
    return BlockHankel(hankel_matrix(w.values, L), L, w.q)


@dataclass(frozen=True, eq=False)
class PartitionedHankel:
    """Channel-grouped Hankel blocks of an extended trajectory.

    Rows are ordered time-major inside each block (all channels of the first
    time step, then the next step, ...).
    """

    U_hp: np.ndarray
    U_hf: np.ndarray
    Y_p: np.ndarray
    Y_f: np.ndarray
    U_nl: np.ndarray
    T_ini: int
    L: int

    @property
    def columns(self) -> int:
        return self.U_hf.shape[1]

    @property
    def Y(self) -> np.ndarray:
        return np.vstack([self.Y_p, self.Y_f])

    def stacked(self) -> np.ndarray:
        return np.vstack([self.U_hp, self.U_hf, self.Y_p, self.Y_f, self.U_nl])


def partition_extended(w_ext: Trajectory, dims: SystemDims, L: int,
                       T_ini: int) -> PartitionedHankel:
    """Split ``H_{L+T_ini}(w_ext)`` into past/future input and output blocks.

    ``w_ext`` must be channel-grouped as ``(u_h, y, u_nl)`` and already
    restricted to its usable window (see :func:`ogbmatch.ogb.build_extended`).
    """
    q = dims.n_u + dims.n_y + dims.n_nl
    if w_ext.q != q:
        raise ValueError(f"extended trajectory has {w_ext.q} channels, dims imply {q}")
    depth = L + T_ini
    if w_ext.T < depth:
        raise InsufficientDataError("extended trajectory shorter than L + T_ini", depth, w_ext.T)
    v = w_ext.values
    nu, ny = dims.n_u, dims.n_y
    Hu = hankel_matrix(v[:nu], depth)
    Hy = hankel_matrix(v[nu:nu + ny], depth)
    Hnl = hankel_matrix(v[nu + ny:], depth)
    return PartitionedHankel(
        U_hp=Hu[:nu * T_ini], U_hf=Hu[nu * T_ini:],
        Y_p=Hy[:ny * T_ini], Y_f=Hy[ny * T_ini:],
        U_nl=Hnl, T_ini=T_ini, L=L,
    )


def interleaved_row_permutation(dims: SystemDims, depth: int, T_ini: int) -> np.ndarray:
    """Row indices mapping ``H_depth(w_ext)`` onto ``PartitionedHankel.stacked()``.

    ``H[perm] == stacked`` where ``H`` is the Hankel of the interleaved signal.
    """
    q = dims.n_u + dims.n_y + dims.n_nl
    nu, ny = dims.n_u, dims.n_y

    def rows(offset, width, steps):
        return [s * q + offset + c for s in steps for c in range(width)]

    past, fut, full = range(T_ini), range(T_ini, depth), range(depth)
    perm = (rows(0, nu, past) + rows(0, nu, fut) + rows(nu, ny, past)
            + rows(nu, ny, fut) + rows(nu + ny, dims.n_nl, full))
    return np.asarray(perm, dtype=int)


@dataclass(frozen=True)
class GpeReport:
    rank: int
    required: int
    columns: int
    verdict: str  # "satisfied" | "deficient" | "exceeds"
    note: str = ""
    smallest_kept: float = float("nan")
    largest_dropped: float = float("nan")

    @property
    def satisfied(self) -> bool:
        return self.verdict == "satisfied"

    def to_dict(self) -> dict:
        return asdict(self)


def required_rank(dims: SystemDims, depth: int) -> int:
    return (dims.n_u + dims.n_nl) * depth + dims.order


def check_gpe(ph: PartitionedHankel, dims: SystemDims,
              policy: RankPolicy = DEFAULT_POLICY) -> GpeReport:
    """Compare rank ``H_{L+T_ini}(w_ext)`` with ``(n_u + n_nl)(L + T_ini) + n``."""
    H = ph.stacked()
    required = required_rank(dims, ph.L + ph.T_ini)
    s = singular_values(H)
    thr = policy.threshold(s, H.shape)
    r = int(np.sum(s > thr))
    kept = float(s[r - 1]) if r > 0 else float("nan")
    dropped = float(s[r]) if r < s.size else float("nan")
    if r == required:
        verdict, note = "satisfied", ""
    elif r < required:
        verdict = "deficient"
        note = (f"only {H.shape[1]} columns" if H.shape[1] < required
                else "data not exciting enough or redundant additional inputs")
    else:
        verdict = "exceeds"
        note = "either the assumed order is too low or the basis does not span the nonlinearity"
    return GpeReport(r, required, H.shape[1], verdict, note, kept, dropped)


def min_data_length(dims: SystemDims, L: int, T_ini: int) -> tuple[int, int, int]:
    """Shortest data lengths meeting the rank condition: (OGB, LTI, difference).

    The OGB count loses ``dims.unl_lookback`` samples to the construction of
    the additional inputs.
    """
    depth = L + T_ini
    n = dims.order
    T_ogb = (dims.n_u + dims.n_nl + 1) * depth + n + dims.unl_lookback - 1
    T_lti = (dims.n_u + 1) * depth + n - 1
    return T_ogb, T_lti, T_ogb - T_lti


def hankel_rank(w: Trajectory, L: int, policy: RankPolicy = DEFAULT_POLICY) -> int:
    return rank_of(hankel_matrix(w.values, L), policy)


def empirical_min_length(w_ext: Trajectory, dims: SystemDims, L: int, T_ini: int,
                         policy: RankPolicy = DEFAULT_POLICY) -> int | None:
    """Shortest raw data length whose extended prefix passes :func:`check_gpe`.

    ``w_ext`` is the extended trajectory of the longest available record; a
    raw length ``T`` corresponds to its first ``T - unl_lookback`` columns.
    Adding columns never lowers the rank, so bisection applies. Returns
    None when even the full record falls short.
    """
    depth = L + T_ini
    lb = dims.unl_lookback

    def ok(T: int) -> bool:
        return check_gpe(partition_extended(w_ext.window(0, T - lb), dims, L, T_ini),
                         dims, policy).satisfied

    hi = w_ext.T + lb
    lo = max(depth + lb + required_rank(dims, depth) - 1, depth + lb)
    if lo > hi or not ok(hi):
        return None
    if ok(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
