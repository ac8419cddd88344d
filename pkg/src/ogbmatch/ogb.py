"""Output-generalized bilinear (OGB) models and their additional inputs.

An OGB model turns measured inputs and outputs into an additional input

    u_nl(t) = phi_b0(x_y(t), t) + [phi_b(x_y(t), t) ⊗ x_hu(t); 0_k]

where ``x_y(t)`` stacks ``y(t - d)`` for the model's output delays and
``x_hu(t)`` stacks ``h(u(t - d))`` for its input delays. Treating ``u_nl`` as
a free input gives an LTI system (the extended behavior) whose data matrix is
used for output matching.

The textbook layout uses output delays ``l, ..., 1`` and input delays
``l, ..., 0`` (see :meth:`OgbModel.standard`). Other delay sets give the same
extended system up to shifts of ``u_nl``; a model that reads only current
outputs (delay 0) loses no samples when its additional inputs are built.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .hankel import SystemDims
from .signal import Trajectory, stack


class ModelError(ValueError):
    pass


class DomainError(ValueError):
    """Value outside the declared domain of an input map."""


@dataclass(frozen=True, eq=False)
class BasisFunction:
    """Opaque map ``(x_y, t) -> R^size``.

    ``fn`` must be deterministic. It receives the flat ``x_y`` vector and the
    absolute (0-based) time index of the step being evaluated.
    """

    fn: Callable[[np.ndarray, int], object]
    size: int = 1
    name: str = ""

    def __call__(self, x_y: np.ndarray, t: int) -> np.ndarray:
        out = np.asarray(self.fn(x_y, t), dtype=float).reshape(-1)
        if out.size != self.size:
            raise ModelError(f"basis function {self.name or self.fn!r} returned "
                             f"{out.size} values, declared {self.size}")
        return out


class ExogenousSignal:
    """Known time-indexed signal (e.g. LPV scheduling) read by basis functions.

    ``values`` has shape ``(n_p, T_p)``; column ``k`` is the value at absolute
    time ``origin + k``. Lookups outside the stored range raise.
    """

    def __init__(self, values, origin: int = 0, name: str = "p"):
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        self.values = v
        self.values.setflags(write=False)
        self.origin = int(origin)
        self.name = name

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __call__(self, t: int) -> np.ndarray:
        k = int(t) - self.origin
        if not 0 <= k < self.values.shape[1]:
            raise KeyError(f"{self.name}({t}) is not known (stored times "
                           f"{self.origin}..{self.origin + self.values.shape[1] - 1})")
        return self.values[:, k]

    def with_value(self, t: int, value) -> ExogenousSignal:
        v = self.values.copy()
        v[:, int(t) - self.origin] = value
        return ExogenousSignal(v, self.origin, self.name)


# ---------------------------------------------------------------- input maps

@dataclass(frozen=True, eq=False)
class InputMap:
    """Bijection ``u_h = h(u)`` applied per time step.

    ``forward(u, past)`` and ``inverse(u_h, past)`` receive the current value
    (length ``n_u``) and the previous ``lookback`` raw inputs as an
    ``(n_u, lookback)`` array, oldest first. ``domain`` checks raw inputs.
    """

    forward: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lookback: int = 0
    name: str = "custom"
    domain: Callable[[np.ndarray], bool] | None = None

    def forward_sequence(self, u: np.ndarray) -> np.ndarray:
        """``(n_u, T) -> (n_u, T - lookback)``; output column k is ``h`` at ``k + lookback``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        c = self.lookback
        if u.shape[1] < c:
            raise ModelError(f"input map needs {c} past inputs")
        out = np.empty((u.shape[0], u.shape[1] - c))
        for k in range(c, u.shape[1]):
            if self.domain is not None and not self.domain(u[:, k]):
                raise DomainError(f"input {u[:, k]} at step {k} outside domain of {self.name}")
            out[:, k - c] = self.forward(u[:, k], u[:, k - c:k])
        return out

    def inverse_sequence(self, u_h: np.ndarray, past: np.ndarray | None = None) -> np.ndarray:
        """Invert forward in time; ``past`` holds the ``lookback`` raw inputs before ``u_h``."""
        u_h = np.atleast_2d(np.asarray(u_h, dtype=float))
        c = self.lookback
        n_u, T = u_h.shape
        if past is None:
            if c:
                raise ModelError(f"inverting {self.name} needs {c} previous raw inputs")
            past = np.zeros((n_u, 0))
        past = np.atleast_2d(np.asarray(past, dtype=float)).reshape(n_u, -1)
        if past.shape[1] < c:
            raise ModelError(f"inverting {self.name} needs {c} previous raw inputs")
        raw = np.hstack([past[:, past.shape[1] - c:], np.empty((n_u, T))])
        for k in range(T):
            raw[:, c + k] = self.inverse(u_h[:, k], raw[:, k:c + k])
        return raw[:, c:]


def identity_map() -> InputMap:
    return InputMap(lambda u, past: np.array(u, dtype=float),
                    lambda uh, past: np.array(uh, dtype=float), 0, "identity")


def _example_forward(u, past):
    return np.array([u[0] + u[1] ** 2, u[1] ** 3])


def _example_inverse(uh, past):
    u2 = np.cbrt(uh[1])
    return np.array([uh[0] - u2 ** 2, u2])


def square_cube_map() -> InputMap:
    """``h(u) = (u1 + u2**2, u2**3)``; the inverse uses the real cube root, so it is defined on all of R²."""
    return InputMap(_example_forward, _example_inverse, 0, "square_cube")


def cube_map() -> InputMap:
    """Elementwise ``u**3`` with real cube-root inverse."""
    return InputMap(lambda u, past: np.asarray(u, dtype=float) ** 3,
                    lambda uh, past: np.cbrt(np.asarray(uh, dtype=float)), 0, "cube")


def incremental_map() -> InputMap:
    """``u_h(t) = u(t) + 0.5 u(t-1)``, a causal map with one step of memory."""
    return InputMap(lambda u, past: np.asarray(u) + 0.5 * past[:, -1],
                    lambda uh, past: np.asarray(uh) - 0.5 * past[:, -1], 1, "incremental")


INPUT_MAPS: dict[str, Callable[[], InputMap]] = {
    "identity": identity_map,
    "square_cube": square_cube_map,
    "cube": cube_map,
    "incremental": incremental_map,
}


# --------------------------------------------------------------------- model

@dataclass(frozen=True, eq=False)
class OgbModel:
    """Basis functions, input map and delay layout defining ``u_nl``.

    ``phi_b0`` either fills only the ``pad`` trailing rows (the usual case,
    ``pad`` then defaults to its total size) or all ``n_nl`` rows.
    ``lag`` and ``order`` describe the extended LTI system and feed the rank
    condition; they are not used to build ``u_nl``.
    """

    n_u: int
    n_y: int
    y_delays: tuple[int, ...] = ()
    u_delays: tuple[int, ...] = (0,)
    phi_b: tuple[BasisFunction, ...] = ()
    phi_b0: tuple[BasisFunction, ...] = ()
    input_map: InputMap = field(default_factory=identity_map)
    pad: int | None = None
    lag: int = 0
    order: int = 0
    name: str = "ogb"

    def __post_init__(self):
        object.__setattr__(self, "y_delays", tuple(int(d) for d in self.y_delays))
        object.__setattr__(self, "u_delays", tuple(int(d) for d in self.u_delays))
        object.__setattr__(self, "phi_b", tuple(self.phi_b))
        object.__setattr__(self, "phi_b0", tuple(self.phi_b0))
        if any(d < 0 for d in self.y_delays + self.u_delays):
            raise ModelError("delays must be nonnegative (no future samples)")
        if self.phi_b and not self.u_delays:
            raise ModelError("phi_b needs at least one input delay")
        size0 = sum(f.size for f in self.phi_b0)
        n_kron = sum(f.size for f in self.phi_b) * self.n_u * len(self.u_delays)
        pad = size0 if self.pad is None else int(self.pad)
        if pad < 0:
            raise ModelError("pad must be nonnegative")
        if size0 not in (0, pad, n_kron + pad):
            raise ModelError(f"phi_b0 has {size0} rows; expected 0, pad={pad} or n_nl={n_kron + pad}")
        object.__setattr__(self, "pad", pad)

    @classmethod
    def standard(cls, n_u: int, n_y: int, lag: int, **kw) -> OgbModel:
        """Layout with ``x_y = [y(t-l); ...; y(t-1)]`` and ``x_hu = [h(u(t-l)); ...; h(u(t))]``."""
        return cls(n_u, n_y, tuple(range(lag, 0, -1)), tuple(range(lag, -1, -1)),
                   **{"lag": lag, **kw})

    @property
    def n_b(self) -> int:
        return sum(f.size for f in self.phi_b)

    @property
    def n_kron(self) -> int:
        return self.n_b * self.n_u * len(self.u_delays)

    @property
    def n_nl(self) -> int:
        return self.n_kron + self.pad

    @property
    def x_y_size(self) -> int:
        return self.n_y * len(self.y_delays)

    @property
    def x_hu_size(self) -> int:
        return self.n_u * len(self.u_delays)

    @property
    def y_lookback(self) -> int:
        return max(self.y_delays, default=0)

    @property
    def uh_lookback(self) -> int:
        return max(self.u_delays, default=0) if self.phi_b else 0

    @property
    def lookback(self) -> int:
        """Samples lost at the start when building the extended trajectory."""
        c = self.input_map.lookback
        return max(self.y_lookback, self.uh_lookback + c, c)

    @property
    def dims(self) -> SystemDims:
        return SystemDims(self.n_u, self.n_y, self.n_nl, self.lag, self.order, self.lookback)

    def with_structure(self, lag: int | None = None, order: int | None = None) -> OgbModel:
        return replace(self, lag=self.lag if lag is None else lag,
                       order=self.order if order is None else order)

    def channel_labels(self) -> tuple[str, ...]:
        return tuple(f"unl{i + 1}" for i in range(self.n_nl))

    def channel_owners(self) -> list[tuple[str, int]]:
        """Owning basis function of each ``u_nl`` channel as ``("b"|"b0", index)``.

        Only defined for the padded ``phi_b0`` layout.
        """
        if sum(f.size for f in self.phi_b0) not in (0, self.pad):
            raise ModelError("channel ownership needs phi_b0 confined to the padding rows")
        owners = []
        per = self.x_hu_size
        for i, f in enumerate(self.phi_b):
            owners += [("b", i)] * (f.size * per)
        for i, f in enumerate(self.phi_b0):
            owners += [("b0", i)] * f.size
        owners += [("pad", -1)] * (self.n_nl - len(owners))
        return owners

    def without(self, phi_b_idx: Sequence[int] = (), phi_b0_idx: Sequence[int] = ()) -> OgbModel:
        """Copy with the given basis functions removed."""
        self.channel_owners()
        drop_b, drop_0 = set(phi_b_idx), set(phi_b0_idx)
        phi_b = tuple(f for i, f in enumerate(self.phi_b) if i not in drop_b)
        phi_b0 = tuple(f for i, f in enumerate(self.phi_b0) if i not in drop_0)
        unused_pad = self.pad - sum(f.size for f in self.phi_b0)
        return replace(self, phi_b=phi_b, phi_b0=phi_b0,
                       pad=sum(f.size for f in phi_b0) + unused_pad)


# ---------------------------------------------------------------- evaluation

def _phi_b0_full(m: OgbModel, x_y: np.ndarray, t: int) -> np.ndarray:
    out = np.zeros(m.n_nl)
    if m.phi_b0:
        vals = np.concatenate([f(x_y, t) for f in m.phi_b0])
        if vals.size == m.n_nl:
            out[:] = vals
        else:
            out[m.n_kron:m.n_kron + vals.size] = vals
    return out


def eval_phi_nl(m: OgbModel, x_y, x_hu, t: int = 0) -> np.ndarray:
    """``phi_b0(x_y, t) + [phi_b(x_y, t) ⊗ x_hu; 0_k]``.

    In the Kronecker product the basis index varies slowest and ``x_hu``
    fastest, so for a single basis function ``b`` the block reads
    ``b*u1(t-l), b*u2(t-l), ..., b*u1(t), b*u2(t)``.
    """
    x_y = np.asarray(x_y, dtype=float).reshape(-1)
    x_hu = np.asarray(x_hu, dtype=float).reshape(-1)
    if x_y.size != m.x_y_size:
        raise ModelError(f"x_y has {x_y.size} entries, model expects {m.x_y_size}")
    if x_hu.size != m.x_hu_size:
        raise ModelError(f"x_hu has {x_hu.size} entries, model expects {m.x_hu_size}")
    out = _phi_b0_full(m, x_y, t)
    if m.phi_b:
        b = np.concatenate([f(x_y, t) for f in m.phi_b])
        out[:m.n_kron] += np.kron(b, x_hu)
    return out


def _x_y(m: OgbModel, y: np.ndarray, k: int) -> np.ndarray:
    if not m.y_delays:
        return np.zeros(0)
    return np.concatenate([y[:, k - d] for d in m.y_delays])


def _x_hu(m: OgbModel, u_h: np.ndarray, k: int) -> np.ndarray:
    return np.concatenate([u_h[:, k - d] for d in m.u_delays])


def _check_io(m: OgbModel, u: Trajectory, y: Trajectory):
    if u.T != y.T:
        raise ModelError(f"u has {u.T} samples, y has {y.T}")
    if u.q != m.n_u or y.q != m.n_y:
        raise ModelError(f"expected {m.n_u} inputs / {m.n_y} outputs, got {u.q} / {y.q}")
    if u.T <= m.lookback:
        raise ModelError(f"trajectory of length {u.T} too short: additional inputs "
                         f"need {m.lookback} past samples")


def transformed_inputs(m: OgbModel, u: Trajectory) -> np.ndarray:
    """``u_h`` aligned with ``u``; the first ``input_map.lookback`` columns are NaN."""
    c = m.input_map.lookback
    u_h = np.full(u.values.shape, np.nan)
    u_h[:, c:] = m.input_map.forward_sequence(u.values)
    return u_h


def build_unl(m: OgbModel, u: Trajectory, y: Trajectory, t0: int = 0) -> Trajectory:
    """Additional inputs over the usable window ``t = lookback .. T-1``.

    ``t0`` is the absolute time of the first sample of ``u`` and ``y``, passed
    on to time-dependent basis functions.
    """
    _check_io(m, u, y)
    lb = m.lookback
    u_h = transformed_inputs(m, u)
    yv = y.values
    out = np.empty((m.n_nl, u.T - lb))
    for k in range(lb, u.T):
        x_hu = _x_hu(m, u_h, k) if m.phi_b else np.zeros(m.x_hu_size)
        out[:, k - lb] = eval_phi_nl(m, _x_y(m, yv, k), x_hu, t0 + k)
    return Trajectory(out, m.channel_labels())


def build_extended(m: OgbModel, u: Trajectory, y: Trajectory, t0: int = 0) -> Trajectory:
    """Channel-grouped ``w_ext = (u_h, y, u_nl)`` over the usable window."""
    unl = build_unl(m, u, y, t0)
    lb = m.lookback
    u_h = transformed_inputs(m, u)[:, lb:]
    uh_labels = tuple(f"h({lab})" for lab in u.labels)
    return stack(Trajectory(u_h, uh_labels), y.window(lb, y.T), unl,
                 names=("u_h", "y", "u_nl"))


def probe_phi_matrix(m: OgbModel, y_window: Trajectory, horizon: int, t0: int = 0,
                     u_h_before=None) -> tuple[np.ndarray, np.ndarray]:
    """Affine map from stacked ``u_h`` to stacked ``u_nl`` over a horizon.

    ``y_window`` holds outputs for ``pre + horizon`` steps; the last
    ``horizon`` are the steps where ``u_nl`` is evaluated and ``t0`` is the
    absolute time of the first of them. Returns ``(phi_b0_stack, Phi_b)``
    with ``u_nl = phi_b0_stack + Phi_b @ vec(u_h)``, both stacked time-major.

    ``Phi_b`` is recovered by pulse probing: ``phi_nl`` is evaluated with a
    single unit entry in ``x_hu`` and the input-free value subtracted, one
    probe per input coordinate and delay. Inputs that precede the horizon
    (needed when an input delay reaches back before it) are taken from
    ``u_h_before``, an ``(n_u, >= max delay)`` array, and their contribution
    is added to ``phi_b0_stack``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    y = y_window.values
    pre = y.shape[1] - horizon
    if y.shape[0] != m.n_y:
        raise ModelError(f"y_window has {y.shape[0]} channels, model has {m.n_y} outputs")
    if pre < m.y_lookback:
        raise ModelError(f"output window needs {m.y_lookback} samples before the horizon, has {max(pre, 0)}")
    need_u = m.uh_lookback
    if need_u:
        if u_h_before is None:
            raise ModelError(f"{need_u} transformed inputs before the horizon are required")
        u_h_before = np.atleast_2d(np.asarray(u_h_before, dtype=float))
        if u_h_before.shape[1] < need_u:
            raise ModelError(f"u_h_before has {u_h_before.shape[1]} columns, needs {need_u}")
    nnl, nu = m.n_nl, m.n_u
    phi0 = np.empty(nnl * horizon)
    Phi = np.zeros((nnl * horizon, nu * horizon))
    zero_hu = np.zeros(m.x_hu_size)
    for k in range(horizon):
        x_y = _x_y(m, y, pre + k)
        base = eval_phi_nl(m, x_y, zero_hu, t0 + k)
        rows = slice(k * nnl, (k + 1) * nnl)
        phi0[rows] = base
        if not m.phi_b:
            continue
        for j, d in enumerate(m.u_delays):
            for i in range(nu):
                pulse = np.zeros(m.x_hu_size)
                pulse[j * nu + i] = 1.0
                col = eval_phi_nl(m, x_y, pulse, t0 + k) - base
                step = k - d
                if step >= 0:
                    Phi[rows, step * nu + i] += col
                else:
                    phi0[rows] += col * u_h_before[i, u_h_before.shape[1] + step]
    return phi0, Phi


def split_phi_matrix(Phi_b: np.ndarray, dims: SystemDims, T_ini: int,
                     L: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns for the initial inputs and for the matched inputs."""
    width = dims.n_u * (T_ini + L)
    if Phi_b.shape[1] != width:
        raise ModelError(f"Phi_b has {Phi_b.shape[1]} columns, expected {width}")
    cut = dims.n_u * T_ini
    return Phi_b[:, :cut], Phi_b[:, cut:]


# ---------------------------------------------------------------- redundancy

def find_shift_duplicates(unl: Trajectory, max_shift: int, rtol: float = 1e-10) -> list[tuple[int, int, int]]:
    """Pairs of channels where one is a time shift of another.

    Returns ``(i, j, s)`` meaning ``unl_j(t) == unl_i(t - s)`` on the overlap,
    with ``s`` in ``1..max_shift`` (``s = 0`` reports exact duplicates, i < j).
    Identically zero channels are ignored.
    """
    v = unl.values
    scale = np.max(np.abs(v)) if v.size else 0.0
    tol = rtol * max(scale, 1.0)
    found = []
    nz = [c for c in range(v.shape[0]) if np.max(np.abs(v[c]), initial=0.0) > tol]
    for i in nz:
        for j in nz:
            for s in range(0, max_shift + 1):
                if s == 0 and j <= i:
                    continue
                if v.shape[1] - s < 2:
                    continue
                if np.max(np.abs(v[j, s:] - v[i, :v.shape[1] - s])) <= tol:
                    found.append((i, j, s))
    return found


def redundant_basis(m: OgbModel, u: Trajectory, y: Trajectory, t0: int = 0,
                    max_shift: int | None = None) -> list[tuple[str, int]]:
    """``phi_b0`` functions whose channels all duplicate (shifted) other channels.

    For each shift-duplicate pair the later-in-order channel is flagged, so one
    representative of every group survives.
    """
    unl = build_unl(m, u, y, t0)
    shift = max(m.lag, m.y_lookback, 1) if max_shift is None else max_shift
    dup_channels = {j for (i, j, s) in find_shift_duplicates(unl, shift) if i != j}
    owners = m.channel_owners()
    flagged = []
    for kind, idx in sorted(set(owners)):
        if kind != "b0":
            continue
        chans = [c for c, o in enumerate(owners) if o == (kind, idx)]
        if chans and all(c in dup_channels for c in chans):
            flagged.append((kind, idx))
    return flagged


# ------------------------------------------------------------ built-in terms

def output_position(n_y: int, y_delays: Sequence[int], channel: int, delay: int) -> int:
    try:
        slot = list(y_delays).index(delay)
    except ValueError:
        raise ModelError(f"delay {delay} not among the model's output delays {tuple(y_delays)}") from None
    if not 0 <= channel < n_y:
        raise ModelError(f"output channel {channel} out of range")
    return slot * n_y + channel


def output_term(kind: str, pos: int, power: int = 1, name: str = "") -> BasisFunction:
    """Scalar function of one entry of ``x_y``: monomial, sin, cos or sqrt."""
    funcs = {
        "monomial": lambda x, t: x[pos] ** power,
        "sin": lambda x, t: np.sin(x[pos]),
        "cos": lambda x, t: np.cos(x[pos]),
        "sqrt": lambda x, t: np.sqrt(x[pos]),
    }
    if kind not in funcs:
        raise ModelError(f"unknown basis kind {kind!r}")
    return BasisFunction(funcs[kind], 1, name or f"{kind}[{pos}]")


def constant_term(value: float = 1.0) -> BasisFunction:
    return BasisFunction(lambda x, t: value, 1, f"const({value})")


def exogenous_term(signal: ExogenousSignal, delay: int = 0, pos: int | None = None,
                   name: str = "") -> BasisFunction:
    """``p(t - delay)`` (vector of size ``n_p``), times ``x_y[pos]`` when ``pos`` is given."""
    if pos is None:
        return BasisFunction(lambda x, t: signal(t - delay), signal.dim,
                             name or f"{signal.name}(t-{delay})")
    return BasisFunction(lambda x, t: signal(t - delay) * x[pos], signal.dim,
                         name or f"{signal.name}(t-{delay})*x[{pos}]")
