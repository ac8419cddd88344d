"""Which terms enter the output equations, read off the left null space.

Rows annihilating ``H_{l+1}(w_ext)`` are difference equations of the
extended system. Normalized so that each row has a unit coefficient on one
current output and zero on the others, a row lists the (channel, delay)
pairs that drive that output; additional inputs that never appear can be
removed from the model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hankel import InsufficientDataError, SystemDims, hankel_matrix
from .numlin import DEFAULT_POLICY, RankPolicy, left_null_space
from .ogb import OgbModel
from .signal import Trajectory, json_safe


def term_name(label: str, delay: int) -> str:
    return f"{label}(t)" if delay == 0 else f"{label}(t-{delay})"


def min_structure_length(dims: SystemDims) -> int:
    """Shortest extended trajectory whose depth-``l+1`` Hankel matrix can reach full rank."""
    return (dims.n_u + dims.n_nl) * (dims.lag + 1) + dims.order + dims.lag


@dataclass(frozen=True, eq=False)
class StructureReport:
    """``equations[i]`` holds the normalized annihilator row of output ``i``
    as a ``(lag + 1, q)`` array indexed by delay (0 = current) and channel.
    """

    annihilator: np.ndarray
    equations: np.ndarray
    labels: tuple[str, ...]
    active_terms: set[tuple[str, int]]
    active_by_output: dict[int, set[tuple[str, int]]]
    inactive_channels: tuple[str, ...]
    pruned_model: OgbModel | None
    data_length_used: int
    residual: float
    threshold: float = 1e-6
    extra_relations: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        lag = self.equations.shape[1] - 1 if self.equations.size else 0
        return {
            "data_length_used": self.data_length_used,
            "annihilator_residual": self.residual,
            "threshold": self.threshold,
            "extra_relations": self.extra_relations,
            "equations": {
                f"output{i + 1}": {
                    term_name(lab, d): float(self.equations[i, d, c])
                    for d in range(lag + 1) for c, lab in enumerate(self.labels)
                }
                for i in range(self.equations.shape[0])
            },
            "active_terms": {
                f"output{i + 1}": sorted(term_name(lab, d) for lab, d in terms)
                for i, terms in self.active_by_output.items()
            },
            "inactive_channels": list(self.inactive_channels),
            "pruned_basis": ([f.name for f in self.pruned_model.phi_b0]
                             if self.pruned_model is not None else None),
            "notes": self.notes,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(json_safe(self.to_dict()), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")


def _normalize(N: np.ndarray, cur_y: np.ndarray, n_y: int) -> tuple[np.ndarray, int]:
    """Rows with identity on the current-output columns, plus the count of leftover relations."""
    C = N[:, cur_y]
    s = np.linalg.svd(C, compute_uv=False)
    tol = max(C.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    r = int(np.sum(s > tol))
    if r < n_y:
        raise ValueError(f"annihilator fixes only {r} of {n_y} current outputs; "
                         "lag or order too small, or data not informative")
    # Combinations of annihilator rows that single out one current output each.
    E = np.linalg.pinv(C) @ N
    return E, N.shape[0] - r


def estimate_structure(w_ext: Trajectory, dims: SystemDims,
                       policy: RankPolicy = DEFAULT_POLICY, model: OgbModel | None = None,
                       threshold: float = 1e-6, weigh_by_signal: bool = True) -> StructureReport:
    """Annihilator-based term detection on an extended trajectory ``(u_h, y, u_nl)``.

    A term is active when its weight exceeds ``threshold`` times the largest
    weight in its row. With ``weigh_by_signal`` the weight is the coefficient
    times the RMS of its channel, i.e. the size of the term's contribution,
    which makes the verdict independent of channel units.
    When ``model`` is given, ``phi_b0`` functions all of whose channels are
    inactive in every equation are removed in ``pruned_model``.
    """
    need = min_structure_length(dims)
    if w_ext.T < need:
        raise InsufficientDataError("structure estimation", need, w_ext.T)
    q = w_ext.q
    if q != dims.n_u + dims.n_y + dims.n_nl:
        raise ValueError(f"trajectory has {q} channels, dims imply {dims.n_u + dims.n_y + dims.n_nl}")
    l = dims.lag
    H = hankel_matrix(w_ext.values, l + 1)
    N = left_null_space(H, policy)
    scale = float(np.max(np.abs(H))) or 1.0
    if N.shape[0] == 0:
        raise ValueError("Hankel matrix has full row rank: no difference equation found")
    cur_y = np.arange(dims.n_u, dims.n_u + dims.n_y) + l * q
    E, extra = _normalize(N, cur_y, dims.n_y)
    # Flip block order so that index 0 is the current sample.
    eq = E.reshape(dims.n_y, l + 1, q)[:, ::-1, :]
    residual = float(np.max(np.abs(N @ H))) / scale
    rms = np.sqrt(np.mean(w_ext.values ** 2, axis=1))
    weights = np.abs(eq) * (rms[None, None, :] if weigh_by_signal else 1.0)
    labels = w_ext.labels
    by_out: dict[int, set[tuple[str, int]]] = {}
    for i in range(dims.n_y):
        top = float(np.max(weights[i]))
        idx = np.argwhere(weights[i] > threshold * top)
        by_out[i] = {(labels[c], int(d)) for d, c in idx}
    active = set().union(*by_out.values())
    active_ch = {lab for lab, _ in active}
    nl_labels = labels[dims.n_u + dims.n_y:]
    inactive = tuple(lab for lab in nl_labels if lab not in active_ch)
    notes = []
    if extra:
        notes.append(f"{extra} further relations without current outputs; lag may be overestimated")
    pruned = None
    if model is not None:
        owners = model.channel_owners()
        dead = {o for o in set(owners)
                if all(nl_labels[c] in inactive for c, oc in enumerate(owners) if oc == o)}
        drop_b = sorted(idx for kind, idx in dead if kind == "b")
        drop_b0 = sorted(idx for kind, idx in dead if kind == "b0")
        pruned = model.without(drop_b, drop_b0)
    return StructureReport(N, eq, labels, active, by_out, inactive, pruned, w_ext.T,
                           residual, threshold, extra, notes)
