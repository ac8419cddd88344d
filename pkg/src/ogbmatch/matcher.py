"""Data-driven output matching for OGB systems.

Given data of the extended behavior, an initial trajectory ``w_ini`` and a
reference output ``y_r``, find transformed inputs ``u_h`` with

    [U_hp; Y_p; Y_f; U_nl - Phi_bf U_hf] g = [u_h,ini; y_ini; y_r; Phi_bp u_h,ini + phi_b0]

and map ``U_hf g`` back through the inverse input map. Because ``x_y`` only
depends on outputs, and all outputs over the horizon are prescribed, every
``Phi`` matrix is known before solving.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .hankel import GpeReport, PartitionedHankel, check_gpe, partition_extended
from .numlin import (DEFAULT_POLICY, AffineSolutionSet, RankPolicy,
                     parameterize_image, solve_affine)
from .ogb import OgbModel, probe_phi_matrix, split_phi_matrix
from .signal import Trajectory, as_trajectory, json_safe, stack, write_csv


class InfeasibleError(RuntimeError):
    """No input reproduces the reference from the given initial trajectory."""

    def __init__(self, residual: float):
        super().__init__(f"output matching infeasible (residual {residual:.3e})")
        self.residual = residual


def _vec(a: np.ndarray) -> np.ndarray:
    """Stack columns (time steps) of a ``(q, T)`` array."""
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def _unvec(v: np.ndarray, q: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(q, -1, order="F")


@dataclass(frozen=True, eq=False)
class MatchProblem:
    """One output-matching instance.

    ``data`` is the extended data trajectory ``(u_h, y, u_nl)``.
    ``u_ini``/``y_ini`` span ``T_ini`` steps and ``y_r`` spans ``L`` steps.
    When the model reads samples before ``t`` (``model.lookback > 0``),
    ``u_hist``/``y_hist`` hold at least that many raw samples preceding the
    initial trajectory. ``t0`` is the absolute time of the first initial sample.
    ``inert_tail`` drops the additional-input rows of the last that many
    horizon steps. This is sound only when additional inputs reach the
    outputs with at least that delay, so their final values are irrelevant
    to the reference (a plant's ``unl_output_delay``).
    """

    data: Trajectory
    model: OgbModel
    u_ini: Trajectory
    y_ini: Trajectory
    y_r: Trajectory
    policy: RankPolicy = DEFAULT_POLICY
    u_hist: Trajectory | None = None
    y_hist: Trajectory | None = None
    t0: int = 0
    inert_tail: int = 0
    tol_abs: float = 1e-8
    tol_rel: float = 1e-10

    def __post_init__(self):
        m = self.model
        for name in ("u_ini", "y_ini", "y_r", "u_hist", "y_hist"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, as_trajectory(v))
        if self.u_ini.T != self.y_ini.T:
            raise ValueError(f"u_ini has {self.u_ini.T} steps, y_ini has {self.y_ini.T}")
        if self.u_ini.q != m.n_u or self.y_ini.q != m.n_y or self.y_r.q != m.n_y:
            raise ValueError("initial trajectory or reference channel counts do not match the model")
        if self.y_r.T < 1:
            raise ValueError("reference output must have at least one step")
        if self.data.q != m.n_u + m.n_y + m.n_nl:
            raise ValueError(f"data has {self.data.q} channels, model implies {m.n_u + m.n_y + m.n_nl}")
        lb = m.lookback
        if lb:
            if self.u_hist is None or self.y_hist is None:
                raise ValueError(f"model reads {lb} samples back: u_hist and y_hist are required")
            if self.u_hist.T < lb or self.y_hist.T < lb:
                raise ValueError(f"history must cover {lb} samples")
        if not 0 <= self.inert_tail <= self.y_r.T:
            raise ValueError("inert_tail must lie in [0, L]")

    @property
    def T_ini(self) -> int:
        return self.u_ini.T

    @property
    def L(self) -> int:
        return self.y_r.T


@dataclass(frozen=True)
class MatchDiagnostics:
    gpe_report: GpeReport
    solve_residual: float
    parameter_count: int
    reconstruction_rrmse_predicted: float
    feasible: bool
    matrix_rank: int

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "solve_residual": self.solve_residual,
            "parameter_count": self.parameter_count,
            "reconstruction_rrmse_predicted": self.reconstruction_rrmse_predicted,
            "matrix_rank": self.matrix_rank,
            "gpe": self.gpe_report.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class MatchSolution:
    """Result of :func:`solve`.

    ``u`` holds the raw inputs of the particular solution ``U_hf A^+ b``.
    For an infeasible problem it is the least-squares point and ``feasible``
    is False.
    """

    u: Trajectory
    u_h_set: AffineSolutionSet
    diagnostics: MatchDiagnostics
    u_ini_raw: np.ndarray = field(repr=False)
    y_pred: np.ndarray = field(repr=False, default=None)

    @property
    def feasible(self) -> bool:
        return self.diagnostics.feasible

    @property
    def status(self) -> str:
        return "feasible" if self.feasible else "infeasible"

    @property
    def parameter_count(self) -> int:
        return self.diagnostics.parameter_count

    @property
    def u_h(self) -> np.ndarray:
        return _unvec(self.u_h_set.offset, self.u.q)

    def require_feasible(self) -> MatchSolution:
        if not self.feasible:
            raise InfeasibleError(self.diagnostics.solve_residual)
        return self


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    A: np.ndarray
    b: np.ndarray
    ph: PartitionedHankel
    phi_b0: np.ndarray
    Phi_bp: np.ndarray
    Phi_bf: np.ndarray
    u_h_ini: np.ndarray


def _initial_inputs(prob: MatchProblem) -> tuple[np.ndarray, np.ndarray | None]:
    """Transformed initial inputs and the transformed inputs preceding them."""
    m = prob.model
    raw = prob.u_ini.values
    if prob.u_hist is not None and m.lookback:
        raw = np.hstack([prob.u_hist.values[:, -m.lookback:], raw])
    c = m.input_map.lookback
    if raw.shape[1] - prob.T_ini < c:
        raise ValueError(f"input map needs {c} raw inputs before the initial trajectory")
    u_h = m.input_map.forward_sequence(raw)
    before = u_h[:, :u_h.shape[1] - prob.T_ini]
    return u_h[:, -prob.T_ini:] if prob.T_ini else np.zeros((m.n_u, 0)), before


def assemble(prob: MatchProblem) -> AssembledSystem:
    m = prob.model
    dims = m.dims
    T_ini, L = prob.T_ini, prob.L
    ph = partition_extended(prob.data, dims, L, T_ini)
    u_h_ini, u_h_before = _initial_inputs(prob)
    y_parts = [prob.y_ini.values, prob.y_r.values]
    if m.y_lookback:
        y_parts.insert(0, prob.y_hist.values[:, -m.y_lookback:])
    y_window = Trajectory(np.hstack(y_parts))
    phi0, Phi = probe_phi_matrix(m, y_window, T_ini + L, prob.t0,
                                 u_h_before if m.uh_lookback else None)
    Phi_bp, Phi_bf = split_phi_matrix(Phi, dims, T_ini, L)
    nl_block = ph.U_nl - Phi_bf @ ph.U_hf
    nl_rhs = Phi_bp @ _vec(u_h_ini) + phi0
    if prob.inert_tail:
        keep = m.n_nl * (T_ini + L - prob.inert_tail)
        nl_block, nl_rhs = nl_block[:keep], nl_rhs[:keep]
    A = np.vstack([ph.U_hp, ph.Y_p, ph.Y_f, nl_block])
    b = np.concatenate([_vec(u_h_ini), _vec(prob.y_ini.values), _vec(prob.y_r.values), nl_rhs])
    return AssembledSystem(A, b, ph, phi0, Phi_bp, Phi_bf, u_h_ini)


def _raw_past(prob: MatchProblem) -> np.ndarray:
    c = prob.model.input_map.lookback
    raw = prob.u_ini.values
    if prob.u_hist is not None:
        raw = np.hstack([prob.u_hist.values, raw])
    return raw[:, raw.shape[1] - c:]


def solve(prob: MatchProblem) -> MatchSolution:
    """Solve the matching problem; infeasibility is reported, not raised."""
    sys_ = assemble(prob)
    ph = sys_.ph
    gpe = check_gpe(ph, prob.model.dims, prob.policy)
    g_set = solve_affine(sys_.A, sys_.b, prob.policy, prob.tol_abs, prob.tol_rel)
    u_h_set = parameterize_image(ph.U_hf, g_set, prob.policy)
    y_pred = ph.Y_f @ g_set.offset
    ref = np.linalg.norm(prob.y_r.values)
    pred_err = float(np.linalg.norm(y_pred - _vec(prob.y_r.values)) / ref) if ref else float("nan")
    n_u = prob.model.n_u
    past = _raw_past(prob)
    u = prob.model.input_map.inverse_sequence(_unvec(u_h_set.offset, n_u), past)
    diag = MatchDiagnostics(gpe, g_set.residual, u_h_set.dimension, pred_err,
                            g_set.feasible, int(g_set.rank))
    labels = prob.u_ini.labels
    return MatchSolution(Trajectory(u, labels), u_h_set, diag, past,
                         _unvec(y_pred, prob.model.n_y))


def _to_raw(sol: MatchSolution, model: OgbModel, u_h_vec: np.ndarray) -> Trajectory:
    u = model.input_map.inverse_sequence(_unvec(u_h_vec, model.n_u), sol.u_ini_raw)
    return Trajectory(u, sol.u.labels)


def sample_solutions(sol: MatchSolution, model: OgbModel, count: int,
                     seed: int = 0, scale: float | None = None) -> list[Trajectory]:
    """Random members of the solution set, ``h^-1(offset + basis z)``.

    ``z`` is standard normal times ``scale``, which defaults to the RMS size
    of the offset so samples differ visibly from the particular solution.
    """
    sol.require_feasible()
    s = sol.u_h_set
    if s.dimension == 0:
        return [sol.u for _ in range(count)]
    rng = np.random.default_rng(seed)
    if scale is None:
        scale = float(np.linalg.norm(s.offset) / np.sqrt(max(s.offset.size, 1))) or 1.0
    return [_to_raw(sol, model, s.point(scale * rng.standard_normal(s.dimension)))
            for _ in range(count)]


def select_min_energy(sol: MatchSolution, model: OgbModel) -> Trajectory:
    """Member of the solution set with the smallest ``||u_h||_2``."""
    sol.require_feasible()
    s = sol.u_h_set
    if s.dimension == 0:
        return sol.u
    z, *_ = np.linalg.lstsq(s.basis, -s.offset, rcond=None)
    return _to_raw(sol, model, s.point(z))


# ------------------------------------------------------------------- export

def export_solution(sol: MatchSolution, csv_path, json_path=None) -> None:
    """CSV of ``u``, ``u_h`` and the predicted output per step; JSON diagnostics."""
    u_h = Trajectory(sol.u_h, tuple(f"h({lab})" for lab in sol.u.labels))
    n_y = sol.y_pred.shape[0]
    y_labels = ("y_pred",) if n_y == 1 else tuple(f"y{i + 1}_pred" for i in range(n_y))
    write_csv(stack(sol.u, u_h, Trajectory(sol.y_pred, y_labels)), csv_path)
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(json_safe(sol.diagnostics.to_dict()), fh, indent=2, sort_keys=True,
                      allow_nan=False)
            fh.write("\n")
