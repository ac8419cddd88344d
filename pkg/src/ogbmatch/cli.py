"""Batch experiment runner: ``ogbmatch <command> --config cfg.json --out dir``.

Commands: ``simulate``, ``match``, ``sweep-length``, ``rank-check``,
``min-length``, ``structure``. Every command writes CSV/JSON into ``--out``
and is deterministic for a fixed config and seed.

Exit codes: 0 success, 2 matching infeasible, 3 config error, 4 numerical
failure (including plants leaving their physical domain).
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import lpv as lpv_mod
from .hankel import (SystemDims, check_gpe, empirical_min_length, min_data_length,
                     partition_extended)
from .matcher import MatchProblem, MatchSolution, export_solution, solve
from .numlin import NumericalError, RankPolicy
from .ogb import (INPUT_MAPS, BasisFunction, OgbModel, build_extended, constant_term,
                  output_position, output_term)
from .plants import (FourTank, FourTankParams, LtiPlant, Pendulum, PendulumParams, Plant,
                     PlantDomainError, StateSpace, rrmse)
from .signal import ExcitationSpec, Trajectory, generate_excitation, json_safe, stack, write_csv
from .structest import estimate_structure, min_structure_length

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclass
class SignalSpec:
    """Excitation plus initial condition, or explicit values."""

    length: int = 0
    low: float = 0.0
    high: float = 1.0
    leading_zeros: int = 0
    init: Any = None
    values: Any = None  # explicit {"u": [[...]], "y": [[...]]} for references


@dataclass
class ExperimentConfig:
    plant: str
    seed: int
    plant_params: dict = field(default_factory=dict)
    data: SignalSpec = field(default_factory=SignalSpec)
    reference: SignalSpec = field(default_factory=SignalSpec)
    L: int = 1
    T_ini: int = 1
    policy: RankPolicy = field(default_factory=RankPolicy)
    model: dict = field(default_factory=dict)
    inert_tail: int | str = 0
    lengths: list[int] = field(default_factory=list)
    structure: dict = field(default_factory=dict)
    dims: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


_PLANTS = ("pendulum", "four_tank", "lti", "lpv")


def _signal_spec(d: dict | None, where: str) -> SignalSpec:
    d = dict(d or {})
    unknown = set(d) - set(SignalSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return SignalSpec(**d)


def config_from_dict(d: dict, base_dir: Path | str = ".", seed: int | None = None) -> ExperimentConfig:
    d = dict(d)
    if d.get("plant") not in _PLANTS:
        raise ConfigError(f"plant must be one of {_PLANTS}, got {d.get('plant')!r}")
    if seed is None:
        if "seed" not in d:
            raise ConfigError("config needs an explicit integer seed")
        seed = d["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    pol = d.get("rank_policy", {})
    try:
        policy = RankPolicy(pol.get("mode", "relative"), pol.get("tolerance"))
    except ValueError as exc:
        raise ConfigError(f"rank_policy: {exc}") from None
    known = {"plant", "seed", "plant_params", "data", "reference", "L", "T_ini", "rank_policy",
             "model", "inert_tail", "lengths", "structure", "dims", "description"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    cfg = ExperimentConfig(
        plant=d["plant"], seed=seed, plant_params=d.get("plant_params", {}),
        data=_signal_spec(d.get("data"), "data"), reference=_signal_spec(d.get("reference"), "reference"),
        L=int(d.get("L", 1)), T_ini=int(d.get("T_ini", 1)), policy=policy,
        model=d.get("model", {}), inert_tail=d.get("inert_tail", 0),
        lengths=[int(x) for x in d.get("lengths", [])], structure=d.get("structure", {}),
        dims=d.get("dims", {}), base_dir=Path(base_dir))
    if cfg.L < 1 or cfg.T_ini < 0:
        raise ConfigError("need L >= 1 and T_ini >= 0")
    return cfg


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(d, path.parent, seed)


# ------------------------------------------------------------- experiment

def make_plant(cfg: ExperimentConfig) -> Plant:
    p = cfg.plant_params
    try:
        if cfg.plant == "pendulum":
            return Pendulum(PendulumParams(**p))
        if cfg.plant == "four_tank":
            q = dict(p)
            for k in ("a", "A"):
                if k in q:
                    q[k] = tuple(q[k])
            return FourTank(FourTankParams(**q))
        if cfg.plant == "lti":
            return LtiPlant(StateSpace(p["A"], p["B"], p["C"], p.get("D", 0.0)))
        path = cfg.base_dir / p["model_file"]
        if not path.is_file():
            raise ConfigError(f"LPV model file {path} does not exist")
        return lpv_mod.LpvPlant(lpv_mod.load_lpv_model(path))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"plant_params for {cfg.plant}: {exc}") from None


def _term(spec: dict, n_y: int, y_delays) -> BasisFunction:
    kind = spec.get("kind")
    if kind == "const":
        return constant_term(float(spec.get("value", 1.0)))
    pos = output_position(n_y, y_delays, int(spec.get("channel", 0)), int(spec.get("delay", 0)))
    return output_term(kind, pos, int(spec.get("power", 1)), spec.get("name", ""))


def model_from_dict(spec: dict) -> OgbModel:
    """OGB model from built-in basis terms (``sin``, ``cos``, ``sqrt``, ``monomial``, ``const``)."""
    try:
        n_u, n_y = int(spec["n_u"]), int(spec["n_y"])
        y_delays = tuple(spec.get("y_delays", ()))
        imap = spec.get("input_map", "identity")
        if imap not in INPUT_MAPS:
            raise ConfigError(f"unknown input map {imap!r}; known: {sorted(INPUT_MAPS)}")
        return OgbModel(n_u, n_y, y_delays=y_delays, u_delays=tuple(spec.get("u_delays", (0,))),
                        phi_b=tuple(_term(t, n_y, y_delays) for t in spec.get("phi_b", [])),
                        phi_b0=tuple(_term(t, n_y, y_delays) for t in spec.get("phi_b0", [])),
                        input_map=INPUT_MAPS[imap](), lag=int(spec.get("lag", 0)),
                        order=int(spec.get("order", 0)), name=spec.get("name", "ogb"))
    except KeyError as exc:
        raise ConfigError(f"model description lacks {exc}") from None


def make_model(cfg: ExperimentConfig, plant: Plant) -> OgbModel:
    if cfg.model.get("n_u") is not None:
        return model_from_dict(cfg.model)
    if isinstance(plant, Pendulum):
        return plant.ogb_model(advanced=cfg.model.get("advanced", True))
    if isinstance(plant, FourTank):
        return plant.ogb_model()
    if isinstance(plant, lpv_mod.LpvPlant):
        return lpv_mod.to_ogb(plant.model)
    if isinstance(plant, LtiPlant):
        n = plant.ss.n
        return OgbModel(plant.n_u, plant.n_y, lag=int(cfg.model.get("lag", n)), order=n, name="lti")
    raise ConfigError("no model description and no built-in model for this plant")


@dataclass
class Experiment:
    cfg: ExperimentConfig
    plant: Plant
    model: OgbModel
    u_data: Trajectory
    y_data: Trajectory
    u_ref: Trajectory
    y_ref: Trajectory
    ref_t0: int

    @property
    def hist(self) -> int:
        return max(self.model.lookback, self.plant.lag - self.cfg.T_ini, 0)

    def extended(self, T: int | None = None) -> Trajectory:
        T = self.u_data.T if T is None else T
        return build_extended(self.model, self.u_data.window(0, T), self.y_data.window(0, T))

    def problem(self, T: int | None = None) -> MatchProblem:
        k, Ti = self.hist, self.cfg.T_ini
        tail = self.cfg.inert_tail
        if tail == "auto":
            tail = self.plant.unl_output_delay
        lb = self.model.lookback
        return MatchProblem(
            self.extended(T), self.model,
            self.u_ref.window(k, k + Ti), self.y_ref.window(k, k + Ti),
            self.y_ref.window(k + Ti, k + Ti + self.cfg.L), self.cfg.policy,
            u_hist=self.u_ref.window(k - lb, k) if lb else None,
            y_hist=self.y_ref.window(k - lb, k) if lb else None,
            t0=self.ref_t0 + k, inert_tail=int(tail))

    def realized(self, u: Trajectory) -> np.ndarray:
        """Plant outputs over the horizon under ``u`` after the reference's own past."""
        k, Ti = self.hist, self.cfg.T_ini
        if self.cfg.reference.values is not None:
            return self.plant.realize(self.u_ref.values[:, :k + Ti], self.y_ref.values[:, :k + Ti],
                                      u.values, self.ref_t0)
        u_full = np.hstack([self.u_ref.values[:, :k + Ti], u.values])
        y = self.plant.simulate(u_full, self._ref_init(), self.ref_t0)
        return y[:, k + Ti:]

    def _ref_init(self):
        return _init(self.cfg.reference.init, self.plant)


def _init(init, plant: Plant):
    if init is None:
        n = plant.ss.n if isinstance(plant, LtiPlant) else plant.n_y * max(plant.lag, 1)
        return np.zeros(n)
    return np.asarray(init, dtype=float)


def _labels(prefix: str, n: int) -> tuple[str, ...]:
    return (prefix,) if n == 1 else tuple(f"{prefix}{i + 1}" for i in range(n))


def _excite(spec: SignalSpec, n_u: int, seed: int) -> Trajectory:
    try:
        return generate_excitation(ExcitationSpec(spec.length, spec.low, spec.high,
                                                  spec.leading_zeros, seed), n_u)
    except ValueError as exc:
        raise ConfigError(f"excitation: {exc}") from None


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    """Generate data and reference; the reference uses seed ``cfg.seed + 1``.

    The reference starts right after the data in absolute time so that
    time-varying plants read fresh scheduling values.
    """
    plant = make_plant(cfg)
    model = make_model(cfg, plant)
    if cfg.data.length < 1:
        raise ConfigError("data.length must be positive")
    u_d = _excite(cfg.data, plant.n_u, cfg.seed)
    u_d, y_d = plant.trajectory(u_d, _init(cfg.data.init, plant))
    ref_t0 = u_d.T
    ref = cfg.reference
    if ref.values is not None:
        u_r = Trajectory(np.asarray(ref.values["u"], dtype=float), _labels("u", plant.n_u))
        y_r = Trajectory(np.asarray(ref.values["y"], dtype=float), _labels("y", plant.n_y))
        if u_r.T != cfg.T_ini or y_r.T != cfg.T_ini + cfg.L:
            raise ConfigError("explicit reference needs T_ini inputs and T_ini + L outputs")
        u_r = Trajectory(np.hstack([u_r.values, np.zeros((plant.n_u, cfg.L))]), u_r.labels)
    else:
        exp = Experiment(cfg, plant, model, u_d, y_d, u_d, y_d, ref_t0)
        need = exp.hist + cfg.T_ini + cfg.L
        if ref.length and ref.length != need:
            raise ConfigError(f"reference.length must be {need} (history + T_ini + L)")
        u_r = _excite(SignalSpec(need, ref.low, ref.high, ref.leading_zeros), plant.n_u, cfg.seed + 1)
        u_r, y_r = plant.trajectory(u_r, _init(ref.init, plant), ref_t0)
    return Experiment(cfg, plant, model, u_d, y_d, u_r, y_r, ref_t0)


# ---------------------------------------------------------------- commands

@dataclass
class MatchOutcome:
    T: int
    solution: MatchSolution
    rrmse: float | None

    def to_dict(self) -> dict:
        d = self.solution.diagnostics.to_dict()
        d.update({"T": self.T, "status": self.solution.status, "rrmse_realized": self.rrmse})
        return d


def run_match(exp: Experiment, T: int | None = None) -> MatchOutcome:
    """Solve and roll the plant out; infeasible problems roll out their least-squares input."""
    T = exp.u_data.T if T is None else T
    sol = solve(exp.problem(T))
    target = exp.y_ref.values[:, exp.hist + exp.cfg.T_ini:]
    try:
        err = rrmse(exp.realized(sol.u), target)
    except PlantDomainError:
        err = None
    return MatchOutcome(T, sol, err)


def run_sweep(exp: Experiment, lengths, workers: int = 4) -> list[MatchOutcome]:
    """One matching per data length; rows come back sorted by length."""
    lengths = sorted(set(int(T) for T in lengths))
    too_long = [T for T in lengths if T > exp.u_data.T]
    if too_long:
        raise ConfigError(f"lengths {too_long} exceed the generated data length {exp.u_data.T}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        out = list(pool.map(lambda T: run_match(exp, T), lengths))
    return sorted(out, key=lambda o: o.T)


def empirical_min(exp: Experiment) -> int | None:
    cfg = exp.cfg
    return empirical_min_length(exp.extended(), exp.model.dims, cfg.L, cfg.T_ini, cfg.policy)


def _write_json(obj, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(json_safe(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    exp = build_experiment(cfg)
    write_csv(stack(exp.u_data, exp.y_data), out / "data.csv")
    write_csv(exp.extended(), out / "extended.csv")
    write_csv(stack(exp.u_ref, exp.y_ref), out / "reference.csv")
    _write_json({"plant": cfg.plant, "seed": cfg.seed, "data_length": exp.u_data.T,
                 "reference_length": exp.u_ref.T, "extended_channels": list(exp.extended().labels)},
                out / "simulate.json")
    return EXIT_OK


def cmd_match(cfg: ExperimentConfig, out: Path) -> int:
    exp = build_experiment(cfg)
    res = run_match(exp)
    export_solution(res.solution, out / "solution.csv")
    _write_json(res.to_dict(), out / "match.json")
    return EXIT_OK if res.solution.feasible else EXIT_INFEASIBLE


def cmd_sweep(cfg: ExperimentConfig, out: Path, lengths=None) -> int:
    exp = build_experiment(cfg)
    lengths = lengths or cfg.lengths
    if not lengths:
        raise ConfigError("sweep needs lengths (config 'lengths' or --lengths)")
    rows = run_sweep(exp, lengths)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("T,rrmse,status,rank,required,verdict,parameter_count\n")
        for r in rows:
            g = r.solution.diagnostics.gpe_report
            e = "" if r.rrmse is None else repr(r.rrmse)
            fh.write(f"{r.T},{e},{r.solution.status},{g.rank},{g.required},{g.verdict},"
                     f"{r.solution.parameter_count}\n")
    T_ogb, T_lti, extra = min_data_length(exp.model.dims, cfg.L, cfg.T_ini)
    _write_json({"formula_min_length": T_ogb, "empirical_min_length": empirical_min(exp),
                 "lti_min_length": T_lti, "lengths": [r.T for r in rows]}, out / "sweep.json")
    return EXIT_OK


def cmd_rank_check(cfg: ExperimentConfig, out: Path) -> int:
    exp = build_experiment(cfg)
    ph = partition_extended(exp.extended(), exp.model.dims, cfg.L, cfg.T_ini)
    rep = check_gpe(ph, exp.model.dims, cfg.policy).to_dict()
    rep["data_length"] = exp.u_data.T
    rep["empirical_min_length"] = empirical_min(exp)
    _write_json(rep, out / "rank.json")
    return EXIT_OK


def _dims(cfg: ExperimentConfig) -> SystemDims:
    if cfg.dims:
        try:
            return SystemDims(**cfg.dims)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"dims: {exc}") from None
    return make_model(cfg, make_plant(cfg)).dims


def cmd_min_length(cfg: ExperimentConfig, out: Path) -> int:
    dims = _dims(cfg)
    T_ogb, T_lti, extra = min_data_length(dims, cfg.L, cfg.T_ini)
    _write_json({"ogb": T_ogb, "lti": T_lti, "difference": extra,
                 "structure_estimation": min_structure_length(dims),
                 "dims": dims.__dict__, "L": cfg.L, "T_ini": cfg.T_ini}, out / "min_length.json")
    return EXIT_OK


def cmd_structure(cfg: ExperimentConfig, out: Path) -> int:
    """Structure estimation on a fresh record of ``structure.length`` samples (default: minimal)."""
    plant = make_plant(cfg)
    model = make_model(cfg, plant)
    s = cfg.structure
    length = int(s.get("length", min_structure_length(model.dims) + model.lookback))
    spec = SignalSpec(length, s.get("low", cfg.data.low), s.get("high", cfg.data.high),
                      int(s.get("leading_zeros", 0)), s.get("init", cfg.data.init))
    u = _excite(spec, plant.n_u, cfg.seed)
    u, y = plant.trajectory(u, _init(spec.init, plant))
    w = build_extended(model, u, y)
    rep = estimate_structure(w, model.dims, cfg.policy, model,
                             threshold=float(s.get("threshold", 1e-6)))
    rep.write_json(out / "structure.json")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "match": cmd_match,
    "sweep-length": cmd_sweep,
    "rank-check": cmd_rank_check,
    "min-length": cmd_min_length,
    "structure": cmd_structure,
}


def _parse_lengths(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--lengths expects comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ogbmatch", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="experiment config (JSON)")
    ap.add_argument("--out", default=".", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--lengths", type=_parse_lengths, default=None,
                    help="comma-separated data lengths for sweep-length")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "sweep-length":
            code = cmd_sweep(cfg, out, args.lengths)
        else:
            code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, PlantDomainError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_INFEASIBLE:
        print("infeasible: no input reproduces the reference", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
