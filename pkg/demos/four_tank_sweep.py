# How much data does output matching need? Four-tank sweep.
#
# The rank condition gives a minimal length T*. Exact matching survives a
# few samples below it (the last additional inputs never reach the horizon)
# and then breaks down.
import json
import time
from pathlib import Path

from ogbmatch.cli import build_experiment, config_from_dict, empirical_min, run_sweep
from ogbmatch.hankel import min_data_length

cfg_path = Path(__file__).resolve().parents[1] / "configs" / "four_tank.json"
cfg = config_from_dict(json.loads(cfg_path.read_text()), cfg_path.parent)
exp = build_experiment(cfg)

T_formula, T_lti, extra = min_data_length(exp.model.dims, cfg.L, cfg.T_ini)
T_star = empirical_min(exp)
print(f"minimal length: formula {T_formula}, rank check {T_star}, LTI part alone {T_lti}")

lengths = [T_star + 2, T_star, T_star - 2, T_star - 4, T_star - 6, T_star - 8, T_star - 12]
t0 = time.perf_counter()
rows = run_sweep(exp, lengths)
print(f"{len(rows)} matchings in {time.perf_counter() - t0:.1f} s\n")

print(f"{'T':>6} {'T-T*':>5} {'rank':>9} {'status':>11} {'RRMSE':>10}")
for r in rows:
    g = r.solution.diagnostics.gpe_report
    e = "n/a" if r.rrmse is None else f"{r.rrmse:.2e}"
    print(f"{r.T:>6} {r.T - T_star:>5} {g.rank:>4}/{g.required:<4} {r.solution.status:>11} {e:>10}")
