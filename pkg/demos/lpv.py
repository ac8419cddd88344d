# A linear parameter-varying system handled as an OGB system.
#
# With known scheduling p(t), the products p(t) u(t) and p(t) y(t) become
# additional inputs and the system is LTI in the enlarged signal. Matching
# uses the same code path as the nonlinear plants.
import numpy as np

from ogbmatch.hankel import min_data_length
from ogbmatch.lpv import LpvPlant, random_lpv, simulate_lpv, to_ogb, verify_row_permutation_equivalence
from ogbmatch.matcher import MatchProblem, solve
from ogbmatch.ogb import build_extended
from ogbmatch.plants import rrmse
from ogbmatch.signal import Trajectory

rng = np.random.default_rng(3)
L, T_ini = 8, 2
m = random_lpv(rng, n_u=2, n_y=2, n_p=2, n_a=1, n_b=1, T=400)
model = to_ogb(m)
print("additional inputs:", model.n_nl, " extended order:", m.extended_order())

T = min_data_length(model.dims, L, T_ini)[0] + 30
u = rng.uniform(-1, 1, (2, T))
y = simulate_lpv(m, u, rng.uniform(-1, 1, (2, m.lag))).values

rep = verify_row_permutation_equivalence(m, Trajectory(np.vstack([u, y])), L, T_ini)
print("OGB system equals direct LPV system up to row order:", rep.equivalent,
      f"(max deviation {rep.max_deviation:.1e})")

u_ref = rng.uniform(-1, 1, (2, T_ini + L))
y_ref = simulate_lpv(m, u_ref, rng.uniform(-1, 1, (2, m.lag)), t0=T).values
data = build_extended(model, Trajectory(u), Trajectory(y))
sol = solve(MatchProblem(data, model, u_ref[:, :T_ini], y_ref[:, :T_ini], y_ref[:, T_ini:], t0=T))
real = LpvPlant(m).realize(u_ref[:, :T_ini], y_ref[:, :T_ini], sol.u.values, t0=T)
print("matching:", sol.status, f"RRMSE {rrmse(real, y_ref[:, T_ini:]):.2e}",
      "free parameters", sol.parameter_count)
