# Which terms appear in the four-tank equations? Read them off 17 samples.
import numpy as np

from ogbmatch.ogb import OgbModel, build_extended, output_term
from ogbmatch.plants import FourTank
from ogbmatch.signal import ExcitationSpec, generate_excitation
from ogbmatch.structest import estimate_structure, min_structure_length, term_name

ft = FourTank()
base = ft.ogb_model()
# one candidate too many: y1^2 does not occur in the plant
model = OgbModel(2, 4, y_delays=(0,), phi_b0=base.phi_b0 + (output_term("monomial", 0, 2, "y1^2"),),
                 lag=1, order=4)
T = min_structure_length(model.dims)
u = generate_excitation(ExcitationSpec(T, 0, 0.05, 0, seed=1), 2)
ut, yt = ft.trajectory(u, np.zeros(4))
rep = estimate_structure(build_extended(model, ut, yt), model.dims, model=model)

print("samples used:", T)
for i, terms in rep.active_by_output.items():
    names = sorted(term_name(lab, d) for lab, d in terms)
    same = "matches plant" if terms == ft.active_terms()[i] else "DIFFERS from plant"
    print(f"y{i + 1}: {', '.join(names)}   [{same}]")
print("unused additional inputs:", rep.inactive_channels)
print("pruned basis:", [f.name for f in rep.pruned_model.phi_b0])
