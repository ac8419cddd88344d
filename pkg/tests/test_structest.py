import json

import numpy as np
import pytest

from ogbmatch.hankel import InsufficientDataError, SystemDims
from ogbmatch.ogb import OgbModel, build_extended, output_term
from ogbmatch.plants import FourTank, LtiPlant, StateSpace
from ogbmatch.signal import ExcitationSpec, Trajectory, generate_excitation
from ogbmatch.structest import estimate_structure, min_structure_length, term_name


def four_tank_extended(model, T, seed):
    ft = FourTank()
    u = generate_excitation(ExcitationSpec(T, 0, 0.05, 0, seed=seed), 2)
    ut, yt = ft.trajectory(u, np.zeros(4))
    return build_extended(model, ut, yt)


def test_min_structure_length():
    ft = FourTank()
    assert min_structure_length(ft.ogb_model().dims) == 17
    assert min_structure_length(SystemDims(1, 1, 0, 1, 1)) == 1 * 2 + 1 + 1


def test_term_names():
    assert term_name("y1", 0) == "y1(t)" and term_name("unl2", 1) == "unl2(t-1)"


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_four_tank_terms(seed):
    ft = FourTank()
    m = ft.ogb_model()
    rep = estimate_structure(four_tank_extended(m, 17, seed), m.dims, model=m)
    assert rep.data_length_used == 17
    assert rep.active_by_output == ft.active_terms()
    assert rep.inactive_channels == ()
    # Normalized rows carry a unit coefficient on their own current output.
    assert np.allclose(rep.equations[:, 0, 2:6], np.eye(4), atol=1e-9)


def test_spurious_basis_is_pruned(tmp_path):
    ft = FourTank()
    base = ft.ogb_model()
    m = OgbModel(2, 4, y_delays=(0,), phi_b0=base.phi_b0 + (output_term("monomial", 0, 2, "y1^2"),),
                 lag=1, order=4)
    rep = estimate_structure(four_tank_extended(m, min_structure_length(m.dims), 4), m.dims, model=m)
    assert rep.inactive_channels == ("unl5",)
    assert [f.name for f in rep.pruned_model.phi_b0] == [f.name for f in base.phi_b0]
    rep.write_json(tmp_path / "s.json")
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["inactive_channels"] == ["unl5"]
    assert "unl1(t-1)" in d["active_terms"]["output1"]


def test_lti_first_order_terms():
    # y(t) = 0.5 y(t-1) + u(t-1): no feedthrough, so u(t) is inactive.
    plant = LtiPlant(StateSpace([[0.5]], [[1.0]], [[1.0]], [[0.0]]))
    u = np.random.default_rng(0).uniform(-1, 1, (1, 6))
    y = plant.simulate(u, [0.2])
    w = Trajectory(np.vstack([u, y]), ("u", "y"))
    rep = estimate_structure(w, SystemDims(1, 1, 0, 1, 1))
    assert rep.active_terms == {("u", 1), ("y", 0), ("y", 1)}
    assert rep.equations[0, 1, 1] == pytest.approx(-0.5, abs=1e-10)
    assert rep.equations[0, 1, 0] == pytest.approx(-1.0, abs=1e-10)


def test_too_short_raises():
    m = FourTank().ogb_model()
    with pytest.raises(InsufficientDataError):
        estimate_structure(four_tank_extended(m, 16, 0), m.dims)
