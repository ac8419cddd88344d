import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ogbmatch.hankel import SystemDims
from ogbmatch.ogb import (INPUT_MAPS, BasisFunction, DomainError, ExogenousSignal, InputMap,
                          ModelError, OgbModel, build_extended, build_unl, constant_term,
                          eval_phi_nl, exogenous_term, find_shift_duplicates, output_position,
                          output_term, probe_phi_matrix, redundant_basis, split_phi_matrix,
                          transformed_inputs)
from ogbmatch.plants import Pendulum
from ogbmatch.signal import Trajectory


def worked_model():
    pos2 = output_position(1, (2, 1), 0, 2)
    pos1 = output_position(1, (2, 1), 0, 1)
    return OgbModel.standard(2, 1, 2,
                             phi_b=(output_term("monomial", pos2, 2, "y(t-2)^2"),),
                             phi_b0=(output_term("sin", pos1, name="sin(y(t-1))"),))


def test_eval_phi_nl_worked_example():
    m = worked_model()
    assert (m.n_kron, m.pad, m.n_nl) == (6, 1, 7)
    out = eval_phi_nl(m, [2.0, np.pi / 2], np.ones(6))
    assert np.allclose(out, [4, 4, 4, 4, 4, 4, 1], atol=0, rtol=1e-15)


def test_eval_phi_nl_kron_order():
    m = OgbModel(2, 1, y_delays=(0,), u_delays=(0,),
                 phi_b=(BasisFunction(lambda x, t: [1.0, 10.0], 2),))
    assert np.array_equal(eval_phi_nl(m, [0.0], [2.0, 3.0]), [2, 3, 20, 30])


def test_eval_phi_nl_size_checks():
    m = worked_model()
    with pytest.raises(ModelError):
        eval_phi_nl(m, [1.0], np.ones(6))
    with pytest.raises(ModelError):
        eval_phi_nl(m, [1.0, 1.0], np.ones(5))
    bad = OgbModel(1, 1, y_delays=(0,), phi_b0=(BasisFunction(lambda x, t: [1, 2], 1),))
    with pytest.raises(ModelError):
        eval_phi_nl(bad, [0.0], [0.0])


def test_model_validation():
    with pytest.raises(ModelError):
        OgbModel(1, 1, y_delays=(-1,))
    with pytest.raises(ModelError):
        OgbModel(1, 1, y_delays=(0,), phi_b0=(constant_term(), constant_term()), pad=3)
    with pytest.raises(ModelError):
        output_position(1, (2, 1), 0, 3)
    with pytest.raises(ModelError):
        output_term("tanh", 0)


def test_bijection_example():
    h = INPUT_MAPS["square_cube"]()
    assert np.array_equal(h.forward(np.array([1.0, 2.0]), None), [5, 8])
    assert np.allclose(h.inverse(np.array([5.0, 8.0]), None), [1, 2], atol=1e-14)


@settings(max_examples=80, derandomize=True)
@given(st.sampled_from(sorted(INPUT_MAPS)), st.integers(0, 2**31))
def test_input_map_round_trip(name, seed):
    h = INPUT_MAPS[name]()
    u = np.random.default_rng(seed).uniform(-3, 3, (2, 12))
    c = h.lookback
    uh = h.forward_sequence(u)
    back = h.inverse_sequence(uh, u[:, :c] if c else None)
    assert np.max(np.abs(back - u[:, c:])) < 1e-10


def test_input_map_domain():
    h = InputMap(lambda u, p: np.sqrt(u), lambda v, p: v ** 2, name="sqrt", domain=lambda u: bool(np.all(u >= 0)))
    with pytest.raises(DomainError):
        h.forward_sequence(np.array([[1.0, -1.0]]))
    with pytest.raises(ModelError):
        INPUT_MAPS["incremental"]().inverse_sequence(np.ones((1, 3)))


def test_exogenous_signal_lookup():
    p = ExogenousSignal([[1.0, 2.0, 3.0]], origin=5)
    assert p(6)[0] == 2.0
    with pytest.raises(KeyError):
        p(4)
    assert p.with_value(7, 9.0)(7)[0] == 9.0 and p(7)[0] == 3.0
    f = exogenous_term(p, delay=1)
    assert f(np.zeros(0), 7)[0] == 2.0


def _data(m, T=30, seed=0):
    g = np.random.default_rng(seed)
    u = Trajectory(g.uniform(-1, 1, (m.n_u, T)))
    y = Trajectory(g.uniform(0.5, 2, (m.n_y, T)))
    return u, y


def test_build_extended_layout_and_lookback():
    m = worked_model()
    u, y = _data(m)
    w = build_extended(m, u, y, t0=0)
    assert w.T == 30 - m.lookback
    assert w.groups == {"u_h": (0, 1), "y": (2,), "u_nl": tuple(range(3, 10))}
    k = 5  # absolute step lookback + k
    t = m.lookback + k
    expect = eval_phi_nl(m, [y.values[0, t - 2], y.values[0, t - 1]],
                         np.concatenate([u.values[:, t - 2], u.values[:, t - 1], u.values[:, t]]))
    assert np.allclose(w.values[3:, k], expect)
    with pytest.raises(ModelError):
        build_unl(m, Trajectory(np.ones((2, 2))), Trajectory(np.ones((1, 2))))


@pytest.mark.parametrize("map_name", ["identity", "incremental"])
def test_probe_phi_matrix_reproduces_unl(map_name):
    m = OgbModel.standard(2, 1, 2, phi_b=(output_term("monomial", 1, 3), constant_term(0.5)),
                          phi_b0=(output_term("cos", 0),), input_map=INPUT_MAPS[map_name]())
    u, y = _data(m, 25, seed=3)
    unl = build_unl(m, u, y).values
    uh = transformed_inputs(m, u)
    lb = m.lookback
    start, horizon = 10, 8
    phi0, Phi = probe_phi_matrix(m, y.window(start - m.y_lookback, start + horizon), horizon,
                                 t0=start, u_h_before=uh[:, start - m.uh_lookback:start])
    pred = phi0 + Phi @ uh[:, start:start + horizon].reshape(-1, order="F")
    assert np.allclose(pred, unl[:, start - lb:start - lb + horizon].reshape(-1, order="F"), atol=1e-13)
    dims = m.dims
    Pp, Pf = split_phi_matrix(Phi, dims, 3, horizon - 3)
    assert Pp.shape[1] == 2 * 3 and Pf.shape[1] == 2 * (horizon - 3)
    with pytest.raises(ModelError):
        split_phi_matrix(Phi, dims, 0, horizon - 1)


def test_split_phi_without_initial_block():
    dims = SystemDims(1, 1, 1)
    Pp, Pf = split_phi_matrix(np.ones((3, 3)), dims, 0, 3)
    assert Pp.shape == (3, 0) and Pf.shape == (3, 3)


def test_shift_duplicates_flagged_and_pruned():
    m = OgbModel(1, 1, y_delays=(2, 1), phi_b0=(output_term("sin", 1), output_term("sin", 0)),
                 lag=2, order=2)
    plant = Pendulum()
    u = np.random.default_rng(4).uniform(0, 0.08, (1, 40))
    ut, yt = plant.trajectory(u, [np.pi / 2, np.pi / 2])
    unl = build_unl(m, ut, yt)
    assert (0, 1, 1) in find_shift_duplicates(unl, 2)
    flagged = redundant_basis(m, ut, yt)
    assert flagged == [("b0", 1)]
    pruned = m.without(phi_b0_idx=[1])
    assert pruned.n_nl == 1 and redundant_basis(pruned, ut, yt) == []
