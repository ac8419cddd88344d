"""Ground-truth simulators used to generate data and check realized outputs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ogb import OgbModel, eval_phi_nl, output_term, transformed_inputs
from .signal import Trajectory


class PlantDomainError(ValueError):
    """Simulation left the physical domain (e.g. a negative tank level)."""


def rrmse(y_real, y_r) -> float:
    """``||y_real - y_r||_2 / ||y_r||_2`` over all channels and samples."""
    a = y_real.values if isinstance(y_real, Trajectory) else np.asarray(y_real, dtype=float)
    b = y_r.values if isinstance(y_r, Trajectory) else np.asarray(y_r, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ref = np.linalg.norm(b)
    if ref == 0:
        raise ValueError("reference output is identically zero; RRMSE undefined")
    return float(np.linalg.norm(a - b) / ref)


class Plant:
    """Input-output difference equation with ``lag`` initial outputs.

    ``simulate(u, y_init)`` returns outputs of the same length as ``u``; the
    first ``lag`` columns are ``y_init`` and column ``t >= lag`` is computed
    from earlier samples only.
    """

    n_u: int
    n_y: int
    lag: int
    name = "plant"
    # Smallest delay with which an additional input reaches an output.
    unl_output_delay = 0

    def step(self, y: np.ndarray, u: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def simulate(self, u, y_init, t0: int = 0) -> np.ndarray:
        """``t0`` is the absolute time of the first sample (time-varying plants only)."""
        u = np.atleast_2d(np.asarray(u.values if isinstance(u, Trajectory) else u, dtype=float))
        y_init = np.asarray(y_init, dtype=float).reshape(self.n_y, -1)
        if u.shape[0] != self.n_u:
            raise ValueError(f"{self.name}: expected {self.n_u} input channels, got {u.shape[0]}")
        if y_init.shape[1] < self.lag:
            raise ValueError(f"{self.name}: need {self.lag} initial outputs")
        T = u.shape[1]
        y = np.zeros((self.n_y, T))
        k0 = min(self.lag, T)
        y[:, :k0] = y_init[:, :k0]
        for t in range(self.lag, T):
            y[:, t] = self.step(y, u, t)
        return y

    def trajectory(self, u, y_init, t0: int = 0) -> tuple[Trajectory, Trajectory]:
        u_arr = np.atleast_2d(np.asarray(u.values if isinstance(u, Trajectory) else u, dtype=float))
        y = self.simulate(u_arr, y_init, t0)
        u_lab = u.labels if isinstance(u, Trajectory) else ()
        return (Trajectory(u_arr, u_lab or _labels("u", self.n_u)),
                Trajectory(y, _labels("y", self.n_y)))

    def realize(self, u_ini, y_ini, u, t0: int = 0) -> np.ndarray:
        """Outputs over the horizon when ``u`` follows the initial trajectory.

        ``t0`` is the absolute time of the first initial sample.
        """
        u_ini = np.atleast_2d(np.asarray(u_ini, dtype=float)).reshape(self.n_u, -1)
        y_ini = np.atleast_2d(np.asarray(y_ini, dtype=float)).reshape(self.n_y, -1)
        u = np.atleast_2d(np.asarray(u, dtype=float)).reshape(self.n_u, -1)
        if y_ini.shape[1] < self.lag:
            raise ValueError(f"{self.name}: initial trajectory shorter than the plant lag {self.lag}")
        y = self.simulate(np.hstack([u_ini, u]), y_ini[:, :self.lag], t0)
        return y[:, u_ini.shape[1]:]


def _labels(prefix: str, n: int) -> tuple[str, ...]:
    return (prefix,) if n == 1 else tuple(f"{prefix}{i + 1}" for i in range(n))


# ------------------------------------------------------------------ pendulum

@dataclass(frozen=True)
class PendulumParams:
    m: float = 0.1
    g: float = 9.81
    l_p: float = 0.1
    J: float = 1e-3
    tau: float = 0.1
    K_m: float = 10.0
    T_s: float = 0.01

    def __post_init__(self):
        if self.J <= 0 or self.tau <= 0 or self.T_s <= 0:
            raise ValueError("J, tau and T_s must be positive")

    @property
    def coefficients(self) -> dict[str, float]:
        """Coefficients of the Euler-discretized recursion."""
        return {
            "sin": self.T_s ** 2 * self.m * self.l_p * self.g / self.J,
            "damp": self.T_s / self.tau,
            "input": self.T_s ** 2 * self.K_m / self.tau,
        }


class Pendulum(Plant):
    """y(t) = 2y(t-1) - y(t-2) - a sin(y(t-2)) - c (y(t-1) - y(t-2)) + b u(t-2)."""

    n_u, n_y, lag = 1, 1, 2
    name = "pendulum"
    unl_output_delay = 2  # sin(y(t)) first enters y(t+2)

    def __init__(self, params: PendulumParams = PendulumParams()):
        self.params = params
        c = params.coefficients
        self._a, self._c, self._b = c["sin"], c["damp"], c["input"]

    def step(self, y, u, t):
        y1, y2 = y[0, t - 1], y[0, t - 2]
        return np.array([2 * y1 - y2 - self._a * np.sin(y2) - self._c * (y1 - y2)
                         + self._b * u[0, t - 2]])

    def ogb_model(self, advanced: bool = True) -> OgbModel:
        """Basis ``sin(y)``: ``u_nl(t) = sin(y(t))`` when advanced, else ``sin(y(t-2))``."""
        if advanced:
            return OgbModel(1, 1, y_delays=(0,), phi_b0=(output_term("sin", 0, name="sin(y(t))"),),
                            lag=2, order=2, name="pendulum")
        return OgbModel(1, 1, y_delays=(2, 1), phi_b0=(output_term("sin", 0, name="sin(y(t-2))"),),
                        lag=2, order=2, name="pendulum")


def simulate_pendulum(p: PendulumParams, u, y_init) -> np.ndarray:
    return Pendulum(p).simulate(u, y_init)


# ----------------------------------------------------------------- four-tank

@dataclass(frozen=True)
class FourTankParams:
    a: tuple[float, float, float, float] = (2.3, 2.3, 2.3, 2.3)
    A: tuple[float, float, float, float] = (730.0, 730.0, 730.0, 730.0)
    k1: float = 5.51
    k2: float = 6.58
    g: float = 981.0
    gamma1: float = 0.333
    gamma2: float = 0.307
    T_s: float = 1e-3

    def __post_init__(self):
        if min(self.a) <= 0 or min(self.A) <= 0 or self.k1 <= 0 or self.k2 <= 0 or self.g <= 0:
            raise ValueError("areas, pump gains and g must be positive")
        if not (0 < self.gamma1 < 1 and 0 < self.gamma2 < 1):
            raise ValueError("flow splits must lie in (0, 1)")
        if self.T_s <= 0:
            raise ValueError("T_s must be positive")


class FourTank(Plant):
    """Euler-discretized quadruple tank; levels are outputs, pump speeds inputs.

    Tanks 3 and 4 drain into tanks 1 and 2. Pump inflow and inflow from the
    upper tanks raise the levels.
    """

    n_u, n_y, lag = 2, 4, 1
    name = "four_tank"
    unl_output_delay = 1

    def __init__(self, params: FourTankParams = FourTankParams()):
        self.params = params
        p = params
        a, A, Ts = p.a, p.A, p.T_s
        r2g = np.sqrt(2 * p.g)
        # y(t) = y(t-1) + M_sqrt @ sqrt(y(t-1)) + M_u @ u(t-1)
        self.M_sqrt = Ts * r2g * np.array([
            [-a[0] / A[0], 0, a[2] / A[0], 0],
            [0, -a[1] / A[1], 0, a[3] / A[1]],
            [0, 0, -a[2] / A[2], 0],
            [0, 0, 0, -a[3] / A[3]],
        ])
        self.M_u = Ts * np.array([
            [p.gamma1 * p.k1 / A[0], 0],
            [0, p.gamma2 * p.k2 / A[1]],
            [0, (1 - p.gamma2) * p.k2 / A[2]],
            [(1 - p.gamma1) * p.k1 / A[3], 0],
        ])

    def step(self, y, u, t):
        prev = y[:, t - 1]
        if np.any(prev < 0):
            i = int(np.argmax(prev < 0))
            raise PlantDomainError(f"tank {i + 1} level {prev[i]:.3g} < 0 at step {t - 1}")
        nxt = prev + self.M_sqrt @ np.sqrt(prev) + self.M_u @ u[:, t - 1]
        if np.any(nxt < 0):
            i = int(np.argmax(nxt < 0))
            raise PlantDomainError(f"tank {i + 1} level {nxt[i]:.3g} < 0 at step {t}")
        return nxt

    def ogb_model(self) -> OgbModel:
        """``u_nl(t) = sqrt(y(t))`` per tank."""
        terms = tuple(output_term("sqrt", i, name=f"sqrt(y{i + 1}(t))") for i in range(4))
        return OgbModel(2, 4, y_delays=(0,), phi_b0=terms, lag=1, order=4, name="four_tank")

    def active_terms(self) -> dict[int, set[tuple[str, int]]]:
        """Nonzero terms of each output equation as ``(channel label, delay)``.

        Channel labels follow :func:`ogbmatch.ogb.build_extended`:
        ``h(u1), h(u2), y1..y4, unl1..unl4``.
        """
        out = {}
        for i in range(4):
            terms = {(f"y{i + 1}", 0), (f"y{i + 1}", 1)}
            terms |= {(f"unl{j + 1}", 1) for j in range(4) if self.M_sqrt[i, j] != 0}
            terms |= {(f"h(u{j + 1})", 1) for j in range(2) if self.M_u[i, j] != 0}
            out[i] = terms
        return out


def simulate_fourtank(p: FourTankParams, u, y_init) -> np.ndarray:
    return FourTank(p).simulate(u, y_init)


# ------------------------------------------------------- generic OGB plants

@dataclass
class OgbPlant(Plant):
    """Extended-behavior difference equation driven by an :class:`OgbModel`.

    ``y(t) = sum_d Ay[d] y(t-d) + sum_d Bu[d] u_h(t-d) + sum_d Cnl[d] u_nl(t-d)``
    with ``Ay`` keyed by delays >= 1 and ``Bu``/``Cnl`` by delays >= 0.
    ``Cnl[0]`` must vanish when ``u_nl(t)`` reads ``y(t)``.
    """

    model: OgbModel
    Ay: dict[int, np.ndarray] = field(default_factory=dict)
    Bu: dict[int, np.ndarray] = field(default_factory=dict)
    Cnl: dict[int, np.ndarray] = field(default_factory=dict)
    name: str = "ogb_plant"

    def __post_init__(self):
        m = self.model
        self.n_u, self.n_y = m.n_u, m.n_y
        if any(d < 1 for d in self.Ay):
            raise ValueError("output coefficients need delays >= 1")
        if 0 in m.y_delays and 0 in self.Cnl and np.any(self.Cnl[0]):
            raise ValueError("u_nl(t) reads y(t); Cnl[0] would create an algebraic loop")
        depth = max(list(self.Ay) + list(self.Bu) + list(self.Cnl) + [0])
        nl_reach = max(self.Cnl, default=0) + m.lookback if self.Cnl else 0
        self.lag = max(depth, nl_reach, m.input_map.lookback + max(self.Bu, default=0))

    def simulate(self, u, y_init, t0: int = 0) -> np.ndarray:
        m = self.model
        u = np.atleast_2d(np.asarray(u.values if isinstance(u, Trajectory) else u, dtype=float))
        y_init = np.asarray(y_init, dtype=float).reshape(self.n_y, -1)
        T = u.shape[1]
        u_h = transformed_inputs(m, Trajectory(u))
        y = np.zeros((self.n_y, T))
        y[:, :self.lag] = y_init[:, :self.lag]
        unl = np.zeros((m.n_nl, T))
        done = np.zeros(T, dtype=bool)
        lb = m.lookback

        def unl_at(k):
            if not done[k]:
                x_y = (np.concatenate([y[:, k - d] for d in m.y_delays])
                       if m.y_delays else np.zeros(0))
                x_hu = (np.concatenate([u_h[:, k - d] for d in m.u_delays])
                        if m.phi_b else np.zeros(m.x_hu_size))
                unl[:, k] = eval_phi_nl(m, x_y, x_hu, t0 + k)
                done[k] = True
            return unl[:, k]

        for t in range(self.lag, T):
            acc = np.zeros(self.n_y)
            for d, M in self.Ay.items():
                acc += M @ y[:, t - d]
            for d, M in self.Bu.items():
                acc += M @ u_h[:, t - d]
            for d, M in self.Cnl.items():
                if t - d < lb:
                    raise ValueError("plant lag too small for the additional-input lookback")
                acc += M @ unl_at(t - d)
            y[:, t] = acc
        return y

    def step(self, y, u, t):  # pragma: no cover - simulate is overridden
        raise NotImplementedError


def pendulum_as_ogb(params: PendulumParams = PendulumParams()) -> OgbPlant:
    """The pendulum written as a generic OGB plant with ``u_nl(t) = sin(y(t))``."""
    c = params.coefficients
    m = Pendulum(params).ogb_model(advanced=True)
    return OgbPlant(m,
                    Ay={1: np.array([[2 - c["damp"]]]), 2: np.array([[-1 + c["damp"]]])},
                    Bu={2: np.array([[c["input"]]])},
                    Cnl={2: np.array([[-c["sin"]]])},
                    name="pendulum_ogb")


# ------------------------------------------------------------ LTI state space

@dataclass
class StateSpace:
    """x(t+1) = A x(t) + B u(t), y(t) = C x(t) + D u(t)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, self.A.shape[0])
        self.D = np.asarray(self.D, dtype=float).reshape(self.C.shape[0], self.B.shape[1])

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def simulate(self, u, x0) -> tuple[np.ndarray, np.ndarray]:
        """Outputs and the states *before* each step (``x[:, t]`` produces ``y[:, t]``)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        T = u.shape[1]
        x = np.zeros((self.n, T + 1))
        x[:, 0] = np.asarray(x0, dtype=float).reshape(-1)
        y = np.zeros((self.C.shape[0], T))
        for t in range(T):
            y[:, t] = self.C @ x[:, t] + self.D @ u[:, t]
            x[:, t + 1] = self.A @ x[:, t] + self.B @ u[:, t]
        return y, x

    def observability(self, k: int) -> np.ndarray:
        blocks, M = [], self.C
        for _ in range(k):
            blocks.append(M)
            M = M @ self.A
        return np.vstack(blocks)

    def toeplitz(self, k: int) -> np.ndarray:
        """Impulse-response Toeplitz matrix mapping k stacked inputs to k stacked outputs."""
        p, m = self.C.shape[0], self.B.shape[1]
        G = np.zeros((p * k, m * k))
        markov = [self.D]
        M = self.B
        for _ in range(1, k):
            markov.append(self.C @ M)
            M = self.A @ M
        for i in range(k):
            for j in range(i + 1):
                G[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j]
        return G


def random_stable_ss(rng: np.random.Generator, n: int, n_u: int = 1, n_y: int = 1,
                     feedthrough: bool = True, radius: float = 0.9) -> StateSpace:
    """Random minimal-looking realization with spectral radius below ``radius``."""
    while True:
        A = rng.standard_normal((n, n))
        rho = max(abs(np.linalg.eigvals(A)))
        A *= rng.uniform(0.3, radius) / rho
        B = rng.standard_normal((n, n_u))
        C = rng.standard_normal((n_y, n))
        D = rng.standard_normal((n_y, n_u)) if feedthrough else np.zeros((n_y, n_u))
        ss = StateSpace(A, B, C, D)
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if (np.linalg.matrix_rank(ctrb) == n and np.linalg.matrix_rank(ss.observability(n)) == n
                and (feedthrough or np.min(np.abs(C @ B)) > 0.1)):
            return ss


class LtiPlant(Plant):
    """State-space system behind the plant interface; ``y_init`` is the initial state.

    :meth:`realize` reconstructs the state from the initial trajectory, which
    needs ``T_ini`` at least the observability index.
    """

    name = "lti"

    def __init__(self, ss: StateSpace):
        self.ss = ss
        self.n_u, self.n_y = ss.B.shape[1], ss.C.shape[0]
        self.lag = 0

    def simulate(self, u, y_init, t0: int = 0) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u.values if isinstance(u, Trajectory) else u, dtype=float))
        return self.ss.simulate(u, y_init)[0]

    def state_from_window(self, u_ini, y_ini) -> np.ndarray:
        """Least-squares initial state explaining ``(u_ini, y_ini)``."""
        u_ini = np.atleast_2d(np.asarray(u_ini, dtype=float)).reshape(self.n_u, -1)
        y_ini = np.atleast_2d(np.asarray(y_ini, dtype=float)).reshape(self.n_y, -1)
        k = u_ini.shape[1]
        O = self.ss.observability(k)
        free = y_ini.reshape(-1, order="F") - self.ss.toeplitz(k) @ u_ini.reshape(-1, order="F")
        x0, *_ = np.linalg.lstsq(O, free, rcond=None)
        return x0

    def realize(self, u_ini, y_ini, u, t0: int = 0) -> np.ndarray:
        u_ini = np.atleast_2d(np.asarray(u_ini, dtype=float)).reshape(self.n_u, -1)
        u = np.atleast_2d(np.asarray(u, dtype=float)).reshape(self.n_u, -1)
        x0 = self.state_from_window(u_ini, y_ini)
        return self.simulate(np.hstack([u_ini, u]), x0)[:, u_ini.shape[1]:]
