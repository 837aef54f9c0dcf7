"""LTI plant, trajectory simulation and the analytic behavior covariance.

The plant is

    x_{t+1} = A x_t + B u_t + w_t + Ba ua_t
    y_t     = C x_t + v_t + Ga ya_t

started from x_0 = 0 unless a stationary initial state is requested. Inputs
u_0..u_{T-1} and outputs y_1..y_T are recorded. Noise scales are variances: u_t ~ N(0, sigma_u I), and likewise for w and v.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from .errors import DegenerateSystemError

SPECTRAL_RADIUS = 0.8
MAX_SYSTEM_DRAWS = 100


def derive_rng(*keys: int) -> np.random.Generator:
    """Counter-based generator keyed on a tuple of nonnegative integers.

    Streams for different key tuples are statistically independent, so the
    data for trajectory ``i`` never depends on how many other trajectories are
    drawn or in which order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Ba: np.ndarray
    Ga: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("A", "B", "C", "Ba", "Ga"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be a 2-D matrix")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, m, p = self.n, self.m, self.p
        expected = {"A": (n, n), "B": (n, m), "C": (p, n), "Ba": (n, m), "Ga": (p, p)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.spectral_radius >= 1.0:
            raise DegenerateSystemError(f"A is not stable (spectral radius {self.spectral_radius:.4f})")
        if not self.is_controllable():
            raise DegenerateSystemError("(A, B) is not controllable")
        if not self.is_observable():
            raise DegenerateSystemError("(A, C) is not observable")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def controllability_matrix(self) -> np.ndarray:
        blocks = [self.B]
        for _ in range(self.n - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)

    def observability_matrix(self) -> np.ndarray:
        blocks = [self.C]
        for _ in range(self.n - 1):
            blocks.append(blocks[-1] @ self.A)
        return np.vstack(blocks)

    def is_controllable(self) -> bool:
        return np.linalg.matrix_rank(self.controllability_matrix()) == self.n

    def is_observable(self) -> bool:
        return np.linalg.matrix_rank(self.observability_matrix()) == self.n

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.A, self.B, self.C, self.Ba, self.Ga):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "A": self.A.ravel().tolist(),
            "B": self.B.ravel().tolist(),
            "C": self.C.ravel().tolist(),
            "Ba": self.Ba.ravel().tolist(),
            "Ga": self.Ga.ravel().tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LtiSystem":
        n, m, p = int(doc["n"]), int(doc["m"]), int(doc["p"])

        def mat(key, rows, cols):
            return np.asarray(doc[key], dtype=float).reshape(rows, cols)

        return cls(
            A=mat("A", n, n),
            B=mat("B", n, m),
            C=mat("C", p, n),
            Ba=mat("Ba", n, m),
            Ga=mat("Ga", p, p),
            seed=doc.get("seed"),
        )


@dataclass(frozen=True)
class NoiseSpec:
    sigma_u: float = 1.0
    sigma_w: float = 1.0
    sigma_v: float = 1.0

    def __post_init__(self):
        for name in ("sigma_u", "sigma_w", "sigma_v"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class NoAttack:
    pass


@dataclass(frozen=True)
class GaussianInjection:
    """Input and sensor injection, i.i.d. N(0, sigma_a) per coordinate."""

    sigma_a: float

    def __post_init__(self):
        if self.sigma_a < 0:
            raise ValueError("sigma_a must be nonnegative")


@dataclass(frozen=True)
class ExplicitAttack:
    """Fixed attack sequences: ``u_a`` is T x m, ``y_a`` is T x p."""

    u_a: np.ndarray
    y_a: np.ndarray


AttackSpec = Union[NoAttack, GaussianInjection, ExplicitAttack]


@dataclass(frozen=True)
class Trajectory:
    inputs: np.ndarray  # (T, m): u_0 .. u_{T-1}
    outputs: np.ndarray  # (T, p): y_1 .. y_T

    def __post_init__(self):
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError("inputs and outputs must have the same length")

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.outputs.shape[1]


@dataclass(frozen=True)
class ExperimentSet:
    """N attack-free trajectories stored as stacked arrays."""

    inputs: np.ndarray  # (N, T, m)
    outputs: np.ndarray  # (N, T, p)
    noise: NoiseSpec
    master_seed: int
    system_fingerprint: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.outputs.ndim != 3:
            raise ValueError("inputs and outputs must be (N, T, dim) arrays")
        if self.inputs.shape[:2] != self.outputs.shape[:2]:
            raise ValueError("inputs and outputs disagree on N or T")
        if self.inputs.shape[0] < 1:
            raise ValueError("an experiment set needs at least one trajectory")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.inputs[i], self.outputs[i])

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(len(self)):
            yield self[i]

    @property
    def trajectories(self) -> list[Trajectory]:
        return list(self)

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def T(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[2]

    @property
    def p(self) -> int:
        return self.outputs.shape[2]

    def behaviors(self) -> np.ndarray:
        """Behavior vectors as rows, shape (N, T(m+p))."""
        N = self.N
        return np.hstack([self.inputs.reshape(N, -1), self.outputs.reshape(N, -1)])


def random_stable_system(n: int, m: int, p: int, seed: int) -> LtiSystem:
    """Draw a random stable, controllable and observable plant.

    A has i.i.d. standard normal entries rescaled to spectral radius 0.8; B and
    C are i.i.d. standard normal. Attack channels default to Ba = B, Ga = I.
    """
    if min(n, m, p) < 1:
        raise ValueError("n, m and p must all be positive")
    rng = derive_rng(seed)
    for _ in range(MAX_SYSTEM_DRAWS):
        A = rng.standard_normal((n, n))
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        if rho < 1e-8:
            continue
        A = A * (SPECTRAL_RADIUS / rho)
        try:
            return LtiSystem(A=A, B=B, C=C, Ba=B.copy(), Ga=np.eye(p), seed=seed)
        except DegenerateSystemError:
            continue
    raise DegenerateSystemError(
        f"no controllable/observable draw for (n={n}, m={m}, p={p}) after {MAX_SYSTEM_DRAWS} tries"
    )


def _draw_nominal(sys: LtiSystem, noise: NoiseSpec, T: int, rng: np.random.Generator, count: int):
    u = np.sqrt(noise.sigma_u) * rng.standard_normal((count, T, sys.m))
    w = np.sqrt(noise.sigma_w) * rng.standard_normal((count, T, sys.n))
    v = np.sqrt(noise.sigma_v) * rng.standard_normal((count, T, sys.p))
    return u, w, v


INITIAL_STATES = ("zero", "stationary")


def stationary_state_covariance(sys: LtiSystem, noise: NoiseSpec) -> np.ndarray:
    """Pi = A Pi A^T + sigma_u B B^T + sigma_w I, the nominal stationary state covariance."""
    from .estimation import solve_discrete_lyapunov

    Q = noise.sigma_u * sys.B @ sys.B.T + noise.sigma_w * np.eye(sys.n)
    return solve_discrete_lyapunov(sys.A, Q)


def _draw_initial(sys, noise, initial_state, rng, count):
    if initial_state == "zero":
        return None
    if initial_state == "stationary":
        root = np.linalg.cholesky(stationary_state_covariance(sys, noise) + 1e-15 * np.eye(sys.n))
        return rng.standard_normal((count, sys.n)) @ root.T
    raise ValueError(f"initial_state must be one of {INITIAL_STATES}")


def _draw_attack(sys: LtiSystem, attack: AttackSpec, T: int, rng: np.random.Generator, count: int):
    if isinstance(attack, NoAttack) or attack is None:
        return None, None
    if isinstance(attack, GaussianInjection):
        scale = np.sqrt(attack.sigma_a)
        ua = scale * rng.standard_normal((count, T, sys.m))
        ya = scale * rng.standard_normal((count, T, sys.p))
        return ua, ya
    if isinstance(attack, ExplicitAttack):
        ua = np.broadcast_to(np.asarray(attack.u_a, dtype=float), (count, T, sys.m))
        ya = np.broadcast_to(np.asarray(attack.y_a, dtype=float), (count, T, sys.p))
        return ua, ya
    raise TypeError(f"unknown attack spec {attack!r}")


def _propagate(sys: LtiSystem, u, w, v, ua=None, ya=None, x0=None) -> np.ndarray:
    count, T, _ = u.shape
    x = np.zeros((count, sys.n)) if x0 is None else x0
    y = np.empty((count, T, sys.p))
    for t in range(T):
        drive = u[:, t] @ sys.B.T + w[:, t]
        if ua is not None:
            drive = drive + ua[:, t] @ sys.Ba.T
        x = x @ sys.A.T + drive
        y[:, t] = x @ sys.C.T + v[:, t]
        if ya is not None:
            y[:, t] += ya[:, t] @ sys.Ga.T
    return y


def simulate_batch(
    sys: LtiSystem,
    noise: NoiseSpec,
    attack: AttackSpec,
    T: int,
    rng: np.random.Generator,
    count: int,
    initial_state: str = "zero",
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``count`` trajectories from one stream; returns (u, y) arrays.

    Nominal draws (u, w, v, then x_0 if stationary) precede attack draws, so an
    attacked run and a nominal run from identically seeded streams share their
    noise.
    """
    if T < 1:
        raise ValueError("horizon T must be at least 1")
    u, w, v = _draw_nominal(sys, noise, T, rng, count)
    x0 = _draw_initial(sys, noise, initial_state, rng, count)
    ua, ya = _draw_attack(sys, attack, T, rng, count)
    return u, _propagate(sys, u, w, v, ua, ya, x0)


def simulate(
    sys: LtiSystem,
    noise: NoiseSpec,
    attack: AttackSpec,
    T: int,
    rng: np.random.Generator,
    initial_state: str = "zero",
) -> Trajectory:
    u, y = simulate_batch(sys, noise, attack, T, rng, 1, initial_state)
    return Trajectory(inputs=u[0], outputs=y[0])


def generate_experiments(
    sys: LtiSystem, noise: NoiseSpec, N: int, T: int, master_seed: int, initial_state: str = "zero"
) -> ExperimentSet:
    """N nominal trajectories; trajectory i is drawn from stream (master_seed, i).

    Because each trajectory has its own stream, the first k trajectories of a
    set are identical for every N >= k.
    """
    if N < 1 or T < 1:
        raise ValueError("N and T must both be at least 1")
    draws = []
    for i in range(N):
        rng = derive_rng(master_seed, i)
        draws.append((*_draw_nominal(sys, noise, T, rng, 1), _draw_initial(sys, noise, initial_state, rng, 1)))
    u, w, v = (np.concatenate([d[k] for d in draws]) for k in range(3))
    x0 = None if initial_state == "zero" else np.concatenate([d[3] for d in draws])
    y = _propagate(sys, u, w, v, x0=x0)
    return ExperimentSet(
        inputs=u,
        outputs=y,
        noise=noise,
        master_seed=master_seed,
        system_fingerprint=sys.fingerprint(),
        metadata={"initial_state": initial_state},
    )


def _toeplitz(sys: LtiSystem, T: int, Bmat: np.ndarray) -> np.ndarray:
    p, k = sys.p, Bmat.shape[1]
    markov = []
    Ak = np.eye(sys.n)
    for _ in range(T):
        markov.append(sys.C @ Ak @ Bmat)
        Ak = Ak @ sys.A
    out = np.zeros((T * p, T * k))
    for i in range(T):
        for j in range(i + 1):
            out[i * p:(i + 1) * p, j * k:(j + 1) * k] = markov[i - j]
    return out


def markov_toeplitz(sys: LtiSystem, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Block lower-triangular maps from inputs and process noise to outputs.

    Block (i, j) of the first matrix is C A^(i-j) B for i >= j; the second
    matrix uses the identity in place of B.
    """
    if T < 1:
        raise ValueError("horizon T must be at least 1")
    return _toeplitz(sys, T, sys.B), _toeplitz(sys, T, np.eye(sys.n))


def attack_toeplitz(sys: LtiSystem, T: int) -> np.ndarray:
    """Same construction with the attack input channel Ba in place of B."""
    return _toeplitz(sys, T, sys.Ba)


def true_behavior_covariance(sys: LtiSystem, noise: NoiseSpec, T: int, initial_state: str = "zero"):
    """Exact covariance E[Z Z^T] of the nominal behavior over horizon T.

    With the default ``initial_state="zero"`` this is the covariance of the
    transient started at x_0 = 0, not of the stationary process.
    """
    from .estimation import CovarianceEstimate

    Cu, Cw = markov_toeplitz(sys, T)
    Suu = noise.sigma_u * np.eye(T * sys.m)
    Syu = Cu @ Suu
    Syy = Cu @ Suu @ Cu.T + noise.sigma_w * Cw @ Cw.T + noise.sigma_v * np.eye(T * sys.p)
    if initial_state == "stationary":
        obs = np.vstack([sys.C @ np.linalg.matrix_power(sys.A, t) for t in range(1, T + 1)])
        Syy = Syy + obs @ stationary_state_covariance(sys, noise) @ obs.T
    elif initial_state != "zero":
        raise ValueError(f"initial_state must be one of {INITIAL_STATES}")
    S = np.block([[Suu, Syu.T], [Syu, Syy]])
    S = 0.5 * (S + S.T)
    return CovarianceEstimate(
        S_hat=S,
        method="oracle",
        params={
            "T": T,
            "initial_state": initial_state,
            "sigma_u": noise.sigma_u,
            "sigma_w": noise.sigma_w,
            "sigma_v": noise.sigma_v,
        },
    )
