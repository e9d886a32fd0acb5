"""Brusselator ground truth: vector field, fixed-step RK4 sampling, datasets.

The two-species oscillator

    du/dt = a + u^2 v - (b + 1) u
    dv/dt = b u - u^2 v

is integrated from random initial conditions and sampled on a uniform
grid. Downstream code treats u as observed and v as hidden; both are
stored so that hidden-variable imputation can be evaluated later.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import IntegrationDivergedError
from .validation import check_scalar

DEFAULT_A = 1.0
DEFAULT_B = 2.1
DEFAULT_T_END = 20.0
DEFAULT_DT = 0.2
DEFAULT_U0_RANGE = (0.0, 2.0)
DEFAULT_V0_RANGE = (0.0, 3.0)
SUBSTEPS = 20  # internal RK4 steps per sampling interval


@dataclass
class BrusselatorParams:
    """Rate constants of the oscillator; both must be positive."""

    a: float = DEFAULT_A
    b: float = DEFAULT_B

    def __post_init__(self):
        self.a = check_scalar(self.a, "a", positive=True)
        self.b = check_scalar(self.b, "b", positive=True)

    def fixed_point(self):
        """The unique equilibrium (u*, v*) = (a, b/a)."""
        return self.a, self.b / self.a


@dataclass
class Trajectory:
    """Uniformly sampled time series of u (and, when available, v)."""

    dt: float
    u: np.ndarray
    v: np.ndarray | None = None

    def __post_init__(self):
        self.dt = check_scalar(self.dt, "dt", positive=True)
        self.u = np.asarray(self.u, dtype=float)
        if not np.all(np.isfinite(self.u)):
            raise ValueError("u contains non-finite samples")
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=float)
            if self.v.shape != self.u.shape:
                raise ValueError("v must have the same length as u")
            if not np.all(np.isfinite(self.v)):
                raise ValueError("v contains non-finite samples")

    def __len__(self):
        return len(self.u)

    @property
    def times(self):
        return self.dt * np.arange(len(self.u))


@dataclass
class Dataset:
    """Train/val/test trajectory splits plus the recipe that produced them."""

    train: list
    val: list
    test: list
    seed: int
    params: BrusselatorParams = field(default_factory=BrusselatorParams)
    ic_ranges: tuple = (DEFAULT_U0_RANGE, DEFAULT_V0_RANGE)
    t_end: float = DEFAULT_T_END
    dt: float = DEFAULT_DT

    @property
    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}

    def __len__(self):
        return len(self.train) + len(self.val) + len(self.test)


def brusselator_rhs(state, params):
    """Time derivatives (du, dv) at a state (u, v); total on finite inputs."""
    u, v = state
    du = params.a + u * u * v - (params.b + 1.0) * u
    dv = params.b * u - u * u * v
    return du, dv


def _rk4_sample(params, u0, v0, t_end, dt_sample, substeps=SUBSTEPS):
    """Integrate a batch of initial conditions with fixed-step classical RK4.

    u0, v0 are 1-d arrays of equal length B. Returns (B, n_samples) arrays
    holding both variables at the sampling grid, t = 0 included. The
    internal step h = dt_sample / substeps divides the sampling interval by
    construction, so samples fall exactly on integrator steps.
    """
    u = np.array(u0, dtype=float, copy=True)
    v = np.array(v0, dtype=float, copy=True)
    n_samples = 1 + round(t_end / dt_sample)
    h = dt_sample / substeps
    us = np.empty((u.shape[0], n_samples))
    vs = np.empty_like(us)
    us[:, 0] = u
    vs[:, 0] = v
    for k in range(1, n_samples):
        for _ in range(substeps):
            k1u, k1v = brusselator_rhs((u, v), params)
            k2u, k2v = brusselator_rhs((u + 0.5 * h * k1u, v + 0.5 * h * k1v), params)
            k3u, k3v = brusselator_rhs((u + 0.5 * h * k2u, v + 0.5 * h * k2v), params)
            k4u, k4v = brusselator_rhs((u + h * k3u, v + h * k3v), params)
            u = u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            bad = int(np.flatnonzero(~(np.isfinite(u) & np.isfinite(v)))[0])
            raise IntegrationDivergedError(
                f"state became non-finite at sample {k} (batch index {bad})"
            )
        us[:, k] = u
        vs[:, k] = v
    return us, vs


def integrate_and_sample(params, ic, t_end, dt_sample, substeps=SUBSTEPS):
    """Integrate one initial condition and return the sampled Trajectory.

    The t = 0 state is included, so the result has 1 + round(t_end/dt_sample)
    samples of both u and v.
    """
    check_scalar(t_end, "t_end", positive=True)
    check_scalar(dt_sample, "dt_sample", positive=True)
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u0, v0 = float(ic[0]), float(ic[1])
    us, vs = _rk4_sample(params, np.array([u0]), np.array([v0]), t_end, dt_sample, substeps)
    return Trajectory(dt=dt_sample, u=us[0], v=vs[0])


def _initial_conditions(n_total, seed, u0_range, v0_range):
    """Per-trajectory PCG64 streams keyed by (seed, index).

    Stream splitting: trajectory i draws from
    default_rng(SeedSequence([seed, i])), u0 first then v0, which makes the
    dataset a pure function of (counts, seed) independent of batching.
    """
    u0 = np.empty(n_total)
    v0 = np.empty(n_total)
    for i in range(n_total):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        u0[i] = rng.uniform(*u0_range)
        v0[i] = rng.uniform(*v0_range)
    return u0, v0


def generate_dataset(
    n_train=400,
    n_val=50,
    n_test=50,
    seed=0,
    params=None,
    t_end=DEFAULT_T_END,
    dt_sample=DEFAULT_DT,
    u0_range=DEFAULT_U0_RANGE,
    v0_range=DEFAULT_V0_RANGE,
):
    """Generate the train/val/test splits from uniformly drawn initial states.

    Deterministic in all arguments. Trajectories are ordered by a global
    index (train block first, then val, then test); integration is batched
    over initial conditions but elementwise, so batched and one-at-a-time
    runs produce identical samples.
    """
    if min(n_train, n_val, n_test) < 1:
        raise ValueError("all split sizes must be >= 1")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    params = params if params is not None else BrusselatorParams()
    n_total = n_train + n_val + n_test
    u0, v0 = _initial_conditions(n_total, seed, u0_range, v0_range)
    if len(set(zip(u0.tolist(), v0.tolist()))) != n_total:
        raise ValueError("initial conditions are not pairwise distinct")
    us, vs = _rk4_sample(params, u0, v0, t_end, dt_sample)
    trajs = [Trajectory(dt=dt_sample, u=us[i], v=vs[i]) for i in range(n_total)]
    return Dataset(
        train=trajs[:n_train],
        val=trajs[n_train : n_train + n_val],
        test=trajs[n_train + n_val :],
        seed=seed,
        params=params,
        ic_ranges=(tuple(u0_range), tuple(v0_range)),
        t_end=t_end,
        dt=dt_sample,
    )
