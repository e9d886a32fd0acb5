"""Single-layer LSTM (4 cells, scalar input) with a linear decoder.

Forward pass, backpropagation through time, Adam training with
teacher forcing, and two ways of starting an autoregressive rollout:
a conventional warmup prefix of true observations, or externally
supplied internal states (see the harmonics module for how those are
inferred from a short observation window).

Update rule per step, with x the scalar input and D = 4:

    i = sigmoid(W_i x + U_i h + b_i)      input gate
    f = sigmoid(W_f x + U_f h + b_f)      forget gate
    g = tanh   (W_g x + U_g h + b_g)      candidate
    o = sigmoid(W_o x + U_o h + b_o)      output gate
    c' = f * c + i * g
    h' = o * tanh(c')
    u_hat = W_dec . h' + b_dec            next-step prediction
"""

import copy
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from . import artifacts
from .exceptions import TrainingDivergedError
from .optim import Adam, PlateauHalver, TrainConfig
from .validation import check_array

MODEL_VERSION = 1
GATES = ("i", "f", "g", "o")
PARAM_KEYS = tuple(
    [f"{p}_{gate}" for gate in GATES for p in ("W", "U", "b")] + ["W_dec", "b_dec"]
)


@dataclass
class InternalState:
    """Cell and hidden vectors carried between time steps."""

    c: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, hidden_size=4):
        return cls(c=np.zeros(hidden_size), h=np.zeros(hidden_size))

    def copy(self):
        return InternalState(c=self.c.copy(), h=self.h.copy())


@dataclass
class LstmModel:
    """Parameter blocks for the four gates plus the linear decoder."""

    params: dict
    hidden_size: int = 4
    version: int = MODEL_VERSION

    def __post_init__(self):
        missing = set(PARAM_KEYS) - set(self.params)
        if missing:
            raise ValueError(f"missing parameter blocks: {sorted(missing)}")
        for key, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ValueError(f"parameter block {key!r} contains non-finite values")

    def copy(self):
        return LstmModel(
            params={k: np.array(v, copy=True) for k, v in self.params.items()},
            hidden_size=self.hidden_size,
            version=self.version,
        )


@dataclass
class RolloutRecord:
    """Predictions plus every internal state visited during a rollout."""

    predictions: np.ndarray
    states_c: np.ndarray
    states_h: np.ndarray
    warmup_len: int

    def state(self, k):
        return InternalState(c=self.states_c[k], h=self.states_h[k])

    @property
    def n_states(self):
        return self.states_c.shape[0]


def init_params(hidden_size=4, seed=0):
    """Uniform init in [-1/sqrt(D), 1/sqrt(D)] per block, seedable."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    bound = 1.0 / np.sqrt(hidden_size)
    d = hidden_size
    params = {}
    for gate in GATES:
        params[f"W_{gate}"] = rng.uniform(-bound, bound, size=d)
        params[f"U_{gate}"] = rng.uniform(-bound, bound, size=(d, d))
        params[f"b_{gate}"] = rng.uniform(-bound, bound, size=d)
    params["W_dec"] = rng.uniform(-bound, bound, size=d)
    params["b_dec"] = np.array(rng.uniform(-bound, bound))
    return params


def _step_batch(params, x, c_prev, h_prev):
    """One LSTM step for a batch: x is (B,), states are (B, D)."""
    i = expit(params["W_i"] * x[:, None] + h_prev @ params["U_i"].T + params["b_i"])
    f = expit(params["W_f"] * x[:, None] + h_prev @ params["U_f"].T + params["b_f"])
    g = np.tanh(params["W_g"] * x[:, None] + h_prev @ params["U_g"].T + params["b_g"])
    o = expit(params["W_o"] * x[:, None] + h_prev @ params["U_o"].T + params["b_o"])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return i, f, g, o, c, tc, h


def _decode(params, h):
    return h @ params["W_dec"] + params["b_dec"]


def cell_step(u_t, prev, model):
    """Advance one time step; returns the new state and the decoded prediction."""
    x = np.atleast_1d(np.asarray(u_t, dtype=float))
    *_, c, _, h = _step_batch(model.params, x, prev.c[None, :], prev.h[None, :])
    state = InternalState(c=c[0], h=h[0])
    return state, float(_decode(model.params, h[0]))


def _forward_teacher(params, X, keep_cache=False):
    """Teacher-forced forward over inputs X (B, S); returns predictions (B, S).

    With keep_cache=True also returns the per-step activations needed for
    backpropagation through time.
    """
    B, S = X.shape
    D = params["b_i"].shape[0]
    c = np.zeros((B, D))
    h = np.zeros((B, D))
    preds = np.empty((B, S))
    cache = [] if keep_cache else None
    for s in range(S):
        c_prev, h_prev = c, h
        i, f, g, o, c, tc, h = _step_batch(params, X[:, s], c_prev, h_prev)
        preds[:, s] = _decode(params, h)
        if keep_cache:
            cache.append((i, f, g, o, c_prev, tc, h_prev, o * (1.0 - tc * tc)))
    return preds, cache


def loss_and_gradients(model_or_params, sequences):
    """Teacher-forced MSE over whole sequences, plus gradients for every block.

    sequences is (B, T); inputs are columns 0..T-2, targets 1..T-1. The loss
    is the mean over batch and time of the squared one-step error, matching
    the training objective. Gradient reduction over the batch uses numpy's
    fixed summation order, so results are reproducible.
    """
    params = model_or_params.params if isinstance(model_or_params, LstmModel) else model_or_params
    U = check_array(sequences, "sequences", ndim=2)
    X, Y = U[:, :-1], U[:, 1:]
    B, S = X.shape
    preds, cache = _forward_teacher(params, X, keep_cache=True)
    err = preds - Y
    loss = float(np.mean(err * err))
    dpred = (2.0 / (B * S)) * err

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    D = params["b_i"].shape[0]
    dh_next = np.zeros((B, D))
    dc_next = np.zeros((B, D))
    for s in reversed(range(S)):
        i, f, g, o, c_prev, tc, h_prev, dh_dc_gate = cache[s]
        dp = dpred[:, s]
        grads["W_dec"] += (o * tc).T @ dp  # h = o*tc at this step
        grads["b_dec"] += dp.sum()
        dh = dp[:, None] * params["W_dec"][None, :] + dh_next
        do = dh * tc
        dc = dh * dh_dc_gate + dc_next
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dzi = di * i * (1.0 - i)
        dzf = df * f * (1.0 - f)
        dzg = dg * (1.0 - g * g)
        dzo = do * o * (1.0 - o)
        x = X[:, s]
        dh_prev = np.zeros((B, D))
        for gate, dz in zip(GATES, (dzi, dzf, dzg, dzo)):
            grads[f"W_{gate}"] += dz.T @ x
            grads[f"U_{gate}"] += dz.T @ h_prev
            grads[f"b_{gate}"] += dz.sum(axis=0)
            dh_prev += dz @ params[f"U_{gate}"]
        dh_next = dh_prev
        dc_next = dc * f
    return loss, grads


def teacher_forced_mse(model_or_params, sequences):
    """Mean squared one-step error with true inputs at every step."""
    params = model_or_params.params if isinstance(model_or_params, LstmModel) else model_or_params
    U = check_array(sequences, "sequences", ndim=2)
    preds, _ = _forward_teacher(params, U[:, :-1])
    return float(np.mean((preds - U[:, 1:]) ** 2))


def rollout(model, trajectory, warmup_len, init=None):
    """Consume a trajectory with a true-observation prefix, then feed back.

    Inputs x_0 .. x_{T-2} produce predictions for samples 1 .. T-1. The
    first warmup_len inputs are the true observations; afterwards the
    model's own previous prediction is fed back. The very first input is
    always the true u_0 (something must seed the recursion, matching the
    no-warmup protocol of feeding a single observed value). States are
    recorded after every consumed input.
    """
    u = np.asarray(trajectory.u, dtype=float)
    T = len(u)
    if warmup_len < 0 or warmup_len + 1 > T:
        raise ValueError(f"warmup_len={warmup_len} invalid for trajectory of length {T}")
    params = model.params
    D = model.hidden_size
    if init is None:
        init = InternalState.zeros(D)
    c = init.c[None, :].copy()
    h = init.h[None, :].copy()
    S = T - 1
    preds = np.empty(S)
    states_c = np.empty((S, D))
    states_h = np.empty((S, D))
    x = u[0]
    for k in range(S):
        if k > 0:
            x = u[k] if k < warmup_len else preds[k - 1]
        *_, c, _, h = _step_batch(params, np.array([x]), c, h)
        preds[k] = _decode(params, h[0])
        states_c[k] = c[0]
        states_h[k] = h[0]
    return RolloutRecord(
        predictions=preds, states_c=states_c, states_h=states_h, warmup_len=warmup_len
    )


def coldstart_rollout(model, window, init, horizon):
    """Autoregressive rollout from externally inferred internal states.

    `init` is interpreted as the mature state *after* consuming the last
    window observation, so the first prediction is simply the decoder
    applied to init.h; feedback proceeds from there. The window itself is
    only validated, not consumed.
    """
    window = check_array(window, "window", ndim=1)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    params = model.params
    D = model.hidden_size
    preds = np.empty(horizon)
    states_c = np.empty((max(horizon - 1, 0), D))
    states_h = np.empty_like(states_c)
    if horizon == 0:
        return RolloutRecord(preds, states_c, states_h, warmup_len=0)
    preds[0] = _decode(params, init.h)
    c = init.c[None, :].copy()
    h = init.h[None, :].copy()
    for j in range(1, horizon):
        *_, c, _, h = _step_batch(params, preds[j - 1 : j], c, h)
        preds[j] = _decode(params, h[0])
        states_c[j - 1] = c[0]
        states_h[j - 1] = h[0]
    return RolloutRecord(preds, states_c, states_h, warmup_len=0)


def collect_states_teacher_forced(model, sequences):
    """Run teacher-forced over (B, T) sequences consuming every sample.

    Returns (C, H) with shape (B, T, D): the state after consuming u_t for
    every t, starting from zeros.
    """
    U = check_array(sequences, "sequences", ndim=2)
    params = model.params
    B, T = U.shape
    D = model.hidden_size
    c = np.zeros((B, D))
    h = np.zeros((B, D))
    C = np.empty((B, T, D))
    H = np.empty((B, T, D))
    for t in range(T):
        *_, c, _, h = _step_batch(params, U[:, t], c, h)
        C[:, t] = c
        H[:, t] = h
    return C, H


def _train_arrays(train_u, val_u, config, hidden_size=4):
    """Adam + teacher forcing over whole-trajectory batches.

    Returns (params of the best-validation epoch, history dict). The
    learning rate is halved when the epoch training loss has not improved
    for `lr_halving_patience` consecutive epochs.
    """
    train_u = check_array(train_u, "train_u", ndim=2)
    val_u = check_array(val_u, "val_u", ndim=2)
    params = init_params(hidden_size=hidden_size, seed=config.seed)
    optimizer = Adam(params, lr=config.lr0)
    scheduler = PlateauHalver(config.lr_halving_patience)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    n = train_u.shape[0]
    best_val = np.inf
    best_params = None
    history = {"train_loss": [], "val_loss": [], "lr": []}
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = train_u[order[start : start + config.batch_size]]
            loss, grads = loss_and_gradients(params, batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch + 1}"
                )
            optimizer.step(grads)
            total += loss * batch.shape[0]
        train_loss = total / n
        val_loss = teacher_forced_mse(params, val_u)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch + 1}")
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        history["lr"].append(optimizer.lr)
        if val_loss < best_val:
            best_val = val_loss
            best_params = copy.deepcopy(params)
        scheduler.update(train_loss, optimizer)
    return best_params, history


class LstmForecaster(BaseEstimator):
    """Scalar-series forecaster around the 4-cell LSTM.

    Parameters mirror the training protocol: number of epochs, batch size
    (batches are whole trajectories), initial learning rate, plateau
    patience for halving, and the seed controlling both the weight init
    and the batch shuffling.
    """

    def __init__(self, hidden_size=4, epochs=1000, batch_size=128, lr0=5e-3,
                 lr_halving_patience=25, seed=0):
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr0 = lr0
        self.lr_halving_patience = lr_halving_patience
        self.seed = seed

    def _config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr0=self.lr0,
            lr_halving_patience=self.lr_halving_patience,
            seed=self.seed,
        )

    def fit(self, X, X_val=None):
        """Fit on rows of u-series (n_traj, T); X_val defaults to X."""
        X = check_array(X, "X", ndim=2)
        X_val = X if X_val is None else check_array(X_val, "X_val", ndim=2)
        params, history = _train_arrays(X, X_val, self._config(), self.hidden_size)
        self.model_ = LstmModel(params=params, hidden_size=self.hidden_size)
        self.history_ = history
        return self

    def predict(self, X):
        """Teacher-forced one-step predictions, shape (n_traj, T-1)."""
        X = check_array(X, "X", ndim=2)
        preds, _ = _forward_teacher(self.model_.params, X[:, :-1])
        return preds


def train(dataset, config=None, hidden_size=4):
    """Train on a Dataset per the standard protocol; returns the LstmModel."""
    config = config if config is not None else TrainConfig()
    train_u = np.stack([t.u for t in dataset.train])
    val_u = np.stack([t.u for t in dataset.val])
    params, _ = _train_arrays(train_u, val_u, config, hidden_size)
    return LstmModel(params=params, hidden_size=hidden_size)


def save_model(path, model, extra_meta=None):
    meta = {"version": model.version, "hidden_size": model.hidden_size}
    meta.update(extra_meta or {})
    arrays = {k: np.atleast_1d(model.params[k]) for k in PARAM_KEYS}
    artifacts.write_artifact(path, "lstm-model", meta, arrays)


def load_model(path):
    _, meta, arrays = artifacts.read_artifact(path, expected_kind="lstm-model")
    params = {k: arrays[k] for k in PARAM_KEYS}
    params["b_dec"] = np.array(params["b_dec"][0])
    model = LstmModel(
        params=params,
        hidden_size=int(meta["hidden_size"]),
        version=int(meta["version"]),
    )
    return model, meta
