"""One-step latent dynamics on the embedding: phi_{t+1} = g(phi_t).

g is a fully connected network (three hidden layers of 64 units, swish
activations) trained by Adam on consecutive-window coordinate pairs, with
inputs and outputs standardized by training-set statistics.
"""

import copy
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin

from . import artifacts
from .exceptions import TrainingDivergedError
from .manifold import extract_windows
from .optim import Adam, PlateauHalver, TrainConfig
from .validation import check_array, check_fitted

LATENT_VERSION = 1


def swish(x):
    """x * sigmoid(x)."""
    return x * expit(x)


def swish_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass
class TransitionSet:
    """Coordinate pairs one sampling step apart, tagged by source trajectory."""

    phi_t: np.ndarray  # (P, d)
    phi_next: np.ndarray  # (P, d)
    traj_ids: np.ndarray  # (P,)

    def __len__(self):
        return self.phi_t.shape[0]


def build_transitions(dmap, trajectories, window_len=5):
    """Embed every window of each trajectory and pair consecutive ones.

    Coordinates are obtained by Nystrom restriction throughout; on windows
    that happen to be in the diffusion map's training set this matches the
    stored eigenvector rows to solver precision.
    """
    ws = extract_windows(trajectories, window_len, stride=1)
    phis = dmap.independent_coords(ws.windows)
    phi_t, phi_next, ids = [], [], []
    for tid in np.unique(ws.provenance[:, 0]):
        rows = np.flatnonzero(ws.provenance[:, 0] == tid)
        order = rows[np.argsort(ws.provenance[rows, 1])]
        phi_t.append(phis[order[:-1]])
        phi_next.append(phis[order[1:]])
        ids.append(np.full(len(order) - 1, tid, dtype=np.int64))
    return TransitionSet(
        phi_t=np.concatenate(phi_t),
        phi_next=np.concatenate(phi_next),
        traj_ids=np.concatenate(ids),
    )


def _init_mlp(layer_sizes, seed):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11]))
    params = {}
    for k in range(len(layer_sizes) - 1):
        fan_in = layer_sizes[k]
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, layer_sizes[k + 1]))
        params[f"b{k}"] = rng.uniform(-bound, bound, size=layer_sizes[k + 1])
    return params


def _mlp_forward(params, X, n_layers, keep_cache=False):
    a = X
    cache = [] if keep_cache else None
    for k in range(n_layers - 1):
        z = a @ params[f"W{k}"] + params[f"b{k}"]
        if keep_cache:
            cache.append((a, z))
        a = swish(z)
    out = a @ params[f"W{n_layers - 1}"] + params[f"b{n_layers - 1}"]
    if keep_cache:
        cache.append((a, None))
    return out, cache


def mlp_loss_and_gradients(params, X, Y, n_layers):
    """Mean squared error over all outputs plus gradients for every layer."""
    out, cache = _mlp_forward(params, X, n_layers, keep_cache=True)
    err = out - Y
    loss = float(np.mean(err * err))
    grads = {}
    delta = (2.0 / err.size) * err
    for k in reversed(range(n_layers)):
        a_in = cache[k][0]
        grads[f"W{k}"] = a_in.T @ delta
        grads[f"b{k}"] = delta.sum(axis=0)
        if k > 0:
            da = delta @ params[f"W{k}"].T
            delta = da * swish_grad(cache[k - 1][1])
    return loss, grads


class LatentDynamics(BaseEstimator, RegressorMixin):
    """Feed-forward one-step map on the embedding coordinates.

    fit(X, Y) expects current coordinates and their one-step successors;
    an optional `groups` array (source trajectory ids) drives the
    validation split so that no trajectory contributes to both sides.
    """

    def __init__(self, hidden_sizes=(64, 64, 64), epochs=1000, batch_size=128,
                 lr0=5e-3, lr_halving_patience=25, seed=0, val_fraction=0.1):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr0 = lr0
        self.lr_halving_patience = lr_halving_patience
        self.seed = seed
        self.val_fraction = val_fraction

    def _split(self, n, groups):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 12]))
        if groups is None:
            n_val = max(1, int(round(self.val_fraction * n)))
            val_mask = np.zeros(n, dtype=bool)
            val_mask[rng.choice(n, size=n_val, replace=False)] = True
            return ~val_mask, val_mask
        unique = np.unique(groups)
        n_val = max(1, int(round(self.val_fraction * unique.size)))
        val_groups = rng.choice(unique, size=n_val, replace=False)
        val_mask = np.isin(groups, val_groups)
        if val_mask.all():
            raise ValueError("validation split consumed every sample")
        return ~val_mask, val_mask

    def fit(self, X, Y, groups=None):
        X = check_array(X, "X", ndim=2)
        Y = check_array(Y, "Y", ndim=2)
        if X.shape != Y.shape:
            raise ValueError("X and Y must have identical shapes")
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr0=self.lr0,
            lr_halving_patience=self.lr_halving_patience,
            seed=self.seed,
        )
        train_mask, val_mask = self._split(X.shape[0], groups)
        self.x_mean_ = X[train_mask].mean(axis=0)
        self.x_std_ = np.where(X[train_mask].std(axis=0) > 1e-12,
                               X[train_mask].std(axis=0), 1.0)
        self.y_mean_ = Y[train_mask].mean(axis=0)
        self.y_std_ = np.where(Y[train_mask].std(axis=0) > 1e-12,
                               Y[train_mask].std(axis=0), 1.0)
        Xs = (X - self.x_mean_) / self.x_std_
        Ys = (Y - self.y_mean_) / self.y_std_
        Xtr, Ytr = Xs[train_mask], Ys[train_mask]
        Xva, Yva = Xs[val_mask], Ys[val_mask]

        layer_sizes = [X.shape[1], *self.hidden_sizes, Y.shape[1]]
        self.n_layers_ = len(layer_sizes) - 1
        params = _init_mlp(layer_sizes, self.seed)
        optimizer = Adam(params, lr=config.lr0)
        scheduler = PlateauHalver(config.lr_halving_patience)
        shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 13]))
        n = Xtr.shape[0]
        best_val = np.inf
        best_params = None
        history = {"train_loss": [], "val_loss": [], "lr": []}
        for epoch in range(config.epochs):
            order = shuffle_rng.permutation(n)
            total = 0.0
            for start in range(0, n, config.batch_size):
                rows = order[start : start + config.batch_size]
                loss, grads = mlp_loss_and_gradients(params, Xtr[rows], Ytr[rows], self.n_layers_)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite loss at epoch {epoch + 1}")
                optimizer.step(grads)
                total += loss * rows.size
            train_loss = total / n
            out_val, _ = _mlp_forward(params, Xva, self.n_layers_)
            val_loss = float(np.mean((out_val - Yva) ** 2))
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch + 1}")
            history["train_loss"].append(train_loss)
            history["val_loss"].append(val_loss)
            history["lr"].append(optimizer.lr)
            if val_loss < best_val:
                best_val = val_loss
                best_params = copy.deepcopy(params)
            scheduler.update(train_loss, optimizer)
        self.params_ = best_params
        self.history_ = history
        return self

    def predict(self, X):
        """One-step successors in raw (unstandardized) coordinates."""
        check_fitted(self, "params_")
        X = check_array(X, "X", ndim=2)
        Xs = (X - self.x_mean_) / self.x_std_
        out, _ = _mlp_forward(self.params_, Xs, self.n_layers_)
        return out * self.y_std_ + self.y_mean_

    def one_step_mse_standardized(self, X, Y):
        """Mean squared one-step error in standardized output units."""
        check_fitted(self, "params_")
        pred = (self.predict(X) - self.y_mean_) / self.y_std_
        truth = (check_array(Y, "Y", ndim=2) - self.y_mean_) / self.y_std_
        return float(np.mean((pred - truth) ** 2))

    def rollout(self, phi0, horizon):
        """Iterate g from phi0; returns (horizon + 1, d) including phi0."""
        check_fitted(self, "params_")
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        phi0 = check_array(phi0, "phi0", ndim=1)
        out = np.empty((horizon + 1, phi0.shape[0]))
        out[0] = phi0
        for k in range(horizon):
            out[k + 1] = self.predict(out[k][None, :])[0]
        return out


def train_latent(transitions, config=None, **kwargs):
    """Train the one-step map from a TransitionSet; returns the estimator."""
    config = config if config is not None else TrainConfig()
    model = LatentDynamics(
        epochs=config.epochs,
        batch_size=config.batch_size,
        lr0=config.lr0,
        lr_halving_patience=config.lr_halving_patience,
        seed=config.seed,
        **kwargs,
    )
    return model.fit(transitions.phi_t, transitions.phi_next, groups=transitions.traj_ids)


def rollout_latent(model, phi0, horizon):
    return model.rollout(phi0, horizon)


def save_latent(path, model, extra_meta=None):
    check_fitted(model, "params_")
    meta = {
        "version": LATENT_VERSION,
        "hidden_sizes": ",".join(str(h) for h in model.hidden_sizes),
        "n_layers": model.n_layers_,
    }
    meta.update(extra_meta or {})
    arrays = {
        "x_mean": model.x_mean_,
        "x_std": model.x_std_,
        "y_mean": model.y_mean_,
        "y_std": model.y_std_,
    }
    for k in range(model.n_layers_):
        arrays[f"W{k}"] = model.params_[f"W{k}"]
        arrays[f"b{k}"] = model.params_[f"b{k}"]
    artifacts.write_artifact(path, "latent-dynamics", meta, arrays)


def load_latent(path):
    _, meta, arrays = artifacts.read_artifact(path, expected_kind="latent-dynamics")
    hidden = tuple(int(h) for h in meta["hidden_sizes"].split(","))
    model = LatentDynamics(hidden_sizes=hidden)
    model.n_layers_ = int(meta["n_layers"])
    model.params_ = {}
    for k in range(model.n_layers_):
        model.params_[f"W{k}"] = arrays[f"W{k}"]
        model.params_[f"b{k}"] = arrays[f"b{k}"]
    model.x_mean_ = arrays["x_mean"]
    model.x_std_ = arrays["x_std"]
    model.y_mean_ = arrays["y_mean"]
    model.y_std_ = arrays["y_std"]
    return model, meta
