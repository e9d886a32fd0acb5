import numpy as np
import pytest
from sklearn.base import clone

from coldstart import TrainConfig
from coldstart.latent import (
    LatentDynamics,
    build_transitions,
    load_latent,
    mlp_loss_and_gradients,
    save_latent,
    swish,
    train_latent,
    _init_mlp,
)
from coldstart.manifold import DiffusionMapEmbedding, extract_windows


@pytest.fixture(scope="module")
def small_transitions(small_dataset):
    ws = extract_windows(small_dataset.train, 5, 1)
    dm = DiffusionMapEmbedding(
        n_components=6, epsilon_scale=16.0, max_points=1200, random_state=0
    ).fit(ws)
    return build_transitions(dm, small_dataset.train, window_len=5)


def test_swish_limits():
    assert swish(0.0) == 0.0
    assert abs(swish(20.0) - 20.0) <= 1e-6
    assert abs(swish(-20.0)) <= 1e-6


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    params = _init_mlp([2, 8, 8, 2], seed=5)
    X = rng.normal(size=(7, 2))
    Y = rng.normal(size=(7, 2))
    _, grads = mlp_loss_and_gradients(params, X, Y, 3)
    step = 1e-5
    for key in params:
        flat = params[key].reshape(-1)
        gflat = grads[key].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            lp, _ = mlp_loss_and_gradients(params, X, Y, 3)
            flat[idx] = orig - step
            lm, _ = mlp_loss_and_gradients(params, X, Y, 3)
            flat[idx] = orig
            fd = (lp - lm) / (2 * step)
            assert abs(gflat[idx] - fd) / (abs(fd) + 1e-8) <= 1e-5


def test_build_transitions_counts_and_consistency(small_transitions, small_dataset):
    trans = small_transitions
    T = len(small_dataset.train[0].u)
    per_traj = T - 5  # 97 windows -> 96 consecutive pairs
    assert len(trans) == len(small_dataset.train) * per_traj
    rows = np.flatnonzero(trans.traj_ids == 3)
    # second element of pair t equals first element of pair t+1
    assert np.array_equal(trans.phi_next[rows[:-1]], trans.phi_t[rows[1:]])


def test_transitions_inside_inflated_bbox(small_transitions):
    trans = small_transitions
    lo = trans.phi_t.min(axis=0)
    hi = trans.phi_t.max(axis=0)
    pad = 0.1 * (hi - lo)
    assert np.all(trans.phi_next >= lo - pad)
    assert np.all(trans.phi_next <= hi + pad)


def test_identity_dynamics_learned():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(600, 2))
    est = LatentDynamics(hidden_sizes=(16, 16), epochs=200, batch_size=64,
                         lr0=5e-3, seed=0).fit(X, X)
    pred = est.predict(X)
    assert np.max(np.abs(pred - X)) <= 1e-2
    assert est.history_["train_loss"][-1] < est.history_["train_loss"][0]


def test_rollout_shapes_and_horizon_zero():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(200, 2))
    est = LatentDynamics(hidden_sizes=(8,), epochs=20, seed=0).fit(X, X)
    phi0 = np.array([0.1, -0.2])
    out = est.rollout(phi0, 0)
    assert out.shape == (1, 2)
    assert np.array_equal(out[0], phi0)
    out = est.rollout(phi0, 5)
    assert out.shape == (6, 2)


def test_latent_deterministic(small_transitions):
    cfg = TrainConfig(epochs=5, seed=4)
    a = train_latent(small_transitions, cfg)
    b = train_latent(small_transitions, cfg)
    for key in a.params_:
        assert np.array_equal(a.params_[key], b.params_[key])


def test_latent_group_split_excludes_val_trajectories(small_transitions):
    est = LatentDynamics(epochs=1, seed=0, val_fraction=0.25)
    train_mask, val_mask = est._split(len(small_transitions), small_transitions.traj_ids)
    val_ids = set(small_transitions.traj_ids[val_mask].tolist())
    train_ids = set(small_transitions.traj_ids[train_mask].tolist())
    assert val_ids and train_ids
    assert val_ids.isdisjoint(train_ids)


def test_latent_sklearn_clone():
    est = LatentDynamics(epochs=2, seed=1)
    assert clone(est).get_params() == est.get_params()


def test_latent_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, size=(150, 2))
    est = LatentDynamics(hidden_sizes=(8, 8), epochs=10, seed=0).fit(X, 0.9 * X)
    path = tmp_path / "g.txt"
    save_latent(path, est, {"dmap_sha256": "a" * 64})
    back, meta = load_latent(path)
    assert meta["dmap_sha256"] == "a" * 64
    assert np.array_equal(back.predict(X[:9]), est.predict(X[:9]))
    assert np.array_equal(back.rollout(X[0], 4), est.rollout(X[0], 4))
