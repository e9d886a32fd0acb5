import numpy as np
import pytest
from sklearn.base import clone

from coldstart import TrainConfig, generate_dataset
from coldstart.exceptions import TrainingDivergedError
from coldstart.lstm import (
    InternalState,
    LstmForecaster,
    LstmModel,
    PARAM_KEYS,
    cell_step,
    coldstart_rollout,
    init_params,
    load_model,
    loss_and_gradients,
    rollout,
    save_model,
    teacher_forced_mse,
    _forward_teacher,
    _train_arrays,
)


def zero_params():
    params = init_params(seed=0)
    return {k: np.zeros_like(v) for k, v in params.items()}


def test_cell_step_zero_parameters():
    model = LstmModel(params=zero_params())
    state, pred = cell_step(1.3, InternalState.zeros(), model)
    assert np.all(state.c == 0.0)
    assert np.all(state.h == 0.0)
    assert pred == 0.0


def test_cell_step_saturated_gates_preserve_cell():
    params = zero_params()
    params["b_f"] = np.full(4, 20.0)
    params["b_i"] = np.full(4, -20.0)
    model = LstmModel(params=params)
    c0 = np.array([0.3, -1.2, 0.8, 2.0])
    state, _ = cell_step(0.7, InternalState(c=c0.copy(), h=np.zeros(4)), model)
    assert np.max(np.abs(state.c - c0)) <= 1e-8


def test_gradients_match_finite_differences():
    # Oracle: central differences of an independently coded teacher-forced
    # loss evaluated in long double (float64 fd noise would swamp the
    # 1e-5 bound on near-zero gradient components).
    from oracles import lstm_fd_gradient, lstm_loss_reference

    rng = np.random.default_rng(11)
    for trial in range(3):
        params = init_params(seed=trial)
        seq = rng.uniform(0, 2, size=(2, 11))
        loss, grads = loss_and_gradients(params, seq)
        assert loss == pytest.approx(float(lstm_loss_reference(params, seq)), rel=1e-12)
        for key in PARAM_KEYS:
            gflat = grads[key].reshape(-1)
            for idx in range(gflat.size):
                fd = lstm_fd_gradient(params, seq, key, idx)
                assert abs(gflat[idx] - fd) / (abs(fd) + 1e-8) <= 1e-5


def test_hidden_state_bounded(random_model):
    state = InternalState.zeros()
    rng = np.random.default_rng(3)
    for u in rng.uniform(-1e3, 1e3, size=50):
        state, _ = cell_step(u, state, random_model)
        assert np.max(np.abs(state.h)) <= 1.0


def test_rollout_full_warmup_equals_teacher_forcing(random_model, small_dataset):
    traj = small_dataset.test[0]
    rec = rollout(random_model, traj, warmup_len=len(traj.u) - 1)
    preds, _ = _forward_teacher(random_model.params, traj.u[None, :-1])
    assert np.allclose(rec.predictions, preds[0], atol=1e-12)
    assert rec.n_states == len(traj.u) - 1


def test_rollout_zero_model_outputs_decoder_bias(small_dataset):
    params = zero_params()
    params["b_dec"] = np.array(0.7)
    model = LstmModel(params=params)
    rec = rollout(model, small_dataset.test[0], warmup_len=0)
    assert np.all(rec.predictions == 0.7)


def test_rollout_warmup_validation(random_model, small_dataset):
    traj = small_dataset.test[0]
    with pytest.raises(ValueError):
        rollout(random_model, traj, warmup_len=len(traj.u))
    with pytest.raises(ValueError):
        rollout(random_model, traj, warmup_len=-1)


def test_coldstart_rollout_empty_horizon(random_model):
    rec = coldstart_rollout(random_model, np.ones(5), InternalState.zeros(), horizon=0)
    assert rec.predictions.size == 0
    assert rec.n_states == 0


def test_coldstart_rollout_first_prediction_decodes_init(random_model):
    rng = np.random.default_rng(0)
    init = InternalState(c=rng.normal(size=4), h=rng.normal(size=4))
    rec = coldstart_rollout(random_model, np.ones(5), init, horizon=3)
    p = random_model.params
    assert rec.predictions[0] == pytest.approx(float(init.h @ p["W_dec"] + p["b_dec"]))
    # second prediction consumes the first as input
    state, pred = cell_step(rec.predictions[0], init, random_model)
    assert rec.predictions[1] == pytest.approx(pred)
    assert np.allclose(rec.states_c[0], state.c)


def test_training_improves_and_is_deterministic():
    ds = generate_dataset(8, 2, 2, seed=4, t_end=4.0)
    train_u = np.stack([t.u for t in ds.train])
    val_u = np.stack([t.u for t in ds.val])
    cfg = TrainConfig(epochs=30, batch_size=4, seed=0)
    params1, hist1 = _train_arrays(train_u, val_u, cfg)
    params2, _ = _train_arrays(train_u, val_u, cfg)
    assert hist1["train_loss"][-1] < hist1["train_loss"][0]
    for key in PARAM_KEYS:
        assert np.array_equal(params1[key], params2[key])


def test_training_divergence_raises():
    ds = generate_dataset(4, 1, 1, seed=4, t_end=4.0)
    train_u = np.stack([t.u for t in ds.train])
    val_u = np.stack([t.u for t in ds.val])
    with pytest.raises(TrainingDivergedError):
        _train_arrays(train_u, val_u, TrainConfig(epochs=3, lr0=1e160, seed=0))


def test_forecaster_sklearn_clone():
    est = LstmForecaster(epochs=3, seed=1)
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


def test_forecaster_fit_predict():
    ds = generate_dataset(6, 2, 2, seed=9, t_end=4.0)
    X = np.stack([t.u for t in ds.train])
    est = LstmForecaster(epochs=10, batch_size=4, seed=0).fit(X)
    preds = est.predict(X)
    assert preds.shape == (6, X.shape[1] - 1)
    assert np.isfinite(preds).all()


def test_model_save_load_roundtrip(tmp_path, random_model):
    path = tmp_path / "model.txt"
    save_model(path, random_model, {"note": "x"})
    back, meta = load_model(path)
    assert meta["note"] == "x"
    assert back.hidden_size == 4
    for key in PARAM_KEYS:
        assert np.array_equal(back.params[key], random_model.params[key])
    seq = np.linspace(0, 2, 12)[None, :]
    assert teacher_forced_mse(back, seq) == teacher_forced_mse(random_model, seq)
