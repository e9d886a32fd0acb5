"""Experiment orchestration: initialization comparison, synchronization
demo, state-manifold attraction report, and CSV plot-data dumps.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.distance import cdist

from . import artifacts, harmonics, lstm
from .dynamics import SUBSTEPS
from .exceptions import LineageError
from .validation import check_array

LONG_HORIZON_START = 20  # sample index where the long-horizon window begins
PHASE_TAIL = 50  # samples used for the circular phase metric


def write_csv(path, header, rows):
    """Deterministic CSV writer: floats via repr, ints verbatim."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [
                repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                for x in row
            ]
            fh.write(",".join(cells) + "\n")


def long_horizon_mse(pred_full, u_true, start=LONG_HORIZON_START):
    """Mean squared error over samples start..end where predictions exist."""
    pred_full = np.asarray(pred_full, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    mask = ~np.isnan(pred_full)
    mask[:start] = False
    if not mask.any():
        raise ValueError("no predictions inside the long-horizon window")
    return float(np.mean((pred_full[mask] - u_true[mask]) ** 2))


def phase_error(pred_tail, true_tail):
    """Circular lag (in samples) maximizing tail cross-correlation.

    Positive k means the prediction lags the truth by k samples; a series
    against itself returns 0, against itself rolled by k returns k. Ties
    resolve to the smallest |lag|.
    """
    p = np.asarray(pred_tail, dtype=float)
    t = np.asarray(true_tail, dtype=float)
    if p.shape != t.shape:
        raise ValueError("tails must have equal length")
    n = p.size
    pc = p - p.mean()
    tc = t - t.mean()
    lags = np.arange(-(n // 2), n - n // 2)
    scores = np.array([np.dot(np.roll(pc, -k), tc) for k in lags])
    top = scores.max()
    near = lags[scores >= top - 1e-9 * max(1.0, abs(top))]
    return int(min(near, key=lambda k: (abs(k), k)))


def aligned_prediction(u_len, preds, first_index):
    """Full-length prediction array, NaN where no prediction exists."""
    full = np.full(u_len, np.nan)
    full[first_index : first_index + len(preds)] = preds
    return full


def tail_phase_error(pred_full, u_true, tail=PHASE_TAIL):
    """Phase error over the trailing samples covered by predictions."""
    valid = ~np.isnan(pred_full)
    run = 0
    for flag in valid[::-1]:
        if not flag:
            break
        run += 1
    if run < 2:
        raise ValueError("no trailing predictions to compare phases on")
    k = min(tail, run)
    return phase_error(pred_full[-k:], np.asarray(u_true, dtype=float)[-k:])


@dataclass
class ComparisonRow:
    traj_index: int
    strategy: str
    long_mse: float
    phase_error: int


@dataclass
class ComparisonReport:
    rows: list
    aggregates: dict
    config: dict

    def rows_for(self, strategy):
        return [r for r in self.rows if r.strategy == strategy]


@dataclass
class ExperimentConfig:
    """Paths plus evaluation settings for the comparison experiment."""

    data_dir: str
    model_path: str
    dmap_path: str
    gh_path: str
    out_dir: str
    warmup_lens: tuple = (0, 5, 25, 50)
    window_len: int = 5
    seed: int = 0
    latent_path: str | None = None
    dmap10_path: str | None = None


def verify_lineage(meta, expected_paths):
    """Check embedded upstream hashes against the files actually supplied."""
    for name, path in expected_paths.items():
        key = f"{name}_sha256"
        if key not in meta:
            raise LineageError(f"artifact metadata lacks {key}; cannot verify lineage")
        actual = artifacts.sha256_file(path)
        if meta[key] != actual:
            raise LineageError(
                f"lineage mismatch for {name}: artifact was built against "
                f"{meta[key][:12]}..., supplied file hashes to {actual[:12]}..."
            )


def compare_initialization(model, dmap, gh, test_trajs, warmup_lens=(0, 5, 25, 50),
                           window_len=5, eval_offset=None, config_echo=None):
    """Long-horizon error and phase error per test trajectory and strategy.

    Two experiment families share the report. The warmup-N strategies roll
    out from the trajectory start with N teacher-forced steps (the warmup
    degradation experiment). The cold start infers mature states from the
    window ending at `eval_offset` and is paired with `warmup-window`, a
    rollout that consumes exactly the same window_len observations from a
    zero state: the identical-budget baseline.

    eval_offset defaults to maturity (10) + window_len, the earliest index
    at which the whole window lies past the synchronization threshold;
    inferred mature states are not defined for younger windows.
    """
    if eval_offset is None:
        eval_offset = 10 + window_len
    t0 = int(eval_offset)
    rows = []
    strategies = [f"warmup-{w}" for w in warmup_lens] + ["warmup-window", "coldstart"]
    windows = np.stack([t.u[t0 - window_len + 1 : t0 + 1] for t in test_trajs])
    C0, H0 = harmonics.infer_states(dmap, gh, windows)

    def add_row(i, strategy, full, u_true):
        rows.append(ComparisonRow(
            traj_index=i,
            strategy=strategy,
            long_mse=long_horizon_mse(full, u_true),
            phase_error=tail_phase_error(full, u_true),
        ))

    for i, traj in enumerate(test_trajs):
        T = len(traj.u)
        if t0 + 1 >= T or t0 - window_len + 1 < 0:
            raise ValueError(f"eval_offset={t0} out of range for trajectory {i}")
        for w in warmup_lens:
            rec = lstm.rollout(model, traj, warmup_len=w)
            add_row(i, f"warmup-{w}", aligned_prediction(T, rec.predictions, 1), traj.u)
        sub = type(traj)(dt=traj.dt, u=traj.u[t0 - window_len + 1 :])
        rec = lstm.rollout(model, sub, warmup_len=window_len)
        add_row(i, "warmup-window",
                aligned_prediction(T, rec.predictions, t0 - window_len + 2), traj.u)
        init = lstm.InternalState(c=C0[i], h=H0[i])
        rec = lstm.coldstart_rollout(model, windows[i], init, horizon=T - 1 - t0)
        add_row(i, "coldstart", aligned_prediction(T, rec.predictions, t0 + 1), traj.u)

    aggregates = {}
    for strat in strategies:
        mses = np.array([r.long_mse for r in rows if r.strategy == strat])
        phases = np.array([abs(r.phase_error) for r in rows if r.strategy == strat])
        aggregates[strat] = {
            "mean_long_mse": float(mses.mean()),
            "median_long_mse": float(np.median(mses)),
            "median_abs_phase_error": float(np.median(phases)),
        }
    return ComparisonReport(rows=rows, aggregates=aggregates, config=config_echo or {})


def save_comparison(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "comparison.csv")
    write_csv(
        report_path,
        ["traj_index", "strategy", "long_mse", "phase_error"],
        [(r.traj_index, r.strategy, r.long_mse, r.phase_error) for r in report.rows],
    )
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(
            {"aggregates": report.aggregates, "config": report.config},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    return report_path, summary_path


@dataclass
class SyncDemoResult:
    times: np.ndarray
    e1: np.ndarray
    v_nn: np.ndarray


def sync_error_demo(params, v_nn0, trajectory):
    """Drive the surrogate hidden variable with observed u and track v - v_nn.

    The surrogate obeys dv_nn/dt = b u(t) - u(t)^2 v_nn with u(t) the cubic
    interpolant of the trajectory's samples; the result reports the
    synchronization error e1 = v - v_nn at the sample times.
    """
    if trajectory.v is None:
        raise ValueError("sync demo needs a trajectory carrying the hidden variable")
    times = trajectory.times
    u_spline = CubicSpline(times, trajectory.u)
    b = params.b
    h = trajectory.dt / SUBSTEPS
    n_steps = (len(times) - 1) * SUBSTEPS
    # Forcing evaluated once on the half-step grid covering all RK4 stages.
    u_fine = u_spline(np.arange(2 * n_steps + 1) * (h / 2.0))
    v_nn = np.empty(len(times))
    v_nn[0] = float(v_nn0)
    y = float(v_nn0)
    for k in range(1, len(times)):
        base = (k - 1) * SUBSTEPS
        for s in range(SUBSTEPS):
            j = 2 * (base + s)
            u0, um, u1 = u_fine[j], u_fine[j + 1], u_fine[j + 2]
            k1 = b * u0 - u0 * u0 * y
            k2 = b * um - um * um * (y + 0.5 * h * k1)
            k3 = b * um - um * um * (y + 0.5 * h * k2)
            k4 = b * u1 - u1 * u1 * (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        v_nn[k] = y
    return SyncDemoResult(times=times, e1=trajectory.v - v_nn, v_nn=v_nn)


@dataclass
class StateManifoldReport:
    """No-warmup rollouts plus their distance to the mature state cloud.

    The time axis counts consumed inputs: row t = 0 is the shared zero
    initialization, row t = k the state after k autoregressive inputs.
    """

    states_c: np.ndarray  # (n_rollouts, T, D)
    states_h: np.ndarray
    dist_to_cloud: np.ndarray  # (n_rollouts, T)
    dist_median: np.ndarray  # (T,)


def state_manifold_report(model, trajectories, mature_c, n_rollouts=25, max_cloud=20000):
    mature_c = check_array(mature_c, "mature_c", ndim=2)
    if len(trajectories) < n_rollouts:
        raise ValueError(f"need at least {n_rollouts} trajectories")
    stride = max(1, mature_c.shape[0] // max_cloud)
    cloud = mature_c[::stride]
    D = model.hidden_size
    T = len(trajectories[0].u)
    states_c = np.zeros((n_rollouts, T, D))
    states_h = np.zeros_like(states_c)
    for i in range(n_rollouts):
        rec = lstm.rollout(model, trajectories[i], warmup_len=0)
        states_c[i, 1:] = rec.states_c
        states_h[i, 1:] = rec.states_h
    flat = states_c.reshape(-1, D)
    dists = np.empty(flat.shape[0])
    for start in range(0, flat.shape[0], 4096):
        stop = min(start + 4096, flat.shape[0])
        dists[start:stop] = cdist(flat[start:stop], cloud).min(axis=1)
    dist = dists.reshape(n_rollouts, T)
    return StateManifoldReport(
        states_c=states_c,
        states_h=states_h,
        dist_to_cloud=dist,
        dist_median=np.median(dist, axis=0),
    )


def save_state_manifold_report(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    n, T, D = report.states_c.shape
    rows = []
    for i in range(n):
        for t in range(T):
            rows.append((i, t, *report.states_c[i, t], *report.states_h[i, t],
                         report.dist_to_cloud[i, t]))
    path = os.path.join(out_dir, "state_rollouts.csv")
    c_cols = [f"c{k + 1}" for k in range(D)]
    h_cols = [f"h{k + 1}" for k in range(D)]
    write_csv(path, ["traj", "t", *c_cols, *h_cols, "dist_to_cloud"], rows)
    med_path = os.path.join(out_dir, "state_distance_median.csv")
    write_csv(med_path, ["t", "median_dist"], list(enumerate(report.dist_median)))
    return path, med_path


def reproduce_figures(dataset, model, dmap5, dmap10, gh, latent_model, out_dir,
                      warmup_lens=(50, 25, 5, 0), window_len=5, eval_offset=None,
                      seed=0):
    """Write one CSV of plot data per figure panel; returns the file list.

    Deterministic given the artifacts and seed: every stochastic choice
    below (none at present) would have to draw from `seed`.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    test = dataset.test
    T = len(test[0].u)

    # Phase portrait + sampled series for three initial conditions.
    rows = []
    for i, traj in enumerate(test[:3]):
        for k in range(T):
            rows.append((i, traj.times[k], traj.u[k], traj.v[k]))
    path = os.path.join(out_dir, "fig2_trajectories.csv")
    write_csv(path, ["traj", "t", "u", "v"], rows)
    written.append(path)

    # Rollouts at decreasing warmup on one held-out trajectory.
    demo = test[0]
    for w in warmup_lens:
        rec = lstm.rollout(model, demo, warmup_len=w)
        full = aligned_prediction(T, rec.predictions, 1)
        rows = [
            (demo.times[k], demo.u[k],
             full[k] if not np.isnan(full[k]) else "",
             int(k < max(w, 1)))
            for k in range(T)
        ]
        path = os.path.join(out_dir, f"fig3_warmup{w}.csv")
        write_csv(path, ["t", "u_true", "u_pred", "is_warmup"], rows)
        written.append(path)

    # The embedded window manifold, colored by the first window value.
    idx = dmap10.independent_indices_[:2]
    phis = dmap10.eigenvectors_[:, idx]
    rows = [
        (phis[r, 0], phis[r, 1] if len(idx) > 1 else 0.0, dmap10.X_fit_[r, 0])
        for r in range(phis.shape[0])
    ]
    path = os.path.join(out_dir, "fig4_embedding.csv")
    write_csv(path, ["phi1", "phi2", "u1_color"], rows)
    written.append(path)

    # Internal-state clouds from 25 cold (zero-state, no-warmup) rollouts.
    mature = harmonics.collect_mature_states(model, dataset.train, window_len=window_len)
    report = state_manifold_report(
        model, test, mature.targets[:, : model.hidden_size],
        n_rollouts=min(25, len(test)),
    )
    rows_c, rows_h = [], []
    for i in range(report.states_c.shape[0]):
        for t in range(report.states_c.shape[1]):
            rows_c.append((i, t, *report.states_c[i, t]))
            rows_h.append((i, t, *report.states_h[i, t]))
    path = os.path.join(out_dir, "fig5_cell_states.csv")
    write_csv(path, ["traj", "t", "c1", "c2", "c3", "c4"], rows_c)
    written.append(path)
    path = os.path.join(out_dir, "fig9_hidden_states.csv")
    write_csv(path, ["traj", "t", "h1", "h2", "h3", "h4"], rows_h)
    written.append(path)

    # Warmup vs cold start on the same five-observation budget, with the
    # shared window at the first index past the synchronization threshold.
    if eval_offset is None:
        eval_offset = 10 + window_len
    t0 = int(eval_offset)
    window = demo.u[t0 - window_len + 1 : t0 + 1]
    sub = type(demo)(dt=demo.dt, u=demo.u[t0 - window_len + 1 :])
    warm = lstm.rollout(model, sub, warmup_len=window_len)
    warm_full = aligned_prediction(T, warm.predictions, t0 - window_len + 2)
    init = harmonics.coldstart_states(dmap5, gh, window)
    cold = lstm.coldstart_rollout(model, window, init, horizon=T - 1 - t0)
    cold_full = aligned_prediction(T, cold.predictions, t0 + 1)
    rows = [
        (demo.times[k], demo.u[k],
         warm_full[k] if not np.isnan(warm_full[k]) else "",
         cold_full[k] if not np.isnan(cold_full[k]) else "",
         int(t0 - window_len + 1 <= k <= t0))
        for k in range(T)
    ]
    path = os.path.join(out_dir, "fig6_coldstart_vs_warmup.csv")
    write_csv(path, ["t", "u_true", "u_warmup", "u_coldstart", "is_window"], rows)
    written.append(path)

    # Latent one-step model rolled out against the embedded truth.
    ws = [demo.u[s : s + window_len] for s in range(0, T - window_len + 1)]
    true_phi = dmap5.independent_coords(np.asarray(ws))
    pred_phi = latent_model.rollout(true_phi[0], horizon=true_phi.shape[0] - 1)
    rows = [
        (k, true_phi[k, 0], true_phi[k, 1], pred_phi[k, 0], pred_phi[k, 1])
        for k in range(true_phi.shape[0])
    ]
    path = os.path.join(out_dir, "fig7_latent_rollout.csv")
    write_csv(path, ["step", "phi1_true", "phi2_true", "phi1_pred", "phi2_pred"], rows)
    written.append(path)

    # Geometric-harmonics interpolation quality on held-out trajectories.
    mature_val = harmonics.collect_mature_states(model, dataset.val, window_len=window_len)
    phis_val = dmap5.independent_coords(mature_val.windows)
    pred_states = gh.predict(phis_val)
    D = model.hidden_size
    rows = [
        (phis_val[r, 0], phis_val[r, 1],
         *mature_val.targets[r, :D], *pred_states[r, :D])
        for r in range(phis_val.shape[0])
    ]
    path = os.path.join(out_dir, "fig8_state_interpolation.csv")
    header = (["phi1", "phi2"]
              + [f"c{k + 1}_true" for k in range(D)]
              + [f"c{k + 1}_pred" for k in range(D)])
    write_csv(path, header, rows)
    written.append(path)

    report = compare_initialization(
        model, dmap5, gh, test,
        warmup_lens=tuple(sorted(warmup_lens)),
        window_len=window_len,
        eval_offset=t0,
        config_echo={"warmup_lens": sorted(warmup_lens), "window_len": window_len,
                     "eval_offset": t0, "seed": seed},
    )
    path, summary = save_comparison(report, out_dir)
    written.extend([path, summary])
    return written
