"""Command-line interface.

Subcommands cover the full pipeline: generate-data, train-lstm, rollout,
fit-manifold, restrict, fit-gh, coldstart, impute, compare-init,
train-latent, rollout-latent, sync-demo, reproduce-figures.

Global flags: --seed, --out, and --config FILE pointing at a `key = value`
text file whose entries override the corresponding command-line flags.
Exit codes: 0 success, 2 configuration or lineage error, 3 numerical
failure.
"""

import argparse
import os
import sys

import numpy as np

from . import artifacts, harmonics, harness, latent, lstm, manifold
from .dynamics import BrusselatorParams, generate_dataset, integrate_and_sample
from .exceptions import ConfigError, LineageError, NumericalError
from .optim import TrainConfig


def _parse_floats(text):
    try:
        return np.array([float(x) for x in text.split(",") if x.strip() != ""])
    except ValueError as exc:
        raise ConfigError(f"could not parse float list {text!r}: {exc}") from exc


def _parse_ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"could not parse integer list {text!r}: {exc}") from exc


def _read_csv_matrix(path):
    """Small float-CSV reader; returns (header list, 2-d array)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [
            [float(x) for x in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    return header, np.asarray(rows, dtype=float).reshape(len(rows), len(header))


def _apply_config_file(args):
    """Override parsed flags from a `key = value` file (keys use - or _)."""
    if not getattr(args, "config", None):
        return args
    if not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    with open(args.config) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{args.config}:{lineno}: expected key = value")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if not hasattr(args, key):
                raise ConfigError(f"{args.config}:{lineno}: unknown option {key!r}")
            current = getattr(args, key)
            try:
                if isinstance(current, bool):
                    value = value.lower() in ("1", "true", "yes")
                elif isinstance(current, int):
                    value = int(value)
                elif isinstance(current, float):
                    value = float(value)
            except ValueError as exc:
                raise ConfigError(f"{args.config}:{lineno}: bad value for {key}: {exc}") from exc
            setattr(args, key, value)
    return args


def _require_out(args):
    if not args.out:
        raise ConfigError("--out is required")
    return args.out


def _load_dataset(args):
    if not args.data:
        raise ConfigError("--data is required")
    return artifacts.load_dataset(args.data)


def cmd_generate_data(args):
    out = _require_out(args)
    dataset = generate_dataset(
        n_train=args.n_train, n_val=args.n_val, n_test=args.n_test,
        seed=args.seed, t_end=args.t_end, dt_sample=args.dt,
    )
    manifest = artifacts.save_dataset(out, dataset)
    print(f"wrote {len(dataset)} trajectories to {out} (manifest {manifest})")


def cmd_train_lstm(args):
    out = _require_out(args)
    dataset = _load_dataset(args)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr0=args.lr,
                         lr_halving_patience=args.patience, seed=args.seed)
    model = lstm.train(dataset, config)
    lstm.save_model(out, model, {"manifest_sha256": artifacts.manifest_hash(args.data)})
    test_u = np.stack([t.u for t in dataset.test])
    mse = lstm.teacher_forced_mse(model, test_u)
    print(f"wrote {out}; teacher-forced test MSE = {mse:.3e}")


def cmd_rollout(args):
    out = _require_out(args)
    model, _ = lstm.load_model(args.model)
    traj = artifacts.load_trajectory_csv(args.traj)
    rec = lstm.rollout(model, traj, warmup_len=args.warmup)
    rows = []
    for k in range(len(rec.predictions)):
        rows.append((traj.times[k + 1], traj.u[k + 1], rec.predictions[k],
                     *rec.states_c[k], *rec.states_h[k]))
    header = ["t", "u_true", "u_pred"] + [f"c{i + 1}" for i in range(model.hidden_size)] \
        + [f"h{i + 1}" for i in range(model.hidden_size)]
    harness.write_csv(out, header, rows)
    print(f"wrote {out}")


def cmd_fit_manifold(args):
    out = _require_out(args)
    dataset = _load_dataset(args)
    split = dataset.splits.get(args.split)
    if split is None:
        raise ConfigError(f"unknown split {args.split!r}")
    ws = manifold.extract_windows(split, args.window_len, args.stride)
    dmap = manifold.DiffusionMapEmbedding(
        n_components=args.n_eig, epsilon_scale=args.epsilon_scale, alpha=args.alpha,
        max_points=args.max_points, independence_threshold=args.threshold,
        random_state=args.seed,
    ).fit(ws)
    manifold.save_dmap(out, dmap, window_len=args.window_len,
                       extra_meta={"manifest_sha256": artifacts.manifest_hash(args.data)})
    kept = dmap.independent_indices_
    print(f"wrote {out}; epsilon = {dmap.epsilon_:.4g}, independent coords = {kept}")


def cmd_restrict(args):
    out = _require_out(args)
    dmap, _ = manifold.load_dmap(args.dmap)
    window = _parse_floats(args.window)
    coords = dmap.independent_coords(window[None, :])[0]
    harness.write_csv(out, [f"phi{i + 1}" for i in range(coords.size)], [tuple(coords)])
    print(f"wrote {out}")


def cmd_fit_gh(args):
    out = _require_out(args)
    dataset = _load_dataset(args)
    dmap, dmap_meta = manifold.load_dmap(args.dmap)
    model, _ = lstm.load_model(args.model)
    window_len = int(dmap_meta["window_len"])
    table = harmonics.collect_mature_states(
        model, dataset.train, window_len=window_len, maturity=args.maturity
    )
    gh = harmonics.fit_state_map(
        dmap, table, epsilon_scale=args.epsilon_scale, delta=args.delta,
        max_points=args.max_points, seed=args.seed,
    )
    harmonics.save_gh(out, gh, {
        "dmap_sha256": artifacts.sha256_file(args.dmap),
        "model_sha256": artifacts.sha256_file(args.model),
        "maturity": args.maturity,
        "window_len": window_len,
    })
    print(f"wrote {out}; kept {gh.sigmas_.size} basis functions "
          f"(epsilon* = {gh.epsilon_:.4g})")


def cmd_coldstart(args):
    out = _require_out(args)
    dmap, _ = manifold.load_dmap(args.dmap)
    gh, gh_meta = harmonics.load_gh(args.gh)
    harness.verify_lineage(gh_meta, {"dmap": args.dmap})
    window = _parse_floats(args.window)
    state = harmonics.coldstart_states(dmap, gh, window)
    d = state.c.size
    header = [f"c{i + 1}" for i in range(d)] + [f"h{i + 1}" for i in range(d)]
    harness.write_csv(out, header, [tuple(np.concatenate([state.c, state.h]))])
    print(f"wrote {out}")


def cmd_impute(args):
    out = _require_out(args)
    dmap, _ = manifold.load_dmap(args.dmap)
    m_header, m_rows = _read_csv_matrix(args.measurements)
    if m_header[-1] != "v":
        raise ConfigError(f"{args.measurements}: last column must be 'v'")
    q_header, q_rows = _read_csv_matrix(args.queries)
    imputed = harmonics.impute_observable(
        dmap, m_rows[:, :-1], m_rows[:, -1], q_rows,
        delta=args.delta, epsilon_scale=args.epsilon_scale,
    )
    harness.write_csv(out, ["v_hat"], [(x,) for x in imputed])
    print(f"wrote {out} ({imputed.size} imputations)")


def cmd_compare_init(args):
    out = _require_out(args)
    dataset = _load_dataset(args)
    model, model_meta = lstm.load_model(args.model)
    dmap, dmap_meta = manifold.load_dmap(args.dmap)
    gh, gh_meta = harmonics.load_gh(args.gh)
    harness.verify_lineage(gh_meta, {"dmap": args.dmap, "model": args.model})
    manifest = artifacts.manifest_hash(args.data)
    for name, meta in (("model", model_meta), ("dmap", dmap_meta)):
        if meta.get("manifest_sha256") != manifest:
            raise LineageError(f"{name} artifact was not built from dataset {args.data}")
    warmups = tuple(_parse_ints(args.warmups))
    window_len = int(dmap_meta["window_len"])
    eval_offset = args.eval_offset
    if eval_offset is None:
        eval_offset = int(gh_meta.get("maturity", 10)) + window_len
    report = harness.compare_initialization(
        model, dmap, gh, dataset.test, warmup_lens=warmups,
        window_len=window_len, eval_offset=eval_offset,
        config_echo={"data": args.data, "model": args.model, "dmap": args.dmap,
                     "gh": args.gh, "warmups": list(warmups),
                     "eval_offset": eval_offset, "seed": args.seed},
    )
    paths = harness.save_comparison(report, out)
    for strat, agg in report.aggregates.items():
        print(f"{strat}: median long MSE {agg['median_long_mse']:.4g}, "
              f"median |phase| {agg['median_abs_phase_error']:.1f}")
    print(f"wrote {paths[0]} and {paths[1]}")


def cmd_train_latent(args):
    out = _require_out(args)
    dataset = _load_dataset(args)
    dmap, dmap_meta = manifold.load_dmap(args.dmap)
    transitions = latent.build_transitions(
        dmap, dataset.train, window_len=int(dmap_meta["window_len"])
    )
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr0=args.lr,
                         lr_halving_patience=args.patience, seed=args.seed)
    model = latent.train_latent(transitions, config)
    latent.save_latent(out, model, {"dmap_sha256": artifacts.sha256_file(args.dmap)})
    mse = model.one_step_mse_standardized(transitions.phi_t, transitions.phi_next)
    print(f"wrote {out}; one-step standardized MSE = {mse:.3e}")


def cmd_rollout_latent(args):
    out = _require_out(args)
    model, _ = latent.load_latent(args.model)
    phi0 = _parse_floats(args.phi0)
    states = model.rollout(phi0, args.horizon)
    header = ["step"] + [f"phi{i + 1}" for i in range(states.shape[1])]
    harness.write_csv(out, header, [(k, *states[k]) for k in range(states.shape[0])])
    print(f"wrote {out}")


def cmd_sync_demo(args):
    out = _require_out(args)
    os.makedirs(out, exist_ok=True)
    params = BrusselatorParams()
    rng = np.random.default_rng(args.seed)
    u0 = args.u0 if args.u0 is not None else float(rng.uniform(0.0, 2.0))
    v0 = args.v0 if args.v0 is not None else float(rng.uniform(0.0, 3.0))
    traj = integrate_and_sample(params, (u0, v0), t_end=args.t_end, dt_sample=args.dt)
    result = harness.sync_error_demo(params, v0 - args.offset, traj)
    path = os.path.join(out, "sync_error.csv")
    harness.write_csv(
        path, ["t", "u", "v", "v_nn", "e1"],
        [(traj.times[k], traj.u[k], traj.v[k], result.v_nn[k], result.e1[k])
         for k in range(len(traj))],
    )
    print(f"wrote {path}; |e1| shrank from {abs(result.e1[0]):.3g} "
          f"to {abs(result.e1[-1]):.3g}")


def cmd_reproduce_figures(args):
    out = _require_out(args)
    dataset = _load_dataset(args)
    model, _ = lstm.load_model(args.model)
    dmap, dmap_meta = manifold.load_dmap(args.dmap)
    dmap10, _ = manifold.load_dmap(args.dmap10)
    gh, gh_meta = harmonics.load_gh(args.gh)
    latent_model, latent_meta = latent.load_latent(args.latent)
    harness.verify_lineage(gh_meta, {"dmap": args.dmap, "model": args.model})
    harness.verify_lineage(latent_meta, {"dmap": args.dmap})
    window_len = int(dmap_meta["window_len"])
    eval_offset = args.eval_offset
    if eval_offset is None:
        eval_offset = int(gh_meta.get("maturity", 10)) + window_len
    written = harness.reproduce_figures(
        dataset, model, dmap, dmap10, gh, latent_model, out,
        warmup_lens=tuple(_parse_ints(args.warmups)),
        window_len=window_len, eval_offset=eval_offset, seed=args.seed,
    )
    for path in written:
        print(f"wrote {path}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global random seed")
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--config", default=None,
                        help="key = value file overriding command-line flags")

    parser = argparse.ArgumentParser(
        prog="coldstart",
        description="Manifold-based cold-start initialization of LSTM internal states",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", parents=[common])
    p.add_argument("--n-train", type=int, default=400)
    p.add_argument("--n-val", type=int, default=50)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--t-end", type=float, default=20.0)
    p.add_argument("--dt", type=float, default=0.2)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train-lstm", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--patience", type=int, default=25)
    p.set_defaults(func=cmd_train_lstm)

    p = sub.add_parser("rollout", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--warmup", type=int, default=0)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("fit-manifold", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--window-len", type=int, default=5)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--n-eig", type=int, default=10)
    p.add_argument("--epsilon-scale", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--max-points", type=int, default=6000)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_fit_manifold)

    p = sub.add_parser("restrict", parents=[common])
    p.add_argument("--dmap", required=True)
    p.add_argument("--window", required=True, help="comma-separated u values")
    p.set_defaults(func=cmd_restrict)

    p = sub.add_parser("fit-gh", parents=[common])
    p.add_argument("--dmap", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--maturity", type=int, default=10)
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--epsilon-scale", type=float, default=1.0)
    p.add_argument("--max-points", type=int, default=2000)
    p.set_defaults(func=cmd_fit_gh)

    p = sub.add_parser("coldstart", parents=[common])
    p.add_argument("--dmap", required=True)
    p.add_argument("--gh", required=True)
    p.add_argument("--window", required=True, help="comma-separated u values")
    p.set_defaults(func=cmd_coldstart)

    p = sub.add_parser("impute", parents=[common])
    p.add_argument("--dmap", required=True)
    p.add_argument("--measurements", required=True,
                   help="CSV with window columns plus final column v")
    p.add_argument("--queries", required=True, help="CSV of window columns")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--epsilon-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("compare-init", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dmap", required=True)
    p.add_argument("--gh", required=True)
    p.add_argument("--warmups", default="0,5,25,50")
    p.add_argument("--eval-offset", type=int, default=None,
                   help="index of the last observed sample for the window "
                        "strategies (default: maturity + window length)")
    p.set_defaults(func=cmd_compare_init)

    p = sub.add_parser("train-latent", parents=[common])
    p.add_argument("--dmap", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--patience", type=int, default=25)
    p.set_defaults(func=cmd_train_latent)

    p = sub.add_parser("rollout-latent", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--phi0", required=True, help="comma-separated coordinates")
    p.add_argument("--horizon", type=int, default=200)
    p.set_defaults(func=cmd_rollout_latent)

    p = sub.add_parser("sync-demo", parents=[common])
    p.add_argument("--u0", type=float, default=None)
    p.add_argument("--v0", type=float, default=None)
    p.add_argument("--offset", type=float, default=1.0,
                   help="initial synchronization error e1(0)")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.set_defaults(func=cmd_sync_demo)

    p = sub.add_parser("reproduce-figures", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dmap", required=True, help="window-length-5 map")
    p.add_argument("--dmap10", required=True, help="window-length-10 map")
    p.add_argument("--gh", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--warmups", default="0,5,25,50")
    p.add_argument("--eval-offset", type=int, default=None)
    p.set_defaults(func=cmd_reproduce_figures)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        result = args.func(args)
        return 0 if result is None else result
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
