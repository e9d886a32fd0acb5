"""File formats: versioned text artifacts, trajectory CSVs, dataset manifests.

All model-like objects (LSTM checkpoint, diffusion map, geometric
harmonics, latent dynamics) are stored in one plain-text container:

    #coldstart-artifact v1
    kind = <artifact kind>
    <key> = <value>              # metadata, one per line
    [block <name> <dtype> <d0> [<d1>]]
    <row-major numbers, one row per line>
    ...
    [end]

Numbers are written with repr() so they round-trip exactly; files are
diffable and portable. Downstream artifacts embed the SHA-256 of their
upstream files, which the harness checks before combining them.
"""

import hashlib
import json
import os

import numpy as np

from .dynamics import BrusselatorParams, Dataset, Trajectory
from .exceptions import ConfigError

FORMAT_TAG = "#coldstart-artifact v1"


def sha256_file(path):
    """Hex SHA-256 of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _format_row(row):
    return " ".join(repr(x) for x in row)


def write_artifact(path, kind, meta, arrays):
    """Write metadata plus named arrays to the versioned text container."""
    lines = [FORMAT_TAG, f"kind = {kind}"]
    for key, value in meta.items():
        value = repr(value) if isinstance(value, float) else str(value)
        if "\n" in value:
            raise ValueError(f"metadata value for {key!r} must be single-line")
        lines.append(f"{key} = {value}")
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.ndim == 1:
            dtype = "int64" if np.issubdtype(arr.dtype, np.integer) else "float64"
            lines.append(f"[block {name} {dtype} {arr.shape[0]}]")
            lines.append(_format_row(arr.tolist()))
        elif arr.ndim == 2:
            dtype = "int64" if np.issubdtype(arr.dtype, np.integer) else "float64"
            lines.append(f"[block {name} {dtype} {arr.shape[0]} {arr.shape[1]}]")
            lines.extend(_format_row(row) for row in arr.tolist())
        else:
            raise ValueError(f"block {name!r} must be 1-d or 2-d, got shape {arr.shape}")
    lines.append("[end]")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_artifact(path, expected_kind=None):
    """Parse an artifact file into (kind, meta dict, arrays dict)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise ConfigError(f"{path}: not a coldstart artifact (missing {FORMAT_TAG!r})")
    meta = {}
    arrays = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("["):
        key, sep, value = lines[i].partition(" = ")
        if not sep:
            raise ConfigError(f"{path}: malformed metadata line {i + 1}: {lines[i]!r}")
        meta[key] = value
        i += 1
    while i < len(lines):
        line = lines[i]
        if line == "[end]":
            break
        if not (line.startswith("[block ") and line.endswith("]")):
            raise ConfigError(f"{path}: expected block header at line {i + 1}: {line!r}")
        parts = line[1:-1].split()
        name, dtype_name = parts[1], parts[2]
        shape = tuple(int(s) for s in parts[3:])
        n_rows = 1 if len(shape) == 1 else shape[0]
        rows = lines[i + 1 : i + 1 + n_rows]
        if len(rows) != n_rows:
            raise ConfigError(f"{path}: truncated block {name!r}")
        dtype = np.int64 if dtype_name == "int64" else np.float64
        data = np.array([[dtype(x) for x in row.split()] for row in rows], dtype=dtype)
        arrays[name] = data.reshape(shape)
        i += 1 + n_rows
    else:
        raise ConfigError(f"{path}: missing [end] marker")
    kind = meta.pop("kind", None)
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError(f"{path}: expected kind {expected_kind!r}, found {kind!r}")
    return kind, meta, arrays


def save_trajectory_csv(path, traj):
    """One trajectory per file, columns t,u,v (v blank when unknown)."""
    t = traj.times
    with open(path, "w") as fh:
        fh.write("t,u,v\n")
        for k in range(len(traj)):
            v = repr(float(traj.v[k])) if traj.v is not None else ""
            fh.write(f"{repr(float(t[k]))},{repr(float(traj.u[k]))},{v}\n")


def load_trajectory_csv(path):
    t, u, v = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,u,v":
            raise ConfigError(f"{path}: expected header 't,u,v', got {header!r}")
        for line in fh:
            cols = line.strip().split(",")
            t.append(float(cols[0]))
            u.append(float(cols[1]))
            v.append(float(cols[2]) if len(cols) > 2 and cols[2] else np.nan)
    t = np.asarray(t)
    if len(t) < 2:
        raise ConfigError(f"{path}: trajectory needs at least two samples")
    dts = np.diff(t)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=1e-12):
        raise ConfigError(f"{path}: time column is not uniformly sampled")
    v = np.asarray(v)
    return Trajectory(dt=float(dts[0]), u=np.asarray(u), v=None if np.isnan(v).all() else v)


def save_dataset(out_dir, dataset):
    """Write one CSV per trajectory plus a manifest describing the splits."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "seed": dataset.seed,
        "params": {"a": dataset.params.a, "b": dataset.params.b},
        "t_end": dataset.t_end,
        "dt": dataset.dt,
        "ic_ranges": {"u0": list(dataset.ic_ranges[0]), "v0": list(dataset.ic_ranges[1])},
        "splits": {},
    }
    index = 0
    for split_name, trajs in dataset.splits.items():
        files = []
        for traj in trajs:
            fname = f"traj_{index:04d}.csv"
            save_trajectory_csv(os.path.join(out_dir, fname), traj)
            files.append(fname)
            index += 1
        manifest["splits"][split_name] = files
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return os.path.join(out_dir, "manifest.json")


def load_dataset(data_dir):
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"{data_dir}: missing manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    splits = {}
    for split_name in ("train", "val", "test"):
        files = manifest["splits"][split_name]
        splits[split_name] = [
            load_trajectory_csv(os.path.join(data_dir, f)) for f in files
        ]
    return Dataset(
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        seed=manifest["seed"],
        params=BrusselatorParams(**manifest["params"]),
        ic_ranges=(tuple(manifest["ic_ranges"]["u0"]), tuple(manifest["ic_ranges"]["v0"])),
        t_end=manifest["t_end"],
        dt=manifest["dt"],
    )


def manifest_hash(data_dir):
    """Content hash of a dataset directory, taken over its manifest."""
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"{data_dir}: missing manifest.json")
    return sha256_file(manifest_path)
