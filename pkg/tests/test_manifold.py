import numpy as np
import pytest
from scipy.linalg import orthogonal_procrustes
from scipy.spatial.distance import cdist

from coldstart import artifacts
from coldstart.exceptions import DegenerateKernelError, OutOfSupportError
from coldstart.manifold import (
    DiffusionMapEmbedding,
    build_markov,
    extract_windows,
    load_dmap,
    median_epsilon,
    nystrom_extend,
    save_dmap,
    select_independent,
)


def circle_points(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    theta = np.sort(rng.uniform(0, 2 * np.pi, n))
    return np.column_stack([np.cos(theta), np.sin(theta)]), theta


@pytest.fixture(scope="module")
def circle_dmap():
    X, theta = circle_points()
    dm = DiffusionMapEmbedding(n_components=6, random_state=0).fit(X)
    return dm, X, theta


def test_extract_window_counts(small_dataset):
    traj = small_dataset.train[:1]
    n = len(traj[0].u)
    assert len(extract_windows(traj, 10, 1)) == n - 9
    assert len(extract_windows(traj, 5, 1)) == n - 4
    ws = extract_windows(small_dataset.train, 5, 3)
    assert np.all(ws.provenance[:, 1] % 3 == 0)


def test_window_provenance_roundtrip(tmp_path, small_dataset):
    traj = small_dataset.train[2]
    path = tmp_path / "t.csv"
    artifacts.save_trajectory_csv(path, traj)
    reloaded = artifacts.load_trajectory_csv(path)
    ws = extract_windows([traj], 5, 1)
    row = 17
    tid, start = ws.provenance[row]
    assert np.array_equal(ws.windows[row], reloaded.u[start : start + 5])


def test_median_epsilon_three_point_case():
    # two identical windows plus one at distance 5: nonzero squared
    # distances are {25, 25}, median 25
    X = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 4.0]])
    assert median_epsilon(X) == 25.0


def test_median_epsilon_duplication_invariant():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 5))
    assert median_epsilon(np.vstack([X, X])) == median_epsilon(X)


def test_median_epsilon_subsample_close():
    rng = np.random.default_rng(2)
    t = rng.uniform(0, 2 * np.pi, 8000)
    X = np.column_stack([np.cos(t), np.sin(t), 0.1 * rng.normal(size=8000)])
    full = median_epsilon(X)
    sub = median_epsilon(X[np.sort(rng.choice(8000, 5000, replace=False))])
    assert abs(sub - full) / full <= 0.05


def test_build_markov_unit_diagonal_and_alpha_zero():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 4))
    eps = median_epsilon(X)
    D, p = build_markov(X, eps, alpha=0.0)
    K = np.exp(-cdist(X, X, "sqeuclidean") / (2 * eps))
    assert np.array_equal(p, K.sum(axis=1))
    # alpha = 0 leaves the kernel untouched: D is exactly row-normalized K
    assert np.array_equal(D, K / K.sum(axis=1)[:, None])
    assert np.max(np.abs(D.sum(axis=1) - 1.0)) <= 1e-12
    assert np.max(np.abs(K - K.T)) == 0.0


def test_build_markov_degenerate_kernel():
    # three mutually distant points: with a tiny bandwidth every row loses
    # all off-diagonal mass
    X = np.array([[0.0, 0.0], [100.0, 100.0], [200.0, 0.0]])
    with pytest.raises(DegenerateKernelError):
        build_markov(X, 1e-6)


def test_eigenstructure_invariants(circle_dmap):
    dm, _, _ = circle_dmap
    assert abs(dm.eigenvalues_[0] - 1.0) <= 1e-10
    assert np.all(np.abs(dm.eigenvalues_) <= 1.0 + 1e-10)
    phi0 = dm.eigenvectors_[:, 0]
    assert phi0.std() / abs(phi0.mean()) <= 1e-8


def test_toy_circle_embedding(circle_dmap):
    dm, X, theta = circle_dmap
    assert dm.independent_indices_ == [1, 2]
    angle = np.arctan2(dm.eigenvectors_[:, 2], dm.eigenvectors_[:, 1])
    # theta is sorted, so unwrap gives a monotone parametrization
    corr = abs(np.corrcoef(np.unwrap(angle), theta)[0, 1])
    assert corr >= 0.999


def test_select_independent_rejects_harmonic():
    rng = np.random.default_rng(4)
    t = np.sort(rng.uniform(-1, 1, 1200))
    phi = np.column_stack([np.ones_like(t), t, t**2 - t.mean()])
    assert select_independent(phi, 0.5) == [1]


def test_select_independent_keeps_first():
    rng = np.random.default_rng(5)
    phi = np.column_stack([np.ones(300), rng.normal(size=300)])
    assert select_independent(phi, 0.5) == [1]


def test_nystrom_reproduces_training_rows(circle_dmap):
    dm, X, _ = circle_dmap
    coords = dm.transform(X[:50])
    assert np.max(np.abs(coords - dm.eigenvectors_[:50])) <= 1e-10


def test_nystrom_continuity(circle_dmap):
    dm, X, _ = circle_dmap
    base = dm.transform(X[7][None, :])
    bumped = dm.transform((X[7] + 1e-4 / np.sqrt(2))[None, :])
    diam = np.linalg.norm(
        dm.eigenvectors_[:, 1:3].max(axis=0) - dm.eigenvectors_[:, 1:3].min(axis=0)
    )
    assert np.linalg.norm(bumped - base) <= 1e-2 * diam


def test_nystrom_out_of_support(circle_dmap):
    dm, X, _ = circle_dmap
    with pytest.raises(OutOfSupportError):
        dm.transform((X[0] + 1e6)[None, :])


def test_nystrom_single_window_helper(circle_dmap):
    dm, X, _ = circle_dmap
    row = nystrom_extend(dm, X[3])
    assert row.shape == (6,)
    assert np.allclose(row, dm.eigenvectors_[3], atol=1e-10)


def test_window_length_mismatch(circle_dmap):
    dm, _, _ = circle_dmap
    with pytest.raises(ValueError):
        dm.transform(np.ones((2, 5)))


def test_embedding_stability_under_subsampling(small_dataset):
    ws = extract_windows(small_dataset.train, 5, 1)
    full = DiffusionMapEmbedding(n_components=4, random_state=0).fit(ws.windows)
    rng = np.random.default_rng(0)
    half_idx = np.sort(rng.choice(len(ws), len(ws) // 2, replace=False))
    half = DiffusionMapEmbedding(n_components=4, random_state=0).fit(ws.windows[half_idx])
    A = half.eigenvectors_[:, 1:3]
    B = full.eigenvectors_[half_idx][:, 1:3]
    # rigid-plus-scale alignment (orthogonal Procrustes after centering)
    Ac = A - A.mean(axis=0)
    Bc = B - B.mean(axis=0)
    R, scale = orthogonal_procrustes(Ac, Bc)
    aligned = (Ac @ R) * (scale / (Ac**2).sum())
    resid = np.sqrt(np.mean((aligned - Bc) ** 2))
    diam = cdist(Bc[::5], Bc[::5]).max()
    assert resid <= 0.10 * diam


def test_dmap_save_load_roundtrip(tmp_path, circle_dmap):
    dm, X, _ = circle_dmap
    path = tmp_path / "dmap.txt"
    save_dmap(path, dm, window_len=2, extra_meta={"tag": "circle"})
    back, meta = load_dmap(path)
    assert meta["tag"] == "circle"
    assert int(meta["window_len"]) == 2
    assert np.array_equal(back.eigenvalues_, dm.eigenvalues_)
    assert np.array_equal(back.eigenvectors_, dm.eigenvectors_)
    assert back.independent_indices_ == dm.independent_indices_
    assert np.array_equal(back.transform(X[:5]), dm.transform(X[:5]))
