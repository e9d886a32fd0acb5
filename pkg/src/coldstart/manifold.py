"""Diffusion maps on observation windows, with out-of-sample restriction.

A Gaussian kernel over window space is density-normalized, row-normalized
to a Markov matrix, and eigendecomposed through its symmetric conjugate.
New windows are mapped into the embedding with the Nystrom formula, which
reproduces the stored eigenvectors exactly on the training windows.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.spatial.distance import cdist, pdist
from sklearn.base import BaseEstimator, TransformerMixin

from . import artifacts
from .exceptions import DegenerateKernelError, EigensolverError, OutOfSupportError
from .validation import check_array, check_fitted, check_scalar

CHUNK_ROWS = 2000  # keeps out-of-sample kernel blocks at ~100 MB


@dataclass
class WindowSet:
    """Contiguous observation windows with their source locations."""

    windows: np.ndarray  # (N, l)
    window_len: int
    provenance: np.ndarray  # (N, 2): source trajectory index, start index

    def __len__(self):
        return self.windows.shape[0]


def extract_windows(trajectories, window_len, stride=1):
    """All length-l windows of u at the given stride, across a split."""
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = []
    prov = []
    for tid, traj in enumerate(trajectories):
        u = np.asarray(traj.u, dtype=float)
        if len(u) < window_len:
            raise ValueError(
                f"trajectory {tid} shorter ({len(u)}) than window_len {window_len}"
            )
        for start in range(0, len(u) - window_len + 1, stride):
            rows.append(u[start : start + window_len])
            prov.append((tid, start))
    return WindowSet(
        windows=np.asarray(rows),
        window_len=window_len,
        provenance=np.asarray(prov, dtype=np.int64),
    )


def _as_window_matrix(X):
    if isinstance(X, WindowSet):
        return X.windows
    return check_array(X, "windows", ndim=2)


def median_epsilon(X):
    """Median of the squared pairwise distances, zero distances excluded.

    Excluding exact zeros drops self-pairs and duplicated windows, which
    makes the value invariant under duplicating the data set. Memory is
    O(N^2); subsample first for very large window sets.
    """
    W = _as_window_matrix(X)
    if W.shape[0] < 2:
        raise ValueError("need at least two windows")
    d2 = pdist(W, "sqeuclidean")
    d2 = d2[d2 > 0.0]
    if d2.size == 0:
        raise ValueError("all windows are identical; no usable distance scale")
    return float(np.median(d2))


def _gaussian_kernel(d2, epsilon):
    return np.exp(-d2 / (2.0 * epsilon))


def build_markov(X, epsilon, alpha=0.0):
    """Row-stochastic diffusion matrix plus the kernel row sums.

    Returns (D, p) where p are the row sums of the raw Gaussian kernel,
    needed later for density normalization of out-of-sample rows.
    """
    W = _as_window_matrix(X)
    epsilon = check_scalar(epsilon, "epsilon", positive=True)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    K = _gaussian_kernel(cdist(W, W, "sqeuclidean"), epsilon)
    p = K.sum(axis=1)
    Kt = K if alpha == 0.0 else K / np.outer(p**alpha, p**alpha)
    # With a unit diagonal a row never sums to zero, but a row whose
    # off-diagonal mass underflows is disconnected from the data.
    off_diag = Kt.sum(axis=1) - np.diagonal(Kt)
    if np.any(off_diag < 1e-300):
        raise DegenerateKernelError(
            "epsilon so small that at least one kernel row has no off-diagonal mass"
        )
    D = Kt / Kt.sum(axis=1)[:, None]
    return D, p


def _eig_markov(Kt, n_eig):
    """Top eigenpairs of the row-normalized Kt via its symmetric conjugate."""
    s = Kt.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(s)
    A = Kt * np.outer(inv_sqrt, inv_sqrt)
    N = A.shape[0]
    if n_eig >= N - 1:
        vals, vecs = eigh(A)
        vals, vecs = vals[::-1], vecs[:, ::-1]
        vals, vecs = vals[:n_eig], vecs[:, :n_eig]
    else:
        try:
            vals, vecs = eigsh(A, k=n_eig, which="LA", v0=np.full(N, 1.0 / np.sqrt(N)))
        except ArpackNoConvergence as exc:
            raise EigensolverError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
    phi = vecs * inv_sqrt[:, None]
    phi /= np.linalg.norm(phi, axis=0)
    # Deterministic sign: largest-magnitude entry of each eigenvector positive.
    anchor = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[anchor, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    # C-contiguous so fitted and reloaded artifacts multiply identically.
    return vals, np.ascontiguousarray(phi * signs)


def _loo_local_linear_residuals(Z, Y):
    """Normalized leave-one-out residuals of local-linear fits on Z.

    Y holds one candidate function per column; all candidates share the
    same local systems, which are assembled once per chunk of evaluation
    points and solved for every right-hand side together.
    """
    N = Z.shape[0]
    Y = Y if Y.ndim == 2 else Y[:, None]
    d2 = cdist(Z, Z, "sqeuclidean")
    nz = d2[d2 > 0.0]
    if nz.size == 0:
        return np.zeros(Y.shape[1])
    eps_reg = (np.sqrt(np.median(nz)) / 3.0) ** 2
    W = np.exp(-d2 / eps_reg)
    np.fill_diagonal(W, 0.0)
    preds = np.empty_like(Y)
    dim = Z.shape[1] + 1
    eye = np.eye(dim)
    for start in range(0, N, CHUNK_ROWS):
        stop = min(start + CHUNK_ROWS, N)
        diff = Z[None, :, :] - Z[start:stop, None, :]  # (chunk, N, d)
        design = np.concatenate([np.ones((stop - start, N, 1)), diff], axis=2)
        weighted = design * W[start:stop, :, None]
        A = np.swapaxes(weighted, 1, 2) @ design  # (chunk, dim, dim)
        B = np.swapaxes(weighted, 1, 2) @ Y  # (chunk, dim, n_candidates)
        # Relative ridge plus an absolute floor so that rows whose kernel
        # weights all underflow (isolated points) stay solvable; those rows
        # predict ~0 and count as unexplained.
        A += (1e-12 * np.trace(A, axis1=1, axis2=2)[:, None, None] + 1e-100) * eye
        preds[start:stop] = np.linalg.solve(A, B)[:, 0, :]
    denom = np.linalg.norm(Y - Y.mean(axis=0), axis=0)
    num = np.linalg.norm(Y - preds, axis=0)
    return np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)


def _loo_local_linear_residual(Z, y):
    """Single-candidate wrapper around the shared-system residual pass."""
    return float(_loo_local_linear_residuals(Z, np.asarray(y)[:, None])[0])


def select_independent(eigenvectors, r2_threshold=0.5):
    """Greedy scan for non-harmonic eigenvectors.

    Walks the non-trivial eigenvectors in spectral order and keeps those
    that a local-linear kernel regression on the already-kept coordinates
    cannot explain (normalized leave-one-out residual above the
    threshold). The first non-trivial eigenvector is always kept.
    """
    phi = np.asarray(eigenvectors)
    if phi.shape[1] < 2:
        raise ValueError("need at least two eigenvectors (including the trivial one)")
    kept = [1]
    candidates = list(range(2, phi.shape[1]))
    while candidates:
        residuals = _loo_local_linear_residuals(phi[:, kept], phi[:, candidates])
        hits = np.flatnonzero(residuals > r2_threshold)
        if hits.size == 0:
            break
        first = int(hits[0])
        kept.append(candidates[first])
        candidates = candidates[first + 1 :]
    return kept


class DiffusionMapEmbedding(BaseEstimator, TransformerMixin):
    """Diffusion-maps embedding of observation windows.

    Parameters
    ----------
    n_components : number of eigenpairs kept, including the trivial one.
    epsilon : kernel bandwidth; None selects the median squared pairwise
        distance of the fit windows, multiplied by epsilon_scale.
    alpha : density-normalization exponent in [0, 1].
    max_points : uniform subsampling cap applied before the dense
        eigenproblem.
    independence_threshold : residual threshold for the non-harmonic scan.
    random_state : seed for the subsampling draw.
    """

    def __init__(self, n_components=10, epsilon=None, epsilon_scale=1.0, alpha=0.0,
                 max_points=6000, independence_threshold=0.5, random_state=0):
        self.n_components = n_components
        self.epsilon = epsilon
        self.epsilon_scale = epsilon_scale
        self.alpha = alpha
        self.max_points = max_points
        self.independence_threshold = independence_threshold
        self.random_state = random_state

    def fit(self, X, y=None):
        provenance = X.provenance if isinstance(X, WindowSet) else None
        W = _as_window_matrix(X)
        if self.n_components < 2:
            raise ValueError("n_components must be >= 2")
        if self.n_components > W.shape[0]:
            raise ValueError("n_components exceeds the number of windows")
        if W.shape[0] > self.max_points:
            rng = np.random.default_rng(self.random_state)
            idx = np.sort(rng.choice(W.shape[0], size=self.max_points, replace=False))
            W = W[idx]
            provenance = provenance[idx] if provenance is not None else None
        if self.epsilon is not None:
            self.epsilon_ = check_scalar(self.epsilon, "epsilon", positive=True)
        else:
            self.epsilon_ = median_epsilon(W) * self.epsilon_scale
        K = _gaussian_kernel(cdist(W, W, "sqeuclidean"), self.epsilon_)
        self.density_ = K.sum(axis=1)
        if self.alpha == 0.0:
            Kt = K
        else:
            pa = self.density_**self.alpha
            Kt = K / np.outer(pa, pa)
        off_diag = Kt.sum(axis=1) - np.diagonal(Kt)
        if np.any(off_diag < 1e-300):
            raise DegenerateKernelError(
                "epsilon so small that at least one kernel row has no off-diagonal mass"
            )
        self.eigenvalues_, self.eigenvectors_ = _eig_markov(Kt, self.n_components)
        self.X_fit_ = W
        self.provenance_fit_ = provenance
        self.independent_indices_ = select_independent(
            self.eigenvectors_, self.independence_threshold
        )
        return self

    def transform(self, X):
        """Nystrom restriction of new windows onto all stored eigenvectors.

        Column beta holds phi^(beta)(x) = (1/lambda_beta) sum_j W(x, x_j)
        phi_j^(beta); on a training window this reproduces the stored
        eigenvector row to solver precision.
        """
        check_fitted(self, "eigenvectors_")
        W = _as_window_matrix(X)
        if W.shape[0] == 0:
            return np.empty((0, self.eigenvalues_.shape[0]))
        if W.shape[1] != self.X_fit_.shape[1]:
            raise ValueError(
                f"windows have length {W.shape[1]}, expected {self.X_fit_.shape[1]}"
            )
        out = np.empty((W.shape[0], self.eigenvalues_.shape[0]))
        for start in range(0, W.shape[0], CHUNK_ROWS):
            stop = min(start + CHUNK_ROWS, W.shape[0])
            K_new = _gaussian_kernel(
                cdist(W[start:stop], self.X_fit_, "sqeuclidean"), self.epsilon_
            )
            row_sums = K_new.sum(axis=1)
            if np.any(row_sums < 1e-300):
                bad = start + int(np.flatnonzero(row_sums < 1e-300)[0])
                raise OutOfSupportError(
                    f"window {bad} is too far from the training data (kernel row ~ 0)"
                )
            if self.alpha != 0.0:
                K_new = K_new / (
                    row_sums[:, None] ** self.alpha
                    * self.density_[None, :] ** self.alpha
                )
            W_row = K_new / K_new.sum(axis=1)[:, None]
            out[start:stop] = (W_row @ self.eigenvectors_) / self.eigenvalues_[None, :]
        return out

    def independent_coords(self, X):
        """Embedding restricted to the selected non-harmonic coordinates."""
        check_fitted(self, "independent_indices_")
        return self.transform(X)[:, self.independent_indices_]


def fit_dmaps(X, epsilon=None, alpha=0.0, n_eig=10, **kwargs):
    """Convenience wrapper returning a fitted DiffusionMapEmbedding."""
    return DiffusionMapEmbedding(
        n_components=n_eig, epsilon=epsilon, alpha=alpha, **kwargs
    ).fit(X)


def nystrom_extend(dmap, x_new):
    """Restrict one window (or a stack of windows) to the embedding."""
    arr = np.asarray(x_new, dtype=float)
    single = arr.ndim == 1
    coords = dmap.transform(arr[None, :] if single else arr)
    return coords[0] if single else coords


def save_dmap(path, dmap, window_len=None, extra_meta=None):
    check_fitted(dmap, "eigenvectors_")
    meta = {
        "version": 1,
        "epsilon": float(dmap.epsilon_),
        "alpha": float(dmap.alpha),
        "window_len": int(window_len if window_len is not None else dmap.X_fit_.shape[1]),
        "n_samples": int(dmap.X_fit_.shape[0]),
        "n_components": int(dmap.eigenvalues_.shape[0]),
        "independence_threshold": float(dmap.independence_threshold),
    }
    meta.update(extra_meta or {})
    arrays = {
        "eigenvalues": dmap.eigenvalues_,
        "eigenvectors": dmap.eigenvectors_,
        "density": dmap.density_,
        "windows": dmap.X_fit_,
        "independent_indices": np.asarray(dmap.independent_indices_, dtype=np.int64),
    }
    if dmap.provenance_fit_ is not None:
        arrays["provenance"] = dmap.provenance_fit_
    artifacts.write_artifact(path, "diffusion-map", meta, arrays)


def load_dmap(path):
    _, meta, arrays = artifacts.read_artifact(path, expected_kind="diffusion-map")
    dmap = DiffusionMapEmbedding(
        n_components=int(meta["n_components"]),
        epsilon=float(meta["epsilon"]),
        alpha=float(meta["alpha"]),
        independence_threshold=float(meta["independence_threshold"]),
    )
    dmap.epsilon_ = float(meta["epsilon"])
    dmap.eigenvalues_ = arrays["eigenvalues"]
    dmap.eigenvectors_ = arrays["eigenvectors"]
    dmap.density_ = arrays["density"]
    dmap.X_fit_ = arrays["windows"]
    dmap.provenance_fit_ = arrays.get("provenance")
    dmap.independent_indices_ = arrays["independent_indices"].tolist()
    return dmap, meta
