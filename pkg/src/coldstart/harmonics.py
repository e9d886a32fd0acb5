"""Function extension over the reduced coordinates (double diffusion maps).

A second Gaussian kernel is built on the embedding coordinates; its
orthonormal eigenvectors form a basis in which any function sampled on
the manifold (mature LSTM internal states, sporadic hidden-variable
measurements) is projected, truncated, and extended to new points.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from sklearn.base import BaseEstimator, RegressorMixin

from . import artifacts
from .exceptions import EmptyTruncationError
from .lstm import InternalState, collect_states_teacher_forced
from .manifold import CHUNK_ROWS, _gaussian_kernel, median_epsilon
from .validation import check_array, check_fitted, check_scalar


@dataclass
class MatureStateTable:
    """Observation windows paired with the internal states they enslave.

    Targets are concat(c_t, h_t) for the state reached after consuming the
    last window sample, restricted to times past the synchronization
    threshold.
    """

    windows: np.ndarray  # (R, l)
    targets: np.ndarray  # (R, 2 * hidden_size)
    provenance: np.ndarray  # (R, 2): trajectory index, window end index t
    window_len: int
    maturity: int

    def __len__(self):
        return self.windows.shape[0]


def collect_mature_states(model, trajectories, window_len=5, maturity=10):
    """Teacher-forced sweep of each trajectory, keeping states with t > maturity.

    For every time index t > maturity the row pairs the window
    u_{t-l+1..t} with the state (c_t, h_t) reached after consuming u_t
    from a zero initialization.
    """
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    lengths = {len(t.u) for t in trajectories}
    windows, targets, prov = [], [], []
    for T in sorted(lengths):
        ids = [i for i, t in enumerate(trajectories) if len(t.u) == T]
        U = np.stack([trajectories[i].u for i in ids])
        C, H = collect_states_teacher_forced(model, U)
        t_start = max(maturity + 1, window_len - 1)
        for row, tid in enumerate(ids):
            for t in range(t_start, T):
                windows.append(U[row, t - window_len + 1 : t + 1])
                targets.append(np.concatenate([C[row, t], H[row, t]]))
                prov.append((tid, t))
    n_targets = 2 * model.hidden_size
    return MatureStateTable(
        windows=np.asarray(windows).reshape(-1, window_len),
        targets=np.asarray(targets).reshape(-1, n_targets),
        provenance=np.asarray(prov, dtype=np.int64).reshape(-1, 2),
        window_len=window_len,
        maturity=maturity,
    )


class GeometricHarmonics(BaseEstimator, RegressorMixin):
    """Kernel-eigenbasis interpolation of functions on the embedding.

    Parameters
    ----------
    epsilon : second-round kernel bandwidth; None selects the median
        squared pairwise distance of the fit coordinates, multiplied by
        epsilon_scale.
    delta : spectral truncation fraction; eigenpairs with
        sigma > delta * sigma_1 are kept.

    Targets are standardized per output dimension before projection. The
    affine de-standardization is itself carried through the basis (the
    constant function is projected alongside the targets), so predictions
    decay to zero far from the data instead of returning the mean.
    """

    def __init__(self, epsilon=None, epsilon_scale=1.0, delta=1e-3):
        self.epsilon = epsilon
        self.epsilon_scale = epsilon_scale
        self.delta = delta

    def fit(self, X, y):
        Phi = check_array(X, "coordinates", ndim=2)
        F = np.asarray(y, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        if F.shape[0] != Phi.shape[0]:
            raise ValueError("coordinates and targets disagree in length")
        if Phi.shape[0] < 2:
            raise ValueError("need at least two samples")
        if not 0.0 < self.delta:
            raise ValueError("delta must be > 0")
        if self.epsilon is not None:
            self.epsilon_ = check_scalar(self.epsilon, "epsilon", positive=True)
        else:
            self.epsilon_ = median_epsilon(Phi) * self.epsilon_scale
        C = _gaussian_kernel(cdist(Phi, Phi, "sqeuclidean"), self.epsilon_)
        sigmas, psis = eigh(C)
        sigmas, psis = sigmas[::-1], psis[:, ::-1]
        kept = np.flatnonzero(sigmas > self.delta * sigmas[0])
        if kept.size == 0:
            raise EmptyTruncationError(
                f"delta={self.delta} keeps no eigenpairs (sigma_alpha > delta*sigma_1 empty)"
            )
        self.sigmas_ = sigmas[kept]
        # C-contiguous so fitted and reloaded artifacts multiply identically.
        self.psis_ = np.ascontiguousarray(psis[:, kept])
        self.mean_ = F.mean(axis=0)
        std = F.std(axis=0)
        self.std_ = np.where(std > 1e-12, std, 1.0)
        G = (F - self.mean_) / self.std_
        self.coef_ = self.psis_.T @ G
        self.one_coef_ = self.psis_.T @ np.ones(Phi.shape[0])
        self.X_fit_ = Phi
        self.n_outputs_ = F.shape[1]
        return self

    def _extend_basis(self, Phi_new):
        """Eigenfunction values at new points: psi_new = C_new psi / sigma."""
        out = np.empty((Phi_new.shape[0], self.sigmas_.shape[0]))
        for start in range(0, Phi_new.shape[0], CHUNK_ROWS):
            stop = min(start + CHUNK_ROWS, Phi_new.shape[0])
            C_new = _gaussian_kernel(
                cdist(Phi_new[start:stop], self.X_fit_, "sqeuclidean"), self.epsilon_
            )
            out[start:stop] = (C_new @ self.psis_) / self.sigmas_[None, :]
        return out

    def predict(self, X):
        check_fitted(self, "coef_")
        Phi_new = np.asarray(X, dtype=float)
        single = Phi_new.ndim == 1
        if single:
            Phi_new = Phi_new[None, :]
        if Phi_new.shape[0] == 0:
            return np.empty((0, self.n_outputs_))
        if Phi_new.shape[1] != self.X_fit_.shape[1]:
            raise ValueError(
                f"coordinates have dimension {Phi_new.shape[1]}, "
                f"expected {self.X_fit_.shape[1]}"
            )
        psi_new = self._extend_basis(Phi_new)
        F = psi_new @ self.coef_ * self.std_ + np.outer(psi_new @ self.one_coef_, self.mean_)
        return F[0] if single else F

    def training_reconstruction(self):
        """Truncated projection of the training targets (P_delta F)."""
        check_fitted(self, "coef_")
        return self.psis_ @ self.coef_ * self.std_ + np.outer(
            self.psis_ @ self.one_coef_, self.mean_
        )


def fit_gh(Phi, F, epsilon_star=None, delta=1e-3, **kwargs):
    """Convenience wrapper returning a fitted GeometricHarmonics."""
    return GeometricHarmonics(epsilon=epsilon_star, delta=delta, **kwargs).fit(Phi, F)


def evaluate_gh(gh, phi_new):
    return gh.predict(phi_new)


def fit_state_map(dmap, table, epsilon_scale=1.0, delta=1e-3, max_points=2000, seed=0):
    """Fit the window-to-internal-state extension from a mature-state table.

    Coordinates come from the diffusion map's independent columns; rows
    are uniformly subsampled to max_points before the dense eigenproblem.
    """
    phis = dmap.independent_coords(table.windows)
    targets = table.targets
    if phis.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(phis.shape[0], size=max_points, replace=False))
        phis, targets = phis[idx], targets[idx]
    gh = GeometricHarmonics(epsilon_scale=epsilon_scale, delta=delta).fit(phis, targets)
    return gh


def infer_states(dmap, gh, windows):
    """Windows -> embedding -> extended (c, h); returns (C, H) arrays."""
    W = check_array(windows, "windows", ndim=2)
    phis = dmap.independent_coords(W)
    F = gh.predict(phis)
    half = F.shape[1] // 2
    return F[:, :half], F[:, half:]


def coldstart_states(dmap, gh, window):
    """Consistent internal states for one short observation window."""
    C, H = infer_states(dmap, gh, np.asarray(window, dtype=float)[None, :])
    return InternalState(c=C[0], h=H[0])


def impute_observable(dmap, measured_windows, measured_values, query_windows,
                      epsilon_star=None, epsilon_scale=1.0, delta=1e-3):
    """Impute a scalar observable from sporadic measurements.

    Fits a geometric-harmonics model from the embedding coordinates of the
    measured windows to the measured values and evaluates it at the query
    windows. Requires at least 20 measurements spread over the manifold.
    """
    W = check_array(measured_windows, "measured_windows", ndim=2)
    vals = check_array(measured_values, "measured_values", ndim=1)
    if W.shape[0] != vals.shape[0]:
        raise ValueError("measurements and values disagree in length")
    if W.shape[0] < 20:
        raise ValueError("need at least 20 sporadic measurements")
    queries = np.asarray(query_windows, dtype=float)
    if queries.size == 0:
        return np.empty(0)
    queries = check_array(queries, "query_windows", ndim=2)
    phi_m = dmap.independent_coords(W)
    phi_q = dmap.independent_coords(queries)
    gh = GeometricHarmonics(
        epsilon=epsilon_star, epsilon_scale=epsilon_scale, delta=delta
    ).fit(phi_m, vals)
    return gh.predict(phi_q)[:, 0]


def save_gh(path, gh, extra_meta=None):
    check_fitted(gh, "coef_")
    meta = {
        "version": 1,
        "epsilon_star": float(gh.epsilon_),
        "delta": float(gh.delta),
        "n_kept": int(gh.sigmas_.shape[0]),
        "n_outputs": int(gh.n_outputs_),
    }
    meta.update(extra_meta or {})
    arrays = {
        "sigmas": gh.sigmas_,
        "psis": gh.psis_,
        "coefficients": gh.coef_,
        "one_coefficients": gh.one_coef_,
        "mean": gh.mean_,
        "std": gh.std_,
        "coordinates": gh.X_fit_,
    }
    artifacts.write_artifact(path, "geometric-harmonics", meta, arrays)


def load_gh(path):
    _, meta, arrays = artifacts.read_artifact(path, expected_kind="geometric-harmonics")
    gh = GeometricHarmonics(epsilon=float(meta["epsilon_star"]), delta=float(meta["delta"]))
    gh.epsilon_ = float(meta["epsilon_star"])
    gh.sigmas_ = arrays["sigmas"]
    gh.psis_ = arrays["psis"]
    gh.coef_ = arrays["coefficients"]
    gh.one_coef_ = arrays["one_coefficients"]
    gh.mean_ = arrays["mean"]
    gh.std_ = arrays["std"]
    gh.X_fit_ = arrays["coordinates"]
    gh.n_outputs_ = int(meta["n_outputs"])
    return gh, meta
