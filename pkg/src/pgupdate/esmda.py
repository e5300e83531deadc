"""Ensemble smoother with multiple data assimilation (ES-MDA).

The update is the perturbed-observation Kalman analysis applied ``N_a``
times with the observation-error covariance inflated by coefficients
``alpha_i`` satisfying ``sum(1/alpha_i) = 1``, which makes the scheme
equivalent to a single Kalman update in the linear-Gaussian limit. Sample
covariances are tapered elementwise by the Gaspari-Cohn correlation
function so spurious long-range ensemble correlations cannot propagate
updates beyond twice the localization radius.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import DataError

_GAIN_JITTER = 1e-8


def gaspari_cohn(d, length):
    """Gaspari-Cohn compactly supported correlation.

    Parameters
    ----------
    d : array-like
        Non-negative distances (metres).
    length : float
        Localization radius L; the taper reaches zero at ``2 L``.

    Returns
    -------
    numpy.ndarray or float
        Values in [0, 1]; exactly 1 at d = 0 and exactly 0 for d >= 2 L.
    """
    if not length > 0:
        raise DataError("localization radius must be > 0")
    r = np.asarray(d, dtype=np.float64) / float(length)
    if np.any(r < 0):
        raise DataError("distances must be >= 0")
    near = r < 1.0
    far = (r >= 1.0) & (r < 2.0)
    out = np.zeros_like(r)
    rn = r[near]
    out[near] = -0.25 * rn**5 + 0.5 * rn**4 + 0.625 * rn**3 - (5.0 / 3.0) * rn**2 + 1.0
    rf = r[far]
    out[far] = (
        (1.0 / 12.0) * rf**5 - 0.5 * rf**4 + 0.625 * rf**3
        + (5.0 / 3.0) * rf**2 - 5.0 * rf + 4.0 - (2.0 / 3.0) / rf
    )
    out = np.maximum(out, 0.0)
    if np.ndim(d) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class MdaSchedule:
    """Inflation coefficients for the assimilation cycles.

    The coefficients must satisfy ``sum(1/alpha_i) = 1``; the constant
    choice ``alpha_i = N_a`` is the default.
    """

    alphas: tuple[float, ...]

    def __post_init__(self) -> None:
        alphas = tuple(float(a) for a in self.alphas)
        if len(alphas) < 1:
            raise DataError("schedule needs at least one assimilation")
        if any(a <= 0 for a in alphas):
            raise DataError("inflation coefficients must be > 0")
        if abs(sum(1.0 / a for a in alphas) - 1.0) > 1e-9:
            raise DataError("inflation coefficients must satisfy sum(1/alpha) = 1")
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def constant(cls, n_assimilations: int) -> "MdaSchedule":
        n = int(n_assimilations)
        if n < 1:
            raise DataError("number of assimilations must be >= 1")
        return cls((float(n),) * n)

    @property
    def n_assimilations(self) -> int:
        return len(self.alphas)


@dataclass
class AssimilationProblem:
    """One localized ensemble-update problem.

    ``state`` is (n_real, n_state); ``predictions`` is (n_real, n_obs) and
    is refreshed between MDA cycles. Localization applies when both
    location sets and a radius are given, otherwise covariances are used
    untapered.
    """

    state: np.ndarray
    observations: np.ndarray
    obs_error_sd: np.ndarray
    predictions: np.ndarray | None = None
    state_locations: np.ndarray | None = None
    obs_locations: np.ndarray | None = None
    localization_radius: float | None = None
    _rho_yd: np.ndarray | None = field(default=None, repr=False)
    _rho_dd: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.state = np.asarray(self.state, dtype=np.float64)
        self.observations = np.asarray(self.observations, dtype=np.float64).ravel()
        self.obs_error_sd = np.broadcast_to(
            np.asarray(self.obs_error_sd, dtype=np.float64), self.observations.shape
        ).copy()
        if self.state.ndim != 2 or self.state.shape[0] < 2:
            raise DataError("state ensemble must be (n_real >= 2, n_state)")
        if np.any(self.obs_error_sd <= 0):
            raise DataError("observation error standard deviations must be > 0")
        if self.predictions is not None:
            self.predictions = np.asarray(self.predictions, dtype=np.float64)
            self._check_predictions(self.predictions)
        if (self.localization_radius is not None) and (
            self.state_locations is None or self.obs_locations is None
        ):
            raise DataError("localization requires state and observation locations")

    def _check_predictions(self, h: np.ndarray) -> None:
        if h.shape != (self.state.shape[0], self.observations.size):
            raise DataError("predictions must be (n_real, n_obs)")
        if not np.all(np.isfinite(h)):
            raise DataError("non-finite model predictions")

    def localization_weights(self):
        """(rho_YD, rho_DD) taper matrices, or (None, None) untapered."""
        if self.localization_radius is None:
            return None, None
        if self._rho_yd is None:
            sl = np.asarray(self.state_locations, dtype=np.float64)
            ol = np.asarray(self.obs_locations, dtype=np.float64)
            self._rho_yd = gaspari_cohn(cdist(sl, ol), self.localization_radius)
            self._rho_dd = gaspari_cohn(cdist(ol, ol), self.localization_radius)
        return self._rho_yd, self._rho_dd


def kalman_gain(problem: AssimilationProblem, alpha: float = 1.0) -> np.ndarray:
    """Localized Kalman gain, shape (n_state, n_obs).

    Cross- and auto-covariances are the usual 1/(n-1) ensemble estimates
    around the ensemble means; the observation-error covariance is
    ``diag(alpha * sd^2)``. The innovation system is solved by Cholesky
    factorisation rather than explicit inversion.
    """
    state = problem.state
    h = problem.predictions
    if h is None:
        raise DataError("problem has no predictions; compute them first")
    problem._check_predictions(h)
    n = state.shape[0]
    sa = state - state.mean(axis=0)
    ha = h - h.mean(axis=0)
    if not np.all(np.isfinite(sa)):
        raise DataError("non-finite state ensemble")
    c_yd = sa.T @ ha / (n - 1)
    c_dd = ha.T @ ha / (n - 1)
    rho_yd, rho_dd = problem.localization_weights()
    if rho_yd is not None:
        c_yd = c_yd * rho_yd
        c_dd = c_dd * rho_dd
    m = c_dd + np.diag(float(alpha) * problem.obs_error_sd**2)
    m[np.diag_indices_from(m)] += _GAIN_JITTER
    factor = cho_factor(m, lower=True)
    return cho_solve(factor, c_yd.T).T


def assimilate_once(
    problem: AssimilationProblem, gain: np.ndarray, perturbed_obs: np.ndarray
) -> np.ndarray:
    """Apply one analysis step: state_j += gain @ (obs_j - pred_j)."""
    h = problem.predictions
    perturbed_obs = np.asarray(perturbed_obs, dtype=np.float64)
    if perturbed_obs.shape != h.shape:
        raise DataError("perturbed observations must be (n_real, n_obs)")
    return problem.state + (perturbed_obs - h) @ gain.T


def mda_update(
    problem: AssimilationProblem,
    schedule: MdaSchedule,
    forward,
    seed=None,
) -> np.ndarray:
    """Run the full MDA loop and return the final state ensemble.

    ``forward(state) -> (n_real, n_obs)`` recomputes model-based
    predictions before each cycle; per-realization observation
    perturbations are drawn fresh each cycle with variance
    ``alpha_i * sd^2``. Deterministic given ``seed``.
    """
    rng = np.random.default_rng(seed)
    state = problem.state
    n_real = state.shape[0]
    n_obs = problem.observations.size
    mse_first = None
    h = None
    for alpha in schedule.alphas:
        h = np.asarray(forward(state), dtype=np.float64)
        if mse_first is None:
            mse_first = float(np.mean((h.mean(axis=0) - problem.observations) ** 2))
        problem.state = state
        problem.predictions = h
        noise = rng.standard_normal((n_real, n_obs))
        perturbed = problem.observations + np.sqrt(alpha) * problem.obs_error_sd * noise
        gain = kalman_gain(problem, alpha)
        state = assimilate_once(problem, gain, perturbed)
        if not np.all(np.isfinite(state)):
            raise DataError("assimilation produced non-finite state values")
    h = np.asarray(forward(state), dtype=np.float64)
    mse_last = float(np.mean((h.mean(axis=0) - problem.observations) ** 2))
    if mse_first > 0 and mse_last > mse_first:
        warnings.warn(
            f"prediction MSE rose over the MDA loop ({mse_first:.4g} -> {mse_last:.4g})",
            stacklevel=2,
        )
    problem.state = state
    problem.predictions = h
    return state
