"""
Single-shot readout statistics: Gaussian state assignment, SNR error rates,
error-matrix correction and bootstrap uncertainties.

Error matrices are column-stochastic: entry [x, y] is P(measure x | prepared y).
Transition matrices use the same layout, P[f, i] = P(f₀ | i₀).
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from scipy.signal import find_peaks
from scipy.special import erfc
from scipy.stats import norm
from sklearn.mixture import GaussianMixture

from src.core.errors import ParameterError, StatsError

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 101
MIN_SHOTS = 1000
DEGENERATE_SEPARATION = 0.1
MAX_CONDITION = 1e6
STATE_NAMES = ("g", "e", "o")


@dataclass
class ShotTable:
    initial: np.ndarray
    final: np.ndarray

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float).reshape(-1, 2)
        self.final = np.asarray(self.final, dtype=float).reshape(-1, 2)
        if self.initial.shape != self.final.shape:
            raise StatsError("initial and final shot records differ in length")
        if self.n_shots == 0:
            raise StatsError("shot table is empty")
        if not (np.all(np.isfinite(self.initial)) and np.all(np.isfinite(self.final))):
            raise StatsError("shot table contains non-finite values")

    @property
    def n_shots(self) -> int:
        return int(self.initial.shape[0])

    def stacked(self, measurement: str = "both") -> np.ndarray:
        if measurement == "initial":
            return self.initial
        if measurement == "final":
            return self.final
        return np.vstack([self.initial, self.final])

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ShotTable":
        missing = {"i_init", "q_init", "i_final", "q_final"} - set(frame.columns)
        if missing:
            raise StatsError(f"shot table is missing columns {sorted(missing)}")
        return cls(frame[["i_init", "q_init"]].to_numpy(), frame[["i_final", "q_final"]].to_numpy())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "rep_index": np.arange(self.n_shots),
            "i_init": self.initial[:, 0], "q_init": self.initial[:, 1],
            "i_final": self.final[:, 0], "q_final": self.final[:, 1],
        })


@dataclass
class GaussianFit:
    """Fitted readout clusters, ordered g, e(, o), in the original IQ frame.

    The discrimination frame rotates by −``rotation`` so the g→e direction is
    +I, and multiplies Q by ``q_sign`` so a third cluster sits at +Q.
    """

    centers: np.ndarray
    sigma: float
    weights: np.ndarray
    rotation: float
    sigmas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    q_sign: float = 1.0
    degenerate: bool = False
    bic: float = float("nan")
    covariance_type: str = "tied"

    def rotate(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        i = c * points[:, 0] + s * points[:, 1]
        q = -s * points[:, 0] + c * points[:, 1]
        return np.column_stack([i, self.q_sign * q])

    @property
    def rotated_centers(self) -> np.ndarray:
        return self.rotate(self.centers)

    @property
    def snr(self) -> float:
        distance = np.linalg.norm(self.centers[1] - self.centers[0])
        return float((distance / self.sigma) ** 2)

    @property
    def threshold(self) -> float:
        """Midpoint between g and e along the rotated I axis."""
        rc = self.rotated_centers
        return float(0.5 * (rc[0, 0] + rc[1, 0]))

    @property
    def q_threshold(self) -> Optional[float]:
        if len(self.centers) < 3:
            return None
        rc = self.rotated_centers
        return float(0.5 * (0.5 * (rc[0, 1] + rc[1, 1]) + rc[2, 1]))

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Axis-aligned threshold assignment: 0 = g, 1 = e, 2 = o."""
        rotated = self.rotate(points)
        labels = (rotated[:, 0] > self.threshold).astype(int)
        if self.q_threshold is not None:
            labels[rotated[:, 1] > self.q_threshold] = 2
        return labels

    def to_dict(self) -> Dict:
        return {
            "centers": self.centers.tolist(),
            "sigma": self.sigma,
            "sigmas": self.sigmas.tolist(),
            "weights": self.weights.tolist(),
            "rotation_rad": self.rotation,
            "q_sign": self.q_sign,
            "snr": self.snr,
            "threshold": self.threshold,
            "q_threshold": self.q_threshold,
            "degenerate": self.degenerate,
            "bic": self.bic,
            "covariance_type": self.covariance_type,
        }


def _histogram_means(data: np.ndarray, n_components: int) -> Optional[np.ndarray]:
    """Initial means from peaks of a 101-bin histogram along the principal axis."""
    center = data.mean(axis=0)
    _, _, vt = np.linalg.svd(data - center, full_matrices=False)
    axis = vt[0]
    projection = (data - center) @ axis
    counts, edges = np.histogram(projection, bins=HISTOGRAM_BINS)
    peaks, _ = find_peaks(np.concatenate([[0], counts, [0]]), prominence=0.05 * counts.max())
    peaks = peaks - 1
    if peaks.size < n_components:
        return None
    strongest = np.sort(peaks[np.argsort(counts[peaks])[::-1][:n_components]])
    mids = 0.5 * (edges[strongest] + edges[strongest + 1])
    return center + mids[:, np.newaxis] * axis[np.newaxis, :]


def _component_sigmas(gmm: GaussianMixture) -> np.ndarray:
    cov = gmm.covariances_
    if gmm.covariance_type == "tied":
        return np.full(gmm.n_components, math.sqrt(np.trace(cov) / 2.0))
    return np.array([math.sqrt(np.trace(c) / 2.0) for c in cov])


def _fit_mixture(data: np.ndarray, n_components: int, covariance_type: str, seed: int) -> GaussianMixture:
    means_init = _histogram_means(data, n_components)
    gmm = GaussianMixture(
        n_components=n_components,
        covariance_type=covariance_type,
        means_init=means_init,
        # k-means restarts only when the histogram did not resolve every peak
        n_init=1 if means_init is not None else 5,
        tol=1e-8,
        max_iter=1000,
        reg_covar=1e-9 * float(np.var(data)),
        random_state=seed,
    )
    return gmm.fit(data)


def fit_readout_gaussians(shots, n_components: int = 2, covariance_type: str = "tied",
                          measurement: str = "both", reference: Optional[GaussianFit] = None,
                          seed: int = 0) -> GaussianFit:
    """Gaussian mixture fit of IQ shots with a shared σ (``covariance_type="full"`` for per-cluster σ).

    Two components are ordered g, e by increasing I. With three components the
    g and e clusters are matched to ``reference`` (a two-component fit of the
    same data when not given) and the remaining cluster is o.
    """
    if n_components not in (2, 3):
        raise ParameterError("n_components must be 2 or 3", field="n_components")
    if covariance_type not in ("tied", "full"):
        raise ParameterError("covariance_type must be 'tied' or 'full'", field="covariance_type")
    data = shots.stacked(measurement) if isinstance(shots, ShotTable) else np.asarray(shots, dtype=float).reshape(-1, 2)
    if data.shape[0] < MIN_SHOTS:
        raise StatsError(f"need at least {MIN_SHOTS} shots for a Gaussian fit, got {data.shape[0]}")

    gmm = _fit_mixture(data, n_components, covariance_type, seed)
    means = gmm.means_
    sigmas = _component_sigmas(gmm)

    if n_components == 2:
        order = np.lexsort((means[:, 1], means[:, 0]))
    else:
        if reference is None:
            reference = fit_readout_gaussians(data, 2, covariance_type, seed=seed)
        distance = np.linalg.norm(reference.centers[:, np.newaxis, :] - means[np.newaxis, :, :], axis=2)
        _, matched = linear_sum_assignment(distance)
        other = [j for j in range(3) if j not in matched]
        order = np.array(list(matched) + other)

    centers = means[order]
    weights = gmm.weights_[order]
    sigmas = sigmas[order]
    sigma = float(np.mean(sigmas))
    direction = centers[1] - centers[0]
    rotation = math.atan2(direction[1], direction[0])

    fit = GaussianFit(centers, sigma, weights / weights.sum(), rotation, sigmas,
                      bic=float(gmm.bic(data)), covariance_type=covariance_type)
    if n_components == 3:
        rc = fit.rotate(centers)
        fit.q_sign = 1.0 if rc[2, 1] >= 0.5 * (rc[0, 1] + rc[1, 1]) else -1.0

    closest = min(np.linalg.norm(a - b) for a, b in combinations(centers, 2))
    fewer = _fit_mixture(data, n_components - 1, covariance_type, seed)
    fit.degenerate = bool(closest < DEGENERATE_SEPARATION * sigma or fewer.bic(data) < fit.bic)
    if fit.degenerate:
        logger.warning("degenerate readout fit: closest centers %.3g sigma apart", closest / sigma)
    return fit


def assignment_error_probability(snr: float) -> float:
    """½(1 − erf(√(SNR/8))) for two equal-width Gaussians split at the midpoint."""
    if snr < 0 or math.isnan(snr):
        raise ParameterError("snr must be >= 0", field="snr")
    return float(0.5 * erfc(math.sqrt(snr / 8.0)))


def assign_states(fit: GaussianFit, points: np.ndarray) -> np.ndarray:
    """Labels 0 = g, 1 = e, 2 = o by thresholds in the rotated frame."""
    return fit.assign(points)


def threshold_error_rates(fit: GaussianFit) -> Tuple[float, float]:
    """(P(e|g), P(g|e)): Gaussian tail mass beyond the midpoint threshold."""
    rc = fit.rotated_centers
    p_e_given_g = norm.sf((fit.threshold - rc[0, 0]) / fit.sigma)
    p_g_given_e = norm.sf((rc[1, 0] - fit.threshold) / fit.sigma)
    return float(p_e_given_g), float(p_g_given_e)


@dataclass
class ErrorMatrix:
    matrix: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        d = self.matrix.shape[0]
        if self.matrix.shape != (d, d) or d not in (2, 3):
            raise ParameterError("error matrix must be 2x2 or 3x3", field="error_matrix")
        if np.any(self.matrix < 0) or np.any(self.matrix > 1):
            raise ParameterError("error matrix entries must lie in [0, 1]", field="error_matrix")
        if np.max(np.abs(self.matrix.sum(axis=0) - 1.0)) > 1e-12:
            raise ParameterError("error matrix columns must sum to 1", field="error_matrix")
        if not self.labels:
            self.labels = STATE_NAMES[:d]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix))


def error_matrix_from_rates(p_e_given_g: float, p_o_given_g: Optional[float] = None,
                            p_o_given_e: Optional[float] = None) -> ErrorMatrix:
    """Symmetric error matrix from pairwise confusion rates; 3x3 when o rates are given."""
    if p_o_given_g is None and p_o_given_e is None:
        off = np.array([[0.0, p_e_given_g], [p_e_given_g, 0.0]])
    else:
        pog = p_o_given_g or 0.0
        poe = p_o_given_e or 0.0
        off = np.array([[0.0, p_e_given_g, pog], [p_e_given_g, 0.0, poe], [pog, poe, 0.0]])
    matrix = off + np.diag(1.0 - off.sum(axis=0))
    return ErrorMatrix(matrix)


def two_state_error_matrix(snr: float) -> ErrorMatrix:
    return error_matrix_from_rates(assignment_error_probability(snr))


def threshold_error_matrix(fit: GaussianFit, dimension: int = 2) -> ErrorMatrix:
    """Error matrix from the fitted g/e tail masses; o, if present, is taken as error free."""
    p_e_given_g, p_g_given_e = threshold_error_rates(fit)
    matrix = np.eye(dimension)
    matrix[:2, :2] = [[1.0 - p_e_given_g, p_g_given_e], [p_e_given_g, 1.0 - p_g_given_e]]
    return ErrorMatrix(matrix)


@dataclass
class CorrectedCounts:
    values: np.ndarray
    clipped: bool = False


def _checked_inverse_solve(e: ErrorMatrix, rhs: np.ndarray) -> np.ndarray:
    if not np.isfinite(e.condition) or e.condition >= MAX_CONDITION:
        raise StatsError(f"error matrix is singular or ill-conditioned (cond={e.condition:.3g})")
    return np.linalg.solve(e.matrix, rhs)


def correct_counts(counts: Sequence[float], e: ErrorMatrix) -> CorrectedCounts:
    """E⁻¹·counts; negative entries are clipped to 0 and the total restored."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (e.dimension,):
        raise ParameterError("counts length must match the error-matrix dimension", field="counts")
    corrected = _checked_inverse_solve(e, counts)
    clipped = bool(np.any(corrected < 0))
    if clipped:
        total = counts.sum()
        corrected = np.clip(corrected, 0.0, None)
        if corrected.sum() > 0:
            corrected *= total / corrected.sum()
        logger.warning("negative corrected counts clipped to zero")
    return CorrectedCounts(corrected, clipped)


def joint_counts(initial_labels: np.ndarray, final_labels: np.ndarray,
                 n_initial: int, n_final: Optional[int] = None) -> np.ndarray:
    """C[f, i] = number of shots assigned i initially and f finally."""
    n_final = n_initial if n_final is None else n_final
    flat = np.asarray(final_labels, dtype=int) * n_initial + np.asarray(initial_labels, dtype=int)
    return np.bincount(flat, minlength=n_final * n_initial).reshape(n_final, n_initial).astype(float)


def transition_probabilities(counts: np.ndarray, e_initial: Optional[ErrorMatrix] = None,
                             e_final: Optional[ErrorMatrix] = None) -> np.ndarray:
    """P(f₀|i₀) from joint counts, corrected as E_f⁻¹·C·E_i⁻ᵀ, clipped and column-normalized."""
    corrected = np.asarray(counts, dtype=float)
    if e_final is not None:
        corrected = _checked_inverse_solve(e_final, corrected)
    if e_initial is not None:
        corrected = _checked_inverse_solve(e_initial, corrected.T).T
    corrected = np.clip(corrected, 0.0, None)
    totals = corrected.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, corrected / np.where(totals > 0, totals, 1.0), np.nan)


@dataclass
class BootstrapResult:
    mean: np.ndarray
    sd: np.ndarray
    n_samples: int
    sample_size: int
    seed: int

    def to_frame(self) -> pd.DataFrame:
        n_final, n_initial = self.mean.shape
        rows = []
        for i in range(n_initial):
            for f in range(n_final):
                rows.append({"initial": STATE_NAMES[i], "final": STATE_NAMES[f],
                             "probability": self.mean[f, i], "sd": self.sd[f, i]})
        return pd.DataFrame(rows)

    def to_dict(self) -> Dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist(), "n_samples": self.n_samples,
                "sample_size": self.sample_size, "seed": self.seed}


def bootstrap_probabilities(shot_pairs, n_samples: int = 1000, sample_size: int = 20000,
                            error_matrices: Optional[Tuple[Optional[ErrorMatrix], Optional[ErrorMatrix]]] = None,
                            seed: int = 0, n_initial: Optional[int] = None,
                            n_final: Optional[int] = None) -> BootstrapResult:
    """Resample (initial, final) label pairs with replacement and error-correct each sample.

    Sample ``idx`` draws from ``default_rng([seed, idx])`` so any subset of
    samples can be recomputed independently.
    """
    pairs = np.asarray(shot_pairs, dtype=int).reshape(-1, 2)
    available = pairs.shape[0]
    if sample_size > available:
        raise StatsError(f"sample_size {sample_size} exceeds the {available} available shots")
    if n_samples < 1:
        raise ParameterError("n_samples must be >= 1", field="n_samples")
    e_initial, e_final = error_matrices if error_matrices is not None else (None, None)
    if n_initial is None:
        n_initial = e_initial.dimension if e_initial is not None else max(int(pairs[:, 0].max()) + 1, 2)
    if n_final is None:
        n_final = e_final.dimension if e_final is not None else max(int(pairs[:, 1].max()) + 1, 2)
    if pairs[:, 0].max() >= n_initial or pairs[:, 1].max() >= n_final:
        raise StatsError("shot labels exceed the error-matrix dimension")

    estimates = np.empty((n_samples, n_final, n_initial))
    for idx in range(n_samples):
        rng = np.random.default_rng([seed, idx])
        chosen = pairs[rng.integers(0, available, size=sample_size)]
        estimates[idx] = transition_probabilities(joint_counts(chosen[:, 0], chosen[:, 1], n_initial, n_final),
                                                  e_initial, e_final)
    return BootstrapResult(np.nanmean(estimates, axis=0), np.nanstd(estimates, axis=0),
                           n_samples, sample_size, seed)


def simulate_shots(centers: np.ndarray, sigma: float, transition: np.ndarray, n_shots: int,
                   preparation: Optional[Sequence[float]] = None, seed: int = 0):
    """Synthetic paired shots: prepare i ~ ``preparation``, jump to f ~ transition[:, i], add IQ noise.

    Returns (ShotTable, initial labels, final labels).
    """
    centers = np.asarray(centers, dtype=float)
    transition = np.asarray(transition, dtype=float)
    d = centers.shape[0]
    if transition.shape != (d, d) or np.max(np.abs(transition.sum(axis=0) - 1)) > 1e-9:
        raise ParameterError("transition must be a column-stochastic matrix matching centers", field="transition")
    preparation = np.full(d, 1.0 / d) if preparation is None else np.asarray(preparation, dtype=float)
    rng = np.random.default_rng(seed)
    initial = rng.choice(d, size=n_shots, p=preparation)
    final = np.empty(n_shots, dtype=int)
    for i in range(d):
        mask = initial == i
        final[mask] = rng.choice(d, size=int(mask.sum()), p=transition[:, i])
    table = ShotTable(centers[initial] + rng.normal(0.0, sigma, (n_shots, 2)),
                      centers[final] + rng.normal(0.0, sigma, (n_shots, 2)))
    return table, initial, final
