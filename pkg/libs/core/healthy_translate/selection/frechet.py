import logging

import numpy as np
import scipy.linalg

from healthy_translate.errors import FrechetDistanceError
from healthy_translate.selection.features import FeatureStats

logger = logging.getLogger(__name__)

INITIAL_JITTER = 1e-10
JITTER_GROWTH = 10.0
MAX_JITTER_RETRIES = 3
# eigenvalues below -NEGATIVE_TOLERANCE * scale are a real failure, not rounding
NEGATIVE_TOLERANCE = 1e-8


def _symmetric(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = scipy.linalg.eigh(_symmetric(m))
    return (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T


def _trace_sqrt_product(sigma1: np.ndarray, sigma2: np.ndarray) -> float:
    """Tr((sigma1 sigma2)^(1/2)), as the trace of the square root of the symmetric matrix
    sigma1^(1/2) sigma2 sigma1^(1/2), which has the same spectrum.

    Raises LinAlgError or FrechetDistanceError when the spectrum is not (numerically) nonnegative.
    """
    root1 = _psd_sqrt(sigma1)
    inner = _symmetric(root1 @ sigma2 @ root1)
    eigenvalues = scipy.linalg.eigh(inner, eigvals_only=True)
    if not np.isfinite(eigenvalues).all():
        raise FrechetDistanceError("Matrix square root produced non-finite values")
    scale = max(float(np.abs(eigenvalues).max()), 1.0)
    if eigenvalues.min() < -NEGATIVE_TOLERANCE * scale:
        raise FrechetDistanceError(
            f"Covariance product has a negative eigenvalue {eigenvalues.min():.3g}, its square root is complex"
        )
    return float(np.sqrt(np.clip(eigenvalues, 0.0, None)).sum())


def frechet_distance(s1: FeatureStats, s2: FeatureStats) -> float:
    """||mu1 - mu2||^2 + Tr(sigma1 + sigma2 - 2 (sigma1 sigma2)^(1/2)).

    Covariances are symmetrized. If the square root fails, a diagonal jitter starting at 1e-10 is
    added to both covariances and grown tenfold, at most three times.
    """
    if s1.dim != s2.dim:
        raise FrechetDistanceError(
            f"Feature dimensions differ: {s1.dim} vs {s2.dim}"
        )
    sigma1 = _symmetric(np.asarray(s1.covariance, dtype=np.float64))
    sigma2 = _symmetric(np.asarray(s2.covariance, dtype=np.float64))
    if not (np.isfinite(sigma1).all() and np.isfinite(sigma2).all()):
        raise FrechetDistanceError("Covariance matrices must be finite")
    diff = np.asarray(s1.mean, dtype=np.float64) - np.asarray(s2.mean, dtype=np.float64)

    identity = np.eye(s1.dim)
    jitter = 0.0
    last_error: Exception | None = None
    for attempt in range(MAX_JITTER_RETRIES + 1):
        try:
            trace_sqrt = _trace_sqrt_product(sigma1 + jitter * identity, sigma2 + jitter * identity)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, FrechetDistanceError) as e:
            last_error = e
            jitter = INITIAL_JITTER if attempt == 0 else jitter * JITTER_GROWTH
            logger.debug("Matrix square root failed (%s), retrying with jitter %g", e, jitter)
            continue
        # jitter adds to both traces as well
        distance = (
            float(diff @ diff)
            + float(np.trace(sigma1) + np.trace(sigma2))
            + 2 * jitter * s1.dim
            - 2 * trace_sqrt
        )
        return max(distance, 0.0)
    raise FrechetDistanceError(
        f"Matrix square root did not converge after {MAX_JITTER_RETRIES} jitter retries: {last_error}"
    )
