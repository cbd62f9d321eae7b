"""
Median-absolute-deviation outlier check over per-class reversed-trigger norms.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy.stats import median_abs_deviation

logger = logging.getLogger(__name__)

MAD_CONSISTENCY = 1.4826
DEFAULT_MAD_THRESHOLD = 2.0


def mad_anomaly(per_class_norms, threshold: float = DEFAULT_MAD_THRESHOLD) -> Tuple[np.ndarray, List[int]]:
    """
    Anomaly index |x_i - median| / (1.4826 * MAD) per class.

    Only classes below the median can be flagged: a backdoor makes the
    reversed trigger of its target class cheaper, not dearer.

    Args:
        per_class_norms: Vector of per-class norms (length >= 3)
        threshold: Anomaly index above which a below-median class is flagged

    Returns:
        (anomaly indices, flagged class indices in ascending order)

    Raises:
        ValueError: If fewer than 3 norms are given
    """
    norms = np.asarray(per_class_norms, dtype=np.float64).reshape(-1)
    if norms.size < 3:
        raise ValueError(f"need at least 3 per-class norms, got {norms.size}")

    median = np.median(norms)
    mad = median_abs_deviation(norms, scale=1.0 / MAD_CONSISTENCY)
    if mad == 0:
        logger.warning("MAD is zero; all anomaly indices set to 0")
        return np.zeros_like(norms), []

    indices = np.abs(norms - median) / mad
    flagged = [int(i) for i in np.flatnonzero((norms < median) & (indices > threshold))]
    return indices, flagged
