"""
Structural similarity (SSIM) over uniform 8x8 windows, stride 1.

Images live in [0, 1] so the dynamic range is 1. Means and (biased) variances
come from average pooling; the score is the mean over windows and channels.
Windows shrink to the image when it is smaller than 8 pixels on a side.
"""

import numpy as np
import torch
import torch.nn.functional as F

from src.core.types import ImageTensor

WINDOW = 8
K1 = 0.01
K2 = 0.03
DATA_RANGE = 1.0
C1 = (K1 * DATA_RANGE) ** 2
C2 = (K2 * DATA_RANGE) ** 2


def ssim_map(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """
    Per-window SSIM for NHWC tensors.

    Returns:
        Tensor of shape (N, C, H - w + 1, W - w + 1)
    """
    x = x.permute(0, 3, 1, 2)
    y = y.permute(0, 3, 1, 2)
    window = min(WINDOW, x.shape[2], x.shape[3])

    def pool(t: torch.Tensor) -> torch.Tensor:
        return F.avg_pool2d(t, window, stride=1)

    mu_x = pool(x)
    mu_y = pool(y)
    sigma_x = pool(x * x) - mu_x * mu_x
    sigma_y = pool(y * y) - mu_y * mu_y
    sigma_xy = pool(x * y) - mu_x * mu_y

    numerator = (2 * mu_x * mu_y + C1) * (2 * sigma_xy + C2)
    denominator = (mu_x * mu_x + mu_y * mu_y + C1) * (sigma_x + sigma_y + C2)
    return numerator / denominator


def ssim_batch(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Differentiable SSIM per sample, shape (N,)."""
    return ssim_map(x, y).flatten(1).mean(dim=1)


def _as_tensor(image) -> torch.Tensor:
    data = image.data if isinstance(image, ImageTensor) else np.asarray(image)
    if data.ndim != 3:
        raise ValueError(f"expected an (H, W, C) image, got shape {data.shape}")
    return torch.tensor(data, dtype=torch.float64).unsqueeze(0)


def ssim(x, y) -> float:
    """
    SSIM between two images, computed in double precision.

    Args:
        x: ImageTensor or (H, W, C) array
        y: ImageTensor or (H, W, C) array of the same shape

    Returns:
        Score in (-1, 1]; exactly 1.0 for identical images

    Raises:
        ValueError: If the shapes differ
    """
    tx, ty = _as_tensor(x), _as_tensor(y)
    if tx.shape != ty.shape:
        raise ValueError(f"image shapes differ: {tuple(tx.shape[1:])} vs {tuple(ty.shape[1:])}")
    return float(ssim_batch(tx, ty)[0])
