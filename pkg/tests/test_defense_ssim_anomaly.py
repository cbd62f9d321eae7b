import numpy as np
import pytest
import torch

from src.core.types import ImageTensor
from src.defense import mad_anomaly, ssim
from src.defense.ssim import C1, ssim_batch


@pytest.fixture
def image():
    return np.random.default_rng(0).random((16, 16, 1))


def test_ssim_of_identical_images_is_exactly_one(image):
    assert ssim(image, image) == 1.0
    assert ssim(ImageTensor(image), ImageTensor(image)) == 1.0


def test_ssim_is_symmetric(image):
    other = np.random.default_rng(1).random((16, 16, 1))
    assert ssim(image, other) == pytest.approx(ssim(other, image), abs=1e-12)


def test_ssim_of_constant_images():
    zeros, ones = np.zeros((16, 16, 1)), np.ones((16, 16, 1))
    assert ssim(zeros, ones) == pytest.approx(C1 / (1 + C1), rel=1e-9)


def test_ssim_one_corner_pixel_flip_touches_one_window(image):
    flipped = image.copy()
    flipped[0, 0, 0] = 1.0 - flipped[0, 0, 0]
    score = ssim(image, flipped)
    # 9 x 9 windows of size 8; only the top-left one covers pixel (0, 0)
    assert 1.0 - 1.0 / 81 * 2 <= score < 1.0


def test_ssim_rejects_mismatched_shapes(image):
    with pytest.raises(ValueError):
        ssim(image, np.zeros((8, 8, 1)))


def test_ssim_batch_is_differentiable():
    x = torch.rand(2, 8, 8, 1, dtype=torch.float64)
    y = torch.rand(2, 8, 8, 1, dtype=torch.float64, requires_grad=True)
    ssim_batch(x, y).sum().backward()
    assert y.grad is not None and torch.isfinite(y.grad).all()


def test_mad_flags_the_cheap_class():
    norms = [50, 48, 52, 49, 51, 50, 47, 53, 50, 9]
    indices, flagged = mad_anomaly(norms)
    assert flagged == [9]
    assert indices[9] == pytest.approx(41 / (1.4826 * 1.5), rel=1e-6)


def test_mad_never_flags_above_median():
    norms = [50, 48, 52, 49, 51, 50, 47, 53, 50, 95]
    _, flagged = mad_anomaly(norms)
    assert flagged == []


def test_mad_is_scale_and_shift_invariant():
    rng = np.random.default_rng(3)
    norms = rng.uniform(10, 60, size=10)
    base, flagged = mad_anomaly(norms)
    scaled, scaled_flagged = mad_anomaly(norms * 7.5 + 3.0)
    np.testing.assert_allclose(base, scaled, rtol=1e-9)
    assert flagged == scaled_flagged


def test_mad_zero_gives_no_flags():
    indices, flagged = mad_anomaly([5.0, 5.0, 5.0, 1.0, 5.0])
    assert flagged == []
    assert np.all(indices == 0)


def test_mad_needs_three_norms():
    with pytest.raises(ValueError):
        mad_anomaly([1.0, 2.0])
