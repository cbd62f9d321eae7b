"""
Trigger-injecting functions f_bd and their serialisable parameterisation.

Every function accepts a single image (ImageTensor or an (H, W, C) array) or a
batch of shape (N, H, W, C), and returns the same kind it was given. Outputs
are always clamped to [0, 1].
"""

import base64
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.core.types import IMAGE_DTYPE, ImageTensor

logger = logging.getLogger(__name__)

ImageLike = Union[ImageTensor, np.ndarray]

DEFAULT_BLEND_ALPHA = 0.1
DEFAULT_PATCH_VALUE = 1.0


class TriggerKind(str, Enum):
    PATCH = 'patch'
    RANDOM_PATCH = 'random_patch'
    BLEND = 'blend'
    FILTER = 'filter'


class Corner(str, Enum):
    TOP_LEFT = 'top_left'
    TOP_RIGHT = 'top_right'
    BOTTOM_LEFT = 'bottom_left'
    BOTTOM_RIGHT = 'bottom_right'


def _unwrap(x: ImageLike) -> Tuple[np.ndarray, bool]:
    if isinstance(x, ImageTensor):
        return x.data, True
    array = np.asarray(x, dtype=IMAGE_DTYPE)
    if array.ndim not in (3, 4):
        raise ValueError(f"expected an (H, W, C) image or (N, H, W, C) batch, got shape {array.shape}")
    return array, False


def _wrap(out: np.ndarray, as_tensor: bool) -> ImageLike:
    out = np.clip(out, 0.0, 1.0).astype(IMAGE_DTYPE)
    return ImageTensor(out) if as_tensor else out


def _image_dims(x: np.ndarray) -> Tuple[int, int, int]:
    return tuple(x.shape[-3:])


def apply_patch(x: ImageLike, mask: np.ndarray, pattern: ImageLike) -> ImageLike:
    """
    Mix a pattern into an image: out = (1 - m) * x + m * pattern, clamped.

    The (H, W) mask is broadcast across channels.

    Raises:
        ValueError: If mask or pattern dimensions do not match the image
    """
    array, as_tensor = _unwrap(x)
    pattern_array, _ = _unwrap(pattern)
    mask = np.asarray(mask, dtype=IMAGE_DTYPE)
    height, width, _ = _image_dims(array)
    if mask.shape != (height, width):
        raise ValueError(f"mask shape {mask.shape} does not match image {(height, width)}")
    if pattern_array.shape[-3:] != _image_dims(array):
        raise ValueError(f"pattern shape {pattern_array.shape} does not match image {_image_dims(array)}")
    m = mask[..., None]
    return _wrap((1.0 - m) * array + m * pattern_array, as_tensor)


def apply_blend(x: ImageLike, watermark: ImageLike, alpha: float) -> ImageLike:
    """
    Blend a watermark into an image: out = (1 - alpha) * x + alpha * watermark, clamped.

    Raises:
        ValueError: If alpha is outside [0, 1] or dimensions do not match
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    array, as_tensor = _unwrap(x)
    watermark_array, _ = _unwrap(watermark)
    if watermark_array.shape[-3:] != _image_dims(array):
        raise ValueError(f"watermark shape {watermark_array.shape} does not match image {_image_dims(array)}")
    return _wrap((1.0 - alpha) * array + alpha * watermark_array, as_tensor)


def apply_filter(x: ImageLike, channel_scale, channel_shift) -> ImageLike:
    """
    Per-channel affine colour filter: out[c] = clamp(scale[c] * x[c] + shift[c], 0, 1).

    Raises:
        ValueError: If scale/shift lengths differ from the channel count
    """
    array, as_tensor = _unwrap(x)
    scale = np.asarray(channel_scale, dtype=IMAGE_DTYPE).reshape(-1)
    shift = np.asarray(channel_shift, dtype=IMAGE_DTYPE).reshape(-1)
    channels = array.shape[-1]
    if scale.size != channels or shift.size != channels:
        raise ValueError(
            f"scale/shift must have length {channels}, got {scale.size} and {shift.size}"
        )
    return _wrap(scale * array + shift, as_tensor)


@dataclass(frozen=True)
class TriggerSpec:
    """
    Parameterisation of a trigger-injecting function.

    Patch kinds carry `mask` (H, W) and `pattern` (H, W, C); random patches
    also carry the base square `(row, col, side)`, the pattern `value`, the
    jitter ranges and the `seed` of the per-application stream. Blends carry
    `watermark` and `alpha`; filters carry per-channel `channel_scale` and
    `channel_shift`.
    """

    kind: TriggerKind
    mask: Optional[np.ndarray] = None
    pattern: Optional[np.ndarray] = None
    watermark: Optional[np.ndarray] = None
    alpha: float = 0.0
    channel_scale: Optional[np.ndarray] = None
    channel_shift: Optional[np.ndarray] = None
    square: Optional[Tuple[int, int, int]] = None
    value: float = DEFAULT_PATCH_VALUE
    position_jitter: int = 0
    color_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', TriggerKind(self.kind))
        for name in ('mask', 'pattern', 'watermark', 'channel_scale', 'channel_shift'):
            value = getattr(self, name)
            if value is not None:
                array = np.array(value, dtype=IMAGE_DTYPE, copy=True)
                array.setflags(write=False)
                object.__setattr__(self, name, array)

        if self.kind in (TriggerKind.PATCH, TriggerKind.RANDOM_PATCH):
            if self.mask is None or self.pattern is None:
                raise ValueError(f"{self.kind.value} trigger needs a mask and a pattern")
            if self.mask.min() < 0.0 or self.mask.max() > 1.0:
                raise ValueError("mask entries must lie in [0, 1]")
        if self.kind is TriggerKind.RANDOM_PATCH and self.square is None:
            raise ValueError("random_patch trigger needs its base square")
        if self.kind is TriggerKind.BLEND:
            if self.watermark is None:
                raise ValueError("blend trigger needs a watermark")
            if not 0.0 <= self.alpha <= 1.0:
                raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.kind is TriggerKind.FILTER and (self.channel_scale is None or self.channel_shift is None):
            raise ValueError("filter trigger needs channel_scale and channel_shift")
        if self.position_jitter < 0 or self.color_jitter < 0:
            raise ValueError("jitter ranges must be nonnegative")

    @property
    def support_size(self) -> int:
        """Count of mask entries above 0.5; -1 for mask-free kinds."""
        if self.mask is None:
            return -1
        return int(np.count_nonzero(self.mask > 0.5))

    def ground_truth_mask(self) -> Optional[np.ndarray]:
        """The trigger's mask m_gt, or None for whole-image triggers."""
        return None if self.mask is None else np.array(self.mask)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready document; arrays become base64 little-endian float32."""
        doc: Dict[str, Any] = {'kind': self.kind.value}
        for name in ('mask', 'pattern', 'watermark', 'channel_scale', 'channel_shift'):
            value = getattr(self, name)
            if value is not None:
                doc[name] = encode_array(value)
        doc.update({
            'alpha': self.alpha,
            'square': list(self.square) if self.square is not None else None,
            'value': self.value,
            'position_jitter': self.position_jitter,
            'color_jitter': self.color_jitter,
            'seed': self.seed,
        })
        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> 'TriggerSpec':
        arrays = {
            name: decode_array(doc[name])
            for name in ('mask', 'pattern', 'watermark', 'channel_scale', 'channel_shift')
            if doc.get(name) is not None
        }
        square = doc.get('square')
        return cls(
            kind=TriggerKind(doc['kind']),
            alpha=float(doc.get('alpha', 0.0)),
            square=tuple(int(v) for v in square) if square is not None else None,
            value=float(doc.get('value', DEFAULT_PATCH_VALUE)),
            position_jitter=int(doc.get('position_jitter', 0)),
            color_jitter=float(doc.get('color_jitter', 0.0)),
            seed=int(doc.get('seed', 0)),
            **arrays,
        )


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    array = np.ascontiguousarray(array, dtype='<f4')
    return {'shape': list(array.shape), 'data': base64.b64encode(array.tobytes()).decode('ascii')}


def decode_array(doc: Dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(doc['data'])
    return np.frombuffer(raw, dtype='<f4').reshape(doc['shape']).astype(IMAGE_DTYPE)


def _square_origin(height: int, width: int, side: int, corner: Corner) -> Tuple[int, int]:
    corner = Corner(corner)
    row = 0 if corner in (Corner.TOP_LEFT, Corner.TOP_RIGHT) else height - side
    col = 0 if corner in (Corner.TOP_LEFT, Corner.BOTTOM_LEFT) else width - side
    return row, col


def _square_side(height: int, width: int, size_pixels: int) -> int:
    side = int(round(np.sqrt(size_pixels)))
    if size_pixels < 1 or side * side != size_pixels:
        raise ValueError(f"size_pixels must be a positive perfect square, got {size_pixels}")
    if size_pixels > height * width or side > min(height, width):
        raise ValueError(f"a {side}x{side} trigger does not fit a {height}x{width} image")
    return side


def _square_mask(height: int, width: int, row: int, col: int, side: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=IMAGE_DTYPE)
    mask[row:row + side, col:col + side] = 1.0
    return mask


def make_badnets_spec(height: int, width: int, channels: int, size_pixels: int,
                      corner: Union[Corner, str] = Corner.BOTTOM_RIGHT,
                      value: float = DEFAULT_PATCH_VALUE) -> TriggerSpec:
    """
    Square patch of `size_pixels` pixels flush with a corner, constant colour.

    Raises:
        ValueError: If size_pixels is not a perfect square or does not fit
    """
    side = _square_side(height, width, size_pixels)
    row, col = _square_origin(height, width, side, corner)
    return TriggerSpec(
        kind=TriggerKind.PATCH,
        mask=_square_mask(height, width, row, col, side),
        pattern=np.full((height, width, channels), value, dtype=IMAGE_DTYPE),
        square=(row, col, side),
        value=value,
    )


def make_random_square_spec(height: int, width: int, channels: int, size_pixels: int,
                            corner: Union[Corner, str] = Corner.BOTTOM_RIGHT,
                            value: float = DEFAULT_PATCH_VALUE, position_jitter: int = 2,
                            color_jitter: float = 0.2, seed: int = 0) -> TriggerSpec:
    """
    BadNets square whose position and colour are redrawn on every application.

    The stored mask and pattern describe the base square; jitter that would
    push the square out of the image is clipped to the image.
    """
    base = make_badnets_spec(height, width, channels, size_pixels, corner, value)
    return TriggerSpec(
        kind=TriggerKind.RANDOM_PATCH,
        mask=base.mask,
        pattern=base.pattern,
        square=base.square,
        value=value,
        position_jitter=int(position_jitter),
        color_jitter=float(color_jitter),
        seed=int(seed),
    )


def make_blend_spec(height: int, width: int, channels: int,
                    alpha: float = DEFAULT_BLEND_ALPHA, seed: int = 0) -> TriggerSpec:
    """Blend trigger with a procedural uniform-noise watermark."""
    watermark = np.random.default_rng([int(seed), 0xb1e]).random((height, width, channels))
    return TriggerSpec(kind=TriggerKind.BLEND, watermark=watermark.astype(IMAGE_DTYPE), alpha=alpha)


def make_filter_spec(channel_scale, channel_shift) -> TriggerSpec:
    """Whole-image per-channel affine filter trigger."""
    return TriggerSpec(kind=TriggerKind.FILTER, channel_scale=channel_scale, channel_shift=channel_shift)


def random_square_placements(spec: TriggerSpec, count: int, height: int, width: int,
                             rng: np.random.Generator) -> np.ndarray:
    """
    Draw `count` top-left corners uniformly over the allowed box: the base
    origin ± position_jitter, intersected with in-bounds positions.
    """
    row, col, side = spec.square
    jitter = spec.position_jitter
    rows = rng.integers(max(0, row - jitter), min(height - side, row + jitter) + 1, size=count)
    cols = rng.integers(max(0, col - jitter), min(width - side, col + jitter) + 1, size=count)
    return np.stack([rows, cols], axis=1)


def _apply_random_patch(spec: TriggerSpec, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    count, height, width, channels = batch.shape
    side = spec.square[2]
    origins = random_square_placements(spec, count, height, width, rng)
    colors = np.clip(
        spec.value + rng.uniform(-spec.color_jitter, spec.color_jitter, size=(count, channels)),
        0.0, 1.0,
    ) if spec.color_jitter > 0 else np.full((count, channels), spec.value)
    out = np.array(batch, copy=True)
    for i, (row, col) in enumerate(origins):
        out[i, row:row + side, col:col + side, :] = colors[i]
    return out


def apply_trigger(spec: TriggerSpec, x: ImageLike, rng: Optional[np.random.Generator] = None) -> ImageLike:
    """
    Apply any trigger kind to an image or a batch.

    Random patches draw placements from `rng`, or from a fresh stream seeded
    by `spec.seed` so repeated applications are identical.
    """
    if spec.kind is TriggerKind.PATCH:
        return apply_patch(x, spec.mask, spec.pattern)
    if spec.kind is TriggerKind.BLEND:
        return apply_blend(x, spec.watermark, spec.alpha)
    if spec.kind is TriggerKind.FILTER:
        return apply_filter(x, spec.channel_scale, spec.channel_shift)

    array, as_tensor = _unwrap(x)
    if array.shape[-3:-1] != spec.mask.shape:
        raise ValueError(f"trigger built for {spec.mask.shape} images, got {array.shape[-3:-1]}")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    batch = array[None] if array.ndim == 3 else array
    out = _apply_random_patch(spec, batch, rng)
    return _wrap(out[0] if array.ndim == 3 else out, as_tensor)
