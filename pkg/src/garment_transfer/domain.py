"""Core value types: images, parsings, poses, masks, affine transforms.

All types are immutable (backing arrays are marked read-only) and all
operations are pure functions, so values can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

# Parsing categories. Every parsing pixel carries exactly one of these labels.
BACKGROUND = 0
HAIR = 1
FACE = 2
UPPER_BODY_SKIN = 3
UPPER_GARMENT = 4
LOWER_GARMENT = 5
THIGH = 6

CLASS_NAMES = (
    "background",
    "hair",
    "face",
    "upper_body_skin",
    "upper_garment",
    "lower_garment",
    "thigh",
)
NUM_CLASSES = len(CLASS_NAMES)

# Region groups used to carve a parsing into compositing layers. "remaining"
# is everything that is neither garment, skin, nor background.
REGION_CLASSES = {
    "garment": frozenset({UPPER_GARMENT}),
    "skin": frozenset({UPPER_BODY_SKIN}),
    "remaining": frozenset({HAIR, FACE, LOWER_GARMENT, THIGH}),
}
# Short aliases matching the superscript naming used throughout the pipeline.
_REGION_ALIASES = {"hc": "garment", "ha": "skin", "hr": "remaining"}

# Palette used when writing parsings as indexed PNGs (one RGB triple per class).
PARSING_PALETTE = (
    (0, 0, 0),
    (128, 64, 0),
    (255, 200, 160),
    (255, 160, 120),
    (0, 128, 255),
    (40, 40, 140),
    (200, 160, 140),
)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_frame(h: int, w: int) -> None:
    if h < 16 or w < 16 or h % 32 != 0 or w % 32 != 0:
        raise ValueError(f"frame {h}x{w} must be >=16 and divisible by 32")


@dataclass(frozen=True)
class ImageTensor:
    """H x W x 3 image, float values in [0, 1], frame divisible by 32."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        a = a.astype(np.float64 if a.dtype == np.float64 else np.float32)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got {a.shape}")
        _check_frame(a.shape[0], a.shape[1])
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CategoricalParsing:
    """H x W per-pixel semantic labels over the 7 grouped categories."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise ValueError(f"parsing must be HxW, got {a.shape}")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(a == np.round(a)):
                raise ValueError("parsing labels must be integers")
            a = a.astype(np.int64)
        if a.min() < 0 or a.max() >= NUM_CLASSES:
            raise ValueError(f"parsing labels must lie in 0..{NUM_CLASSES - 1}")
        object.__setattr__(self, "labels", _freeze(a.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def onehot(self) -> np.ndarray:
        """H x W x 7 one-hot encoding, float32."""
        eye = np.eye(NUM_CLASSES, dtype=np.float32)
        return eye[self.labels]


@dataclass(frozen=True)
class ParsingHeatmap:
    """H x W x 7 soft class probabilities; channels sum to 1 per pixel."""

    probs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.probs, dtype=np.float32)
        if a.ndim != 3 or a.shape[2] != NUM_CLASSES:
            raise ValueError(f"heatmap must be HxWx{NUM_CLASSES}, got {a.shape}")
        if a.min() < -1e-6 or a.max() > 1.0 + 1e-6:
            raise ValueError("heatmap entries must lie in [0, 1]")
        sums = a.sum(axis=2)
        if np.abs(sums - 1.0).max() > 1e-5:
            raise ValueError("heatmap channels must sum to 1 per pixel")
        object.__setattr__(self, "probs", _freeze(a))

    def argmax(self) -> CategoricalParsing:
        return CategoricalParsing(np.argmax(self.probs, axis=2))


@dataclass(frozen=True)
class BinaryMask:
    """H x W mask with values in {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValueError(f"mask must be HxW, got {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("mask must be binary")
        object.__setattr__(self, "data", _freeze(a.astype(np.uint8)))

    @property
    def area(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class PoseMap:
    """H x W x 3 dense pose proxy.

    Channel 0 holds the body-part index normalized to [0, 1] (0 outside the
    figure); channels 1-2 hold within-part UV coordinates in [0, 1].
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float32)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"pose map must be HxWx3, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("pose map contains non-finite values")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("pose map values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(a))


@dataclass(frozen=True)
class AffineTransform:
    """3x3 affine matrix; last row [0, 0, 1], invertible 2x2 linear block."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64)
        if a.shape != (3, 3):
            raise ValueError(f"affine matrix must be 3x3, got {a.shape}")
        if not np.allclose(a[2], (0.0, 0.0, 1.0), atol=1e-9):
            raise ValueError("affine matrix last row must be [0, 0, 1]")
        a[2] = (0.0, 0.0, 1.0)
        if abs(np.linalg.det(a[:2, :2])) < 1e-12:
            raise ValueError("affine 2x2 block is singular")
        object.__setattr__(self, "matrix", _freeze(a))

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(3))


def _as_array(x, ndim: int) -> np.ndarray:
    if isinstance(x, (ImageTensor, BinaryMask, PoseMap)):
        a = x.data
    elif isinstance(x, CategoricalParsing):
        a = x.labels
    elif isinstance(x, ParsingHeatmap):
        a = x.probs
    else:
        a = np.asarray(x)
    if a.ndim != ndim:
        raise ValueError(f"expected {ndim}-d array, got shape {a.shape}")
    return a


def region_classes(group: str) -> frozenset:
    key = _REGION_ALIASES.get(group, group)
    if key not in REGION_CLASSES:
        raise ValueError(f"unknown region group {group!r}; expected one of "
                         f"{sorted(REGION_CLASSES)} or aliases {sorted(_REGION_ALIASES)}")
    return REGION_CLASSES[key]


def split_region(parsing: CategoricalParsing, group: str) -> BinaryMask:
    """Binary mask of the pixels whose label belongs to the given region group.

    Groups: 'garment' (alias 'hc'), 'skin' (alias 'ha'), 'remaining'
    (alias 'hr' = hair + face + lower garment + thigh).
    """
    classes = region_classes(group)
    labels = _as_array(parsing, 2)
    mask = np.isin(labels, sorted(classes))
    return BinaryMask(mask.astype(np.uint8))


def compose_transfer(garment, garment_mask, skin, skin_mask,
                     remaining, remaining_mask, background) -> ImageTensor:
    """Assemble the final transfer image from its region layers.

    Overlaps resolve by precedence garment > skin > remaining: a higher
    priority mask zeroes the lower ones before the masked sum. Pixels covered
    by no region copy the background image.
    """
    g_img = _as_array(garment, 3)
    s_img = _as_array(skin, 3)
    r_img = _as_array(remaining, 3)
    b_img = _as_array(background, 3)
    g = _as_array(garment_mask, 2).astype(np.float32)
    s = _as_array(skin_mask, 2).astype(np.float32)
    r = _as_array(remaining_mask, 2).astype(np.float32)

    shape = g_img.shape
    for arr in (s_img, r_img, b_img):
        if arr.shape != shape:
            raise ValueError("all images must share the same size")
    for m in (g, s, r):
        if m.shape != shape[:2]:
            raise ValueError("masks must match the image size")

    s = s * (1.0 - g)
    r = r * (1.0 - g) * (1.0 - s)
    bg = 1.0 - np.clip(g + s + r, 0.0, 1.0)
    out = (g_img * g[..., None] + s_img * s[..., None]
           + r_img * r[..., None] + b_img * bg[..., None])
    return ImageTensor(np.clip(out, 0.0, 1.0))


# ---------------------------------------------------------------------------
# PNG I/O. Images are 8-bit RGB; parsings are single-channel palette PNGs;
# pose maps are 8-bit 3-channel PNGs with the channel encoding documented on
# PoseMap (quantization to 1/255 is accepted on round-trip).

def save_image(path, image) -> None:
    a = _as_array(image, 3)
    Image.fromarray(np.round(a * 255.0).astype(np.uint8), mode="RGB").save(path)


def load_image(path) -> ImageTensor:
    a = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return ImageTensor(a)


def save_parsing(path, parsing: CategoricalParsing) -> None:
    labels = _as_array(parsing, 2).astype(np.uint8)
    img = Image.fromarray(labels, mode="P")
    palette = [c for rgb in PARSING_PALETTE for c in rgb]
    palette += [0] * (768 - len(palette))
    img.putpalette(palette)
    img.save(path)


def load_parsing(path) -> CategoricalParsing:
    img = Image.open(path)
    if img.mode != "P":
        raise ValueError(f"{path}: parsing PNG must be palette-based")
    return CategoricalParsing(np.asarray(img, dtype=np.uint8))


def save_pose(path, pose) -> None:
    a = _as_array(pose, 3)
    Image.fromarray(np.round(a * 255.0).astype(np.uint8), mode="RGB").save(path)


def load_pose(path) -> PoseMap:
    a = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return PoseMap(a)


def save_mask(path, mask) -> None:
    a = _as_array(mask, 2).astype(np.uint8) * 255
    Image.fromarray(a, mode="L").save(path)


def load_mask(path) -> BinaryMask:
    a = np.asarray(Image.open(path).convert("L"))
    return BinaryMask((a >= 128).astype(np.uint8))
