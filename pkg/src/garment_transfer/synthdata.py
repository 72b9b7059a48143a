"""Procedural paired data: articulated 2D figures, garments-in-shop, parsings.

Figures are flat polygon skeletons (torso quad, capsule arms, head disc, leg
quads) dressed with an upper garment whose texture is attached rigidly to the
local frame of each body part, so that pose changes move the pattern with the
limb. Each sample also renders the same garment template in a canonical shop
pose (arms down, centered, large scale) on a white background.

Everything is a deterministic function of (spec, frame); dataset files depend
only on (seed, index).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import domain
from .domain import (BinaryMask, CategoricalParsing, ImageTensor, PoseMap,
                     load_image, load_mask, load_parsing, load_pose,
                     save_image, save_mask, save_parsing, save_pose)

GARMENT_STYLES = ("short_sleeve", "long_sleeve")
TEXTURES = ("solid", "stripes", "checker")

# Pose-map part indices (channel 0 stores part / NUM_PARTS).
PART_HEAD = 1
PART_TORSO = 2
PART_LEFT_UPPER_ARM = 3
PART_LEFT_FOREARM = 4
PART_RIGHT_UPPER_ARM = 5
PART_RIGHT_FOREARM = 6
PART_LEFT_LEG = 7
PART_RIGHT_LEG = 8
NUM_PARTS = 8
ARM_PARTS = (PART_LEFT_UPPER_ARM, PART_LEFT_FOREARM,
             PART_RIGHT_UPPER_ARM, PART_RIGHT_FOREARM)

# Model-space layout (units are pixels at scale 1 in a 128-row frame).
_TORSO_TOP, _TORSO_BOT = -30.0, 14.0
_TORSO_HALF_TOP, _TORSO_HALF_BOT = 16.0, 14.0
_HIP = np.array([0.0, _TORSO_BOT])
_SHOULDER_X, _SHOULDER_Y = 14.0, -26.0
_UPPER_ARM_LEN, _FOREARM_LEN = 16.0, 14.0
_UPPER_ARM_R, _FOREARM_R = 4.5, 4.0
_SLEEVE_R, _SLEEVE_FORE_R = 6.0, 5.5
_SHORT_SLEEVE_FRAC = 0.45
_ELBOW_BEND_FRAC = 0.35
_HEAD_C, _HEAD_R = np.array([0.0, -44.0]), 8.5
_HAIR_LINE = -45.5
_NECK = (-4.0, 4.0, -37.0, -29.0)          # x0, x1, y0, y1
_PANEL = ((-18.0, -31.0), (18.0, -31.0), (16.0, 15.0), (-16.0, 15.0))
_TORSO_QUAD = ((-_TORSO_HALF_TOP, _TORSO_TOP), (_TORSO_HALF_TOP, _TORSO_TOP),
               (_TORSO_HALF_BOT, _TORSO_BOT), (-_TORSO_HALF_BOT, _TORSO_BOT))
_LEG_Y0, _LEG_Y1 = 14.0, 52.0
_SHORTS_Y1 = 32.0
_LEGS = {"left": (-13.0, -1.5), "right": (1.5, 13.0)}
_SHORTS_QUAD = ((-14.5, _LEG_Y0 - 1.0), (14.5, _LEG_Y0 - 1.0),
                (14.0, _SHORTS_Y1), (-14.0, _SHORTS_Y1))
_BAND = 6.0                                 # texture pattern period, model units

_BG_COLOR = (0.92, 0.92, 0.92)
_SKIN_COLOR = (0.85, 0.65, 0.50)
_FACE_COLOR = (0.90, 0.72, 0.58)
_HAIR_COLOR = (0.20, 0.12, 0.08)
_SHORTS_COLOR = (0.15, 0.15, 0.35)
_SHOP_SCALE = 1.05
_SHOP_ARM_ANGLE = 18.0


@dataclass(frozen=True)
class PersonSpec:
    """Pose, garment style and texture of one synthetic person."""

    seed: int
    torso_tilt: float = 0.0
    arm_angles: tuple = (15.0, 15.0)
    scale: float = 1.0
    translation: tuple = (0.0, 0.0)
    garment_style: str = "short_sleeve"
    texture: str = "solid"
    palette: tuple = ((0.75, 0.15, 0.15), (0.95, 0.85, 0.20), (0.15, 0.35, 0.75))

    def __post_init__(self):
        if self.garment_style not in GARMENT_STYLES:
            raise ValueError(f"unknown garment style {self.garment_style!r}")
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        for a in self.arm_angles:
            if not -80.0 <= a <= 80.0:
                raise ValueError("arm angles must lie in [-80, 80] degrees")
        if not 0.6 <= self.scale <= 1.2:
            raise ValueError("scale must lie in [0.6, 1.2]")
        if len(self.palette) != 3:
            raise ValueError("palette must hold exactly 3 colors")


@dataclass(frozen=True)
class SynthSample:
    image: ImageTensor
    parsing: CategoricalParsing
    pose: PoseMap
    shop_image: ImageTensor
    shop_mask: BinaryMask


def _rot(deg: float) -> np.ndarray:
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s], [s, c]])


def _arm_points(side: str, angle_deg: float):
    """Shoulder, elbow and wrist of one arm in model coordinates."""
    sx = -_SHOULDER_X if side == "left" else _SHOULDER_X
    sign = -1.0 if side == "left" else 1.0
    a1 = math.radians(angle_deg)
    a2 = math.radians(angle_deg * (1.0 + _ELBOW_BEND_FRAC))
    shoulder = np.array([sx, _SHOULDER_Y])
    d1 = np.array([sign * math.sin(a1), math.cos(a1)])
    d2 = np.array([sign * math.sin(a2), math.cos(a2)])
    elbow = shoulder + _UPPER_ARM_LEN * d1
    wrist = elbow + _FOREARM_LEN * d2
    return shoulder, elbow, wrist


def _capsule(pts, a, b, radius):
    """Membership, along-axis distance and signed perp offset for a capsule."""
    ab = b - a
    length = float(np.hypot(*ab))
    rel = pts - a
    t = np.clip((rel @ ab) / (length * length), 0.0, 1.0)
    proj = a + t[..., None] * ab
    diff = pts - proj
    dist = np.hypot(diff[..., 0], diff[..., 1])
    normal = np.array([-ab[1], ab[0]]) / length
    return dist <= radius, t * length, diff @ normal


def _in_quad(pts, quad):
    quad = np.asarray(quad)
    inside = np.ones(pts.shape[:-1], dtype=bool)
    for i in range(4):
        a, b = quad[i], quad[(i + 1) % 4]
        cross = (b[0] - a[0]) * (pts[..., 1] - a[1]) - (b[1] - a[1]) * (pts[..., 0] - a[0])
        inside &= cross >= 0.0
    return inside


def _texture_color(spec: PersonSpec, u, v):
    """Palette color per pixel from rigid per-part pattern coordinates."""
    pal = np.asarray(spec.palette, dtype=np.float32)
    if spec.texture == "solid":
        idx = np.zeros(u.shape, dtype=np.int64)
    elif spec.texture == "stripes":
        idx = (np.floor(v / _BAND).astype(np.int64)) % 3
    else:  # checker
        idx = (np.floor(u / _BAND).astype(np.int64)
               + np.floor(v / _BAND).astype(np.int64)) % 2
    return pal[idx]


def _sleeve_segments(spec: PersonSpec, side: str):
    shoulder, elbow, wrist = _arm_points(side, spec.arm_angles[0 if side == "left" else 1])
    if spec.garment_style == "short_sleeve":
        tip = shoulder + _SHORT_SLEEVE_FRAC * (elbow - shoulder)
        return [(shoulder, tip, _SLEEVE_R, 0.0)]
    return [(shoulder, elbow, _SLEEVE_R, 0.0),
            (elbow, wrist, _SLEEVE_FORE_R, _UPPER_ARM_LEN)]


def _figure_bounds(spec: PersonSpec):
    """Conservative model-space extremes of the rendered figure."""
    pts = [_HEAD_C, np.array([0.0, _HEAD_C[1]])]
    pts += [np.asarray(p) for p in _PANEL]
    for side in ("left", "right"):
        pts += list(_arm_points(side, spec.arm_angles[0 if side == "left" else 1]))
    rot = _rot(spec.torso_tilt)
    pts = [(rot @ (p - _HIP)) + _HIP for p in pts]
    for x0, x1 in _LEGS.values():
        pts += [np.array([x0, _LEG_Y1]), np.array([x1, _LEG_Y1])]
    pts = np.stack(pts)
    margin = _HEAD_R + 1.0
    return pts.min(axis=0) - margin, pts.max(axis=0) + margin


def _fits_frame(spec: PersonSpec, frame) -> bool:
    h, w = frame
    unit = spec.scale * (h / 128.0)
    lo, hi = _figure_bounds(spec)
    cx = w / 2.0 + spec.translation[0]
    cy = h / 2.0 + spec.translation[1]
    x0, y0 = cx + unit * lo[0], cy + unit * lo[1]
    x1, y1 = cx + unit * hi[0], cy + unit * hi[1]
    return x0 >= 0.5 and y0 >= 0.5 and x1 <= w - 1.5 and y1 <= h - 1.5


def _render(spec: PersonSpec, frame, garment_only: bool):
    h, w = frame
    domain._check_frame(h, w)
    unit = spec.scale * (h / 128.0)
    cx = w / 2.0 + spec.translation[0]
    cy = h / 2.0 + spec.translation[1]
    if garment_only:
        # center the garment panel midline instead of the figure
        cy = h / 2.0 - unit * (_PANEL[0][1] + _PANEL[2][1]) / 2.0

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    world = np.stack([(xs - cx) / unit, (ys - cy) / unit], axis=-1)
    # legs keep the static frame; everything above the hips tilts about them
    pts_low = world
    pts_up = ((world - _HIP) @ _rot(-spec.torso_tilt).T) + _HIP

    labels = np.zeros((h, w), dtype=np.uint8)
    parts = np.zeros((h, w), dtype=np.uint8)
    uu = np.zeros((h, w), dtype=np.float32)
    vv = np.zeros((h, w), dtype=np.float32)
    image = np.empty((h, w, 3), dtype=np.float32)
    image[:] = (1.0, 1.0, 1.0) if garment_only else _BG_COLOR

    def paint(mask, label, color, part=None, u=None, v=None):
        labels[mask] = label
        image[mask] = color if np.ndim(color) <= 1 else color[mask]
        if part is not None:
            parts[mask] = part
        if u is not None:
            uu[mask] = np.clip(u, 0.0, 1.0)[mask]
        if v is not None:
            vv[mask] = np.clip(v, 0.0, 1.0)[mask]

    if not garment_only:
        for side, (x0, x1) in _LEGS.items():
            m = ((pts_low[..., 0] >= x0) & (pts_low[..., 0] <= x1)
                 & (pts_low[..., 1] >= _LEG_Y0) & (pts_low[..., 1] <= _LEG_Y1))
            part = PART_LEFT_LEG if side == "left" else PART_RIGHT_LEG
            paint(m, domain.THIGH, _SKIN_COLOR, part,
                  (pts_low[..., 1] - _LEG_Y0) / (_LEG_Y1 - _LEG_Y0),
                  (pts_low[..., 0] - x0) / (x1 - x0))
        m = _in_quad(pts_low, _SHORTS_QUAD)
        paint(m, domain.LOWER_GARMENT, _SHORTS_COLOR)
        parts[m & (parts == 0)] = PART_TORSO

        m = _in_quad(pts_up, _TORSO_QUAD)
        paint(m, domain.UPPER_GARMENT, _SKIN_COLOR, PART_TORSO,
              (pts_up[..., 1] - _TORSO_TOP) / (_TORSO_BOT - _TORSO_TOP),
              (pts_up[..., 0] + _TORSO_HALF_TOP) / (2 * _TORSO_HALF_TOP))

        x0, x1, y0, y1 = _NECK
        m = ((pts_up[..., 0] >= x0) & (pts_up[..., 0] <= x1)
             & (pts_up[..., 1] >= y0) & (pts_up[..., 1] <= y1))
        paint(m, domain.UPPER_BODY_SKIN, _SKIN_COLOR, PART_TORSO,
              (pts_up[..., 1] - y0) / (y1 - y0), (pts_up[..., 0] - x0) / (x1 - x0))

        d = np.hypot(pts_up[..., 0] - _HEAD_C[0], pts_up[..., 1] - _HEAD_C[1])
        head = d <= _HEAD_R
        u = (pts_up[..., 1] - (_HEAD_C[1] - _HEAD_R)) / (2 * _HEAD_R)
        v = (pts_up[..., 0] - (_HEAD_C[0] - _HEAD_R)) / (2 * _HEAD_R)
        paint(head & (pts_up[..., 1] >= _HAIR_LINE), domain.FACE, _FACE_COLOR,
              PART_HEAD, u, v)
        paint(head & (pts_up[..., 1] < _HAIR_LINE), domain.HAIR, _HAIR_COLOR,
              PART_HEAD, u, v)

    panel = _in_quad(pts_up, _PANEL)
    tex_u = pts_up[..., 0] - _PANEL[0][0]
    tex_v = pts_up[..., 1] - _PANEL[0][1]
    labels[panel] = domain.UPPER_GARMENT
    image[panel] = _texture_color(spec, tex_u, tex_v)[panel]

    arm_specs = (("left", PART_LEFT_UPPER_ARM, PART_LEFT_FOREARM),
                 ("right", PART_RIGHT_UPPER_ARM, PART_RIGHT_FOREARM))
    if not garment_only:
        for side, part_up, part_fore in arm_specs:
            shoulder, elbow, wrist = _arm_points(
                side, spec.arm_angles[0 if side == "left" else 1])
            for (a, b, r, part) in ((shoulder, elbow, _UPPER_ARM_R, part_up),
                                    (elbow, wrist, _FOREARM_R, part_fore)):
                m, along, perp = _capsule(pts_up, a, b, r)
                seg = float(np.hypot(*(b - a)))
                paint(m, domain.UPPER_BODY_SKIN, _SKIN_COLOR, part,
                      along / seg, (perp / r + 1.0) / 2.0)

    for side, _, _ in arm_specs:
        for (a, b, r, u_off) in _sleeve_segments(spec, side):
            m, along, perp = _capsule(pts_up, a, b, r)
            labels[m] = domain.UPPER_GARMENT
            image[m] = _texture_color(spec, perp + r, along + u_off)[m]

    pose = np.zeros((h, w, 3), dtype=np.float32)
    pose[..., 0] = parts.astype(np.float32) / NUM_PARTS
    pose[..., 1] = np.where(parts > 0, uu, 0.0)
    pose[..., 2] = np.where(parts > 0, vv, 0.0)
    return image, labels, pose


def canonical_shop_spec(spec: PersonSpec) -> PersonSpec:
    return replace(spec, torso_tilt=0.0, scale=_SHOP_SCALE, translation=(0.0, 0.0),
                   arm_angles=(_SHOP_ARM_ANGLE, _SHOP_ARM_ANGLE))


def generate_sample(spec: PersonSpec, frame=(128, 96)) -> SynthSample:
    """Render one person plus the shop view of the same garment template."""
    if not _fits_frame(spec, frame):
        raise ValueError("figure does not fit inside the frame; "
                         "reduce scale/translation/arm angles")
    image, labels, pose = _render(spec, frame, garment_only=False)
    garment_area = int((labels == domain.UPPER_GARMENT).sum())
    if garment_area <= 0.01 * frame[0] * frame[1]:
        raise ValueError("degenerate garment polygon (area below 1% of frame)")
    shop_image, shop_labels, _ = _render(canonical_shop_spec(spec), frame,
                                         garment_only=True)
    return SynthSample(
        image=ImageTensor(image),
        parsing=CategoricalParsing(labels),
        pose=PoseMap(pose),
        shop_image=ImageTensor(shop_image),
        shop_mask=BinaryMask((shop_labels == domain.UPPER_GARMENT).astype(np.uint8)),
    )


def render_transfer_truth(pose_spec: PersonSpec, garment_spec: PersonSpec,
                          frame=(128, 96)):
    """Ground-truth render of `pose_spec`'s person wearing `garment_spec`'s garment."""
    spec = replace(pose_spec, garment_style=garment_spec.garment_style,
                   texture=garment_spec.texture, palette=garment_spec.palette)
    image, labels, _ = _render(spec, frame, garment_only=False)
    return ImageTensor(image), CategoricalParsing(labels)


def _distinct_palette(rng: np.random.Generator):
    while True:
        pal = rng.uniform(0.08, 0.95, size=(3, 3))
        d01 = np.abs(pal[0] - pal[1]).sum()
        d02 = np.abs(pal[0] - pal[2]).sum()
        d12 = np.abs(pal[1] - pal[2]).sum()
        if min(d01, d02, d12) > 0.4:
            return tuple(tuple(float(c) for c in row) for row in pal)


def random_spec(seed: int, frame=(128, 96)) -> PersonSpec:
    """Seeded random spec, resampled until the figure fits the frame."""
    rng = np.random.default_rng(seed)
    for _ in range(200):
        spec = PersonSpec(
            seed=seed,
            torso_tilt=float(rng.uniform(-10.0, 10.0)),
            arm_angles=(float(rng.uniform(-20.0, 65.0)),
                        float(rng.uniform(-20.0, 65.0))),
            scale=float(rng.uniform(0.78, 1.08)),
            translation=(float(rng.uniform(-6.0, 6.0)), float(rng.uniform(-6.0, 6.0))),
            garment_style=GARMENT_STYLES[int(rng.integers(0, 2))],
            texture=TEXTURES[int(rng.integers(0, 3))],
            palette=_distinct_palette(rng),
        )
        if _fits_frame(spec, frame):
            return spec
    raise RuntimeError(f"could not sample an in-frame figure for seed {seed}")


def _sample_seed(dataset_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([dataset_seed, index]).generate_state(1)[0])


def _derangement(n: int, seed: int) -> list:
    """Seeded cyclic permutation (Sattolo), hence no fixed points for n >= 2."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFA1B]))
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def generate_dataset(count: int, seed: int, out_dir,
                     frame=(128, 96), with_transfer_truth: bool = False) -> dict:
    """Write `count` samples plus a manifest pairing persons for transfer.

    Layout: `<index>_{image,parsing,pose,shop,shopmask}.png` + `manifest.json`.
    Pairs are a seeded derangement, so no person is paired with itself; a
    single-sample dataset has no pairs.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    entries = []
    specs = []
    for i in range(count):
        si = _sample_seed(seed, i)
        spec = random_spec(si, frame)
        specs.append(spec)
        sample = generate_sample(spec, frame)
        stem = f"{i:04d}"
        save_image(out / f"{stem}_image.png", sample.image)
        save_parsing(out / f"{stem}_parsing.png", sample.parsing)
        save_pose(out / f"{stem}_pose.png", sample.pose)
        save_image(out / f"{stem}_shop.png", sample.shop_image)
        save_mask(out / f"{stem}_shopmask.png", sample.shop_mask)
        entries.append({"index": i, "seed": si})

    pairs = []
    if count >= 2:
        perm = _derangement(count, seed)
        pairs = [[i, perm[i]] for i in range(count)]

    if with_transfer_truth:
        for a, b in pairs:
            image, parsing = render_transfer_truth(specs[a], specs[b], frame)
            save_image(out / f"{a:04d}_wearing_{b:04d}_image.png", image)
            save_parsing(out / f"{a:04d}_wearing_{b:04d}_parsing.png", parsing)

    manifest = {
        "frame": list(frame),
        "count": count,
        "seed": seed,
        "samples": entries,
        "pairs": pairs,
        "transfer_truth": bool(with_transfer_truth),
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return manifest


class TransferDataset:
    """In-memory view of a generated dataset, as stacked float arrays."""

    def __init__(self, images, parsings, poses, shop_images, shop_masks,
                 pairs, frame, truth=None, manifest=None):
        self.images = images            # (N, H, W, 3) float32
        self.parsings = parsings        # (N, H, W) uint8
        self.poses = poses              # (N, H, W, 3) float32
        self.shop_images = shop_images  # (N, H, W, 3) float32
        self.shop_masks = shop_masks    # (N, H, W) uint8
        self.pairs = [tuple(p) for p in pairs]
        self.frame = tuple(frame)
        self.truth = truth or {}        # (a, b) -> {"image", "parsing"}
        self.manifest = manifest or {}

    def __len__(self):
        return self.images.shape[0]

    @classmethod
    def load(cls, path) -> "TransferDataset":
        path = Path(path)
        with open(path / "manifest.json") as f:
            manifest = json.load(f)
        n = manifest["count"]
        images, parsings, poses, shops, shopmasks = [], [], [], [], []
        for i in range(n):
            stem = f"{i:04d}"
            images.append(load_image(path / f"{stem}_image.png").data)
            parsings.append(load_parsing(path / f"{stem}_parsing.png").labels)
            poses.append(load_pose(path / f"{stem}_pose.png").data)
            shops.append(load_image(path / f"{stem}_shop.png").data)
            shopmasks.append(load_mask(path / f"{stem}_shopmask.png").data)
        truth = {}
        if manifest.get("transfer_truth"):
            for a, b in manifest["pairs"]:
                stem = f"{a:04d}_wearing_{b:04d}"
                truth[(a, b)] = {
                    "image": load_image(path / f"{stem}_image.png").data,
                    "parsing": load_parsing(path / f"{stem}_parsing.png").labels,
                }
        return cls(np.stack(images), np.stack(parsings), np.stack(poses),
                   np.stack(shops), np.stack(shopmasks),
                   manifest["pairs"], manifest["frame"], truth, manifest)

    @classmethod
    def from_samples(cls, samples, pairs=None, frame=(128, 96)) -> "TransferDataset":
        pairs = pairs if pairs is not None else []
        return cls(
            np.stack([s.image.data for s in samples]).astype(np.float32),
            np.stack([s.parsing.labels for s in samples]),
            np.stack([s.pose.data for s in samples]),
            np.stack([s.shop_image.data for s in samples]).astype(np.float32),
            np.stack([s.shop_mask.data for s in samples]),
            pairs, frame)

    # region masks as float32 (H, W)
    def garment_mask(self, i):
        return (self.parsings[i] == domain.UPPER_GARMENT).astype(np.float32)

    def skin_mask(self, i):
        return (self.parsings[i] == domain.UPPER_BODY_SKIN).astype(np.float32)

    def hr_mask(self, i):
        hr = np.isin(self.parsings[i], sorted(domain.REGION_CLASSES["remaining"]))
        return hr.astype(np.float32)

    def foreground_mask(self, i):
        return (self.parsings[i] != domain.BACKGROUND).astype(np.float32)

    def part_map(self, i):
        return np.rint(self.poses[i][..., 0] * NUM_PARTS).astype(np.int64)

    def garment_image(self, i):
        return self.images[i] * self.garment_mask(i)[..., None]

    def shop_garment_image(self, i):
        return self.shop_images[i] * self.shop_masks[i].astype(np.float32)[..., None]
