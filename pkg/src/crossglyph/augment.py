"""Weak and strong image augmentation for grayscale rasters.

Weak augmentation is a 50% horizontal flip. Strong augmentation draws a
few transforms from a fixed pool, each with a magnitude sampled from its
pinned range, then randomly erases a rectangle half the time.

Point transforms run on the 8-bit intensity grid (values k/255), which
makes the involution and identity cases exact: invert twice returns the
input, posterize at 8 bits is a no-op on quantized images. Geometric
warps use bilinear sampling with zero fill and re-quantize their output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SeededRng

# draw pool for the sampled ops; random erase follows its own rule below
TRANSFORM_RANGES: dict[str, tuple[float, float, str]] = {
    "equalize": (0, 1, "binary"),
    "invert": (0, 1, "binary"),
    "posterize": (4, 8, "bits"),
    "brightness": (0.05, 0.95, "float"),
    "contrast": (0.05, 0.95, "float"),
    "solarize": (0.0, 1.0, "float"),
    "sharpness": (0.05, 0.95, "float"),
    "rotate": (-30.0, 30.0, "float"),
    "shear_x": (-0.3, 0.3, "float"),
    "shear_y": (-0.3, 0.3, "float"),
    "translate_x": (-0.3, 0.3, "float"),
    "translate_y": (-0.3, 0.3, "float"),
}

TRANSFORM_POOL = list(TRANSFORM_RANGES)


@dataclass(frozen=True)
class StrongPolicy:
    """Sampling rules for one strong augmentation."""

    ops_per_image: int = 2
    erase_prob: float = 0.5
    erase_area_min: float = 0.02
    erase_area_max: float = 0.4
    erase_aspect_min: float = 0.3


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-d grayscale image, got shape {img.shape}")
    return img


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.int64)


def _dequantize(q: np.ndarray) -> np.ndarray:
    return q.astype(np.float64) / 255.0


# -- point transforms (integer grid) -------------------------------------------


def _equalize(q: np.ndarray) -> np.ndarray:
    hist = np.bincount(q.reshape(-1), minlength=256)
    cdf = np.cumsum(hist)
    total = int(cdf[-1])
    cdf_min = int(cdf[np.flatnonzero(hist)[0]])
    if cdf_min == total:
        return q  # single occupied bin: nothing to spread
    lut = np.rint((cdf - cdf_min) / (total - cdf_min) * 255.0).astype(np.int64)
    return np.clip(lut, 0, 255)[q]


def _invert(q: np.ndarray) -> np.ndarray:
    return 255 - q


def _posterize(q: np.ndarray, bits: int) -> np.ndarray:
    shift = 8 - bits
    return (q >> shift) << shift


def _brightness(q: np.ndarray, m: float) -> np.ndarray:
    return np.clip(np.rint(q * m), 0, 255).astype(np.int64)


def _contrast(q: np.ndarray, m: float) -> np.ndarray:
    gray = int(np.rint(q.mean()))
    return np.clip(np.rint(gray + m * (q - gray)), 0, 255).astype(np.int64)


def _box_blur3(values: np.ndarray) -> np.ndarray:
    padded = np.pad(values, 1, mode="edge")
    out = np.zeros_like(values, dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            out += padded[di:di + values.shape[0], dj:dj + values.shape[1]]
    return out / 9.0


def _sharpness(q: np.ndarray, m: float) -> np.ndarray:
    blur = _box_blur3(q.astype(np.float64))
    return np.clip(np.rint(blur + m * (q - blur)), 0, 255).astype(np.int64)


def _solarize(q: np.ndarray, threshold: float) -> np.ndarray:
    mask = _dequantize(q) >= threshold
    return np.where(mask, 255 - q, q)


# -- geometric transforms -------------------------------------------------------


_CENTERED_GRIDS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _centered_grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    if (h, w) not in _CENTERED_GRIDS:
        rr, cc = np.meshgrid(np.arange(h, dtype=np.float64),
                             np.arange(w, dtype=np.float64), indexing="ij")
        _CENTERED_GRIDS[(h, w)] = (rr - (h - 1) / 2.0, cc - (w - 1) / 2.0)
    return _CENTERED_GRIDS[(h, w)]


def _warp(img: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Sample img at inv-mapped output coordinates (about the image center),
    bilinear interpolation, out-of-bounds filled with 0."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    dy, dx = _centered_grid(h, w)
    ys = inv[0, 0] * dy + inv[0, 1] * dx + inv[0, 2] + cy
    xs = inv[1, 0] * dy + inv[1, 1] * dx + inv[1, 2] + cx

    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy, fx = ys - y0, xs - x0

    def tap(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(valid, vals, 0.0)

    return (tap(y0, x0) * (1 - fy) * (1 - fx)
            + tap(y0, x0 + 1) * (1 - fy) * fx
            + tap(y0 + 1, x0) * fy * (1 - fx)
            + tap(y0 + 1, x0 + 1) * fy * fx)


def rotate_float(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotation about the center on the float image, no re-quantization."""
    img = _check_image(img)
    rad = np.deg2rad(degrees)
    c, s = np.cos(rad), np.sin(rad)
    inv = np.array([[c, -s, 0.0], [s, c, 0.0]])
    return _warp(img, inv)


def _geometric(q: np.ndarray, kind: str, m: float) -> np.ndarray:
    if kind == "rotate":
        rad = np.deg2rad(m)
        c, s = np.cos(rad), np.sin(rad)
        inv = np.array([[c, -s, 0.0], [s, c, 0.0]])
    elif kind == "shear_x":
        inv = np.array([[1.0, 0.0, 0.0], [m, 1.0, 0.0]])
    elif kind == "shear_y":
        inv = np.array([[1.0, m, 0.0], [0.0, 1.0, 0.0]])
    elif kind == "translate_x":
        inv = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -m * q.shape[1]]])
    else:  # translate_y
        inv = np.array([[1.0, 0.0, -m * q.shape[0]], [0.0, 1.0, 0.0]])
    return _quantize(_warp(_dequantize(q), inv))


# -- public per-transform entry point --------------------------------------------


def apply_transform(kind: str, magnitude, img: np.ndarray, rng: SeededRng | None = None) -> np.ndarray:
    """Apply one pool transform (or random erase) at the given magnitude.

    Intensities are quantized to the 8-bit grid, so zero-magnitude
    geometric ops and posterize(8) are exact identities on grid-aligned
    images.
    """
    img = _check_image(img)
    if kind == "random_erase":
        if rng is None:
            raise ValueError("random_erase needs an rng")
        return random_erase(img, StrongPolicy(), rng)
    if kind not in TRANSFORM_RANGES:
        raise ValueError(f"unknown transform kind: {kind!r}")
    lo, hi, mode = TRANSFORM_RANGES[kind]
    if mode == "binary":
        if magnitude not in (0, 1):
            raise ValueError(f"{kind}: magnitude must be 0 or 1, got {magnitude!r}")
    elif mode == "bits":
        if int(magnitude) != magnitude or not lo <= magnitude <= hi:
            raise ValueError(f"{kind}: bits must be an integer in [{lo}, {hi}], got {magnitude!r}")
    elif not lo <= magnitude <= hi:
        raise ValueError(f"{kind}: magnitude {magnitude!r} outside [{lo}, {hi}]")

    q = _quantize(img)
    if kind == "equalize":
        out = _equalize(q) if magnitude == 1 else q
    elif kind == "invert":
        out = _invert(q) if magnitude == 1 else q
    elif kind == "posterize":
        out = _posterize(q, int(magnitude))
    elif kind == "brightness":
        out = _brightness(q, float(magnitude))
    elif kind == "contrast":
        out = _contrast(q, float(magnitude))
    elif kind == "solarize":
        out = _solarize(q, float(magnitude))
    elif kind == "sharpness":
        out = _sharpness(q, float(magnitude))
    else:
        out = _geometric(q, kind, float(magnitude))
    return _dequantize(out)


def random_erase(img: np.ndarray, policy: StrongPolicy, rng: SeededRng,
                 attempts: int = 10) -> np.ndarray:
    """Overwrite a random rectangle with uniform noise.

    Rectangle area is a uniform fraction of the image in
    [erase_area_min, erase_area_max], aspect ratio uniform in
    [erase_aspect_min, 1/erase_aspect_min]; skipped if no draw fits.
    """
    img = _check_image(img)
    h, w = img.shape
    out = img.copy()
    for _ in range(attempts):
        area = rng.uniform(policy.erase_area_min, policy.erase_area_max) * h * w
        aspect = rng.uniform(policy.erase_aspect_min, 1.0 / policy.erase_aspect_min)
        eh = int(round(np.sqrt(area * aspect)))
        ew = int(round(np.sqrt(area / aspect)))
        if 0 < eh < h and 0 < ew < w:
            top = rng.integers(0, h - eh + 1)
            left = rng.integers(0, w - ew + 1)
            noise = _dequantize(np.clip(np.rint(rng.random_array((eh, ew)) * 255.0), 0, 255).astype(np.int64))
            out[top:top + eh, left:left + ew] = noise
            return out
    return out


# -- pipelines --------------------------------------------------------------------


def weak_augment(img: np.ndarray, rng: SeededRng) -> np.ndarray:
    """Mirror horizontally iff the next uniform draw is below 0.5."""
    img = _check_image(img)
    if rng.random() < 0.5:
        return np.ascontiguousarray(img[:, ::-1])
    return img.copy()


def strong_augment(img: np.ndarray, policy: StrongPolicy, rng: SeededRng) -> np.ndarray:
    """Draw ops_per_image transforms without replacement, apply them in draw
    order with uniformly sampled magnitudes, then erase with probability
    erase_prob. Output stays on the 8-bit grid inside [0, 1]."""
    img = _check_image(img)
    picked = rng.sample_without_replacement(len(TRANSFORM_POOL), policy.ops_per_image)
    plan = []
    for idx in picked:
        kind = TRANSFORM_POOL[idx]
        lo, hi, mode = TRANSFORM_RANGES[kind]
        if mode == "binary":
            magnitude = rng.integers(0, 2)
        elif mode == "bits":
            magnitude = rng.integers(int(lo), int(hi) + 1)
        else:
            magnitude = rng.uniform(lo, hi)
        plan.append((kind, magnitude))
    out = img
    for kind, magnitude in plan:
        out = apply_transform(kind, magnitude, out)
    if rng.random() < policy.erase_prob:
        out = random_erase(out, policy, rng)
    return np.clip(out, 0.0, 1.0)
