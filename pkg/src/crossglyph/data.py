"""Datasets: a synthetic two-domain glyph benchmark plus file ingestion.

The benchmark renders anti-aliased multi-stroke glyphs. Both domains
share the per-class stroke skeletons, so class identity transfers; each
sample re-renders the skeleton with its own control-point jitter
(writing-style variance), and target samples are additionally corrupted
with erosion, speckle, rotation, and contrast/brightness jitter to mimic
worn scans. Everything is deterministic given the benchmark seed.

Ingestion reads `relative/path,label` manifests over PGM or PNG images,
normalizes to [0, 1], and resizes bilinearly to the configured raster.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .augment import rotate_float
from .rng import SeededRng

# stream ids under the benchmark seed
_STREAM_CLASS = 0
_STREAM_STYLE = 1
_STREAM_CORRUPT = 2

_DOMAIN_IDS = {"source": 0, "target": 1}
_SPLIT_IDS = {"train": 0, "test": 1}


@dataclass
class GlyphSpec:
    """Shape and corruption knobs for the synthetic benchmark."""

    classes: int = 10
    strokes: int = 3
    image_size: int = 32
    stroke_radius: float = 1.1
    source_style_jitter: float = 0.02
    target_style_jitter: float = 0.045
    erosion_radius: int = 1
    speckle_density: float = 0.06
    contrast_jitter: float = 0.25
    brightness_jitter: float = 0.10
    rotation_jitter: float = 10.0

    def validate(self) -> None:
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.strokes < 1:
            raise ValueError("glyphs need at least one stroke")
        if self.image_size < 8 or self.image_size % 4:
            raise ValueError(f"image_size must be >= 8 and divisible by 4, got {self.image_size}")


@dataclass
class GlyphCounts:
    """Per-class sample counts for each split."""

    source_train: int = 200
    target_train: int = 200
    source_test: int = 50
    target_test: int = 50

    def validate(self) -> None:
        for name in ("source_train", "target_train", "source_test", "target_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"count {name} must be positive")


@dataclass
class Dataset:
    """Images plus labels and provenance tags.

    For target-train data the labels live in `eval_labels`: training code
    only ever reads `labels`, which is None there, so ground truth cannot
    leak into updates.
    """

    images: np.ndarray
    labels: np.ndarray | None
    domain: str
    split: str
    eval_labels: np.ndarray | None = None

    def __len__(self) -> int:
        return self.images.shape[0]


class Benchmark(NamedTuple):
    source_train: Dataset
    target_train: Dataset
    source_test: Dataset
    target_test: Dataset


# -- glyph rendering ------------------------------------------------------------


def _class_skeleton(spec: GlyphSpec, seed: int, class_idx: int) -> np.ndarray:
    """(strokes, 3, 2) quadratic-curve control points in the unit square."""
    rng = SeededRng(seed, (_STREAM_CLASS, class_idx))
    pts = rng.random_array((spec.strokes, 3, 2))
    return 0.15 + 0.70 * pts


_BEZIER_T = np.linspace(0.0, 1.0, 48)[:, None]
_PIXEL_GRIDS: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    if size not in _PIXEL_GRIDS:
        yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        pixels = np.stack([yy.reshape(-1), xx.reshape(-1)], axis=1).astype(np.float64)
        _PIXEL_GRIDS[size] = (pixels, (pixels ** 2).sum(axis=1))
    return _PIXEL_GRIDS[size]


def _render(points: np.ndarray, size: int, radius: float) -> np.ndarray:
    """Anti-aliased rendering of quadratic strokes onto a size x size raster."""
    t = _BEZIER_T
    pixels, px2 = _pixel_grid(size)
    img = np.zeros(size * size)
    for stroke in points:
        p0, p1, p2 = stroke
        curve = ((1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2) * (size - 1)
        # |p - c|^2 = |p|^2 - 2 p.c + |c|^2, batched as one small gemm
        d2 = px2[:, None] - 2.0 * (pixels @ curve.T) + (curve ** 2).sum(axis=1)[None, :]
        dist = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
        ink = np.clip((radius + 0.7 - dist) / 0.7, 0.0, 1.0)
        img = np.maximum(img, ink)
    return img.reshape(size, size)


def _corrupt(img: np.ndarray, spec: GlyphSpec, rng: SeededRng) -> np.ndarray:
    out = img
    if spec.rotation_jitter > 0:
        out = rotate_float(out, rng.uniform(-spec.rotation_jitter, spec.rotation_jitter))
    if spec.erosion_radius > 0:
        r = spec.erosion_radius
        padded = np.pad(out, r, mode="edge")
        eroded = out.copy()
        for di in range(-r, r + 1):
            for dj in range(-r, r + 1):
                eroded = np.minimum(eroded, padded[r + di:r + di + out.shape[0],
                                                   r + dj:r + dj + out.shape[1]])
        out = eroded
    if spec.speckle_density > 0:
        mask = rng.random_array(out.shape) < spec.speckle_density
        values = rng.random_array(out.shape)
        out = np.where(mask, values, out)
    if spec.contrast_jitter > 0 or spec.brightness_jitter > 0:
        factor = rng.uniform(1.0 - spec.contrast_jitter, 1.0 + spec.contrast_jitter)
        offset = rng.uniform(-spec.brightness_jitter, spec.brightness_jitter)
        out = np.clip(out.mean() + factor * (out - out.mean()) + offset, 0.0, 1.0)
    return np.clip(out, 0.0, 1.0)


def _make_split(spec: GlyphSpec, seed: int, domain: str, split: str,
                per_class: int, skeletons: list[np.ndarray]) -> Dataset:
    size = spec.image_size
    jitter = spec.source_style_jitter if domain == "source" else spec.target_style_jitter
    images = np.zeros((spec.classes * per_class, size, size))
    labels = np.zeros(spec.classes * per_class, dtype=np.int64)
    d_id, s_id = _DOMAIN_IDS[domain], _SPLIT_IDS[split]
    at = 0
    for cls in range(spec.classes):
        for i in range(per_class):
            style = SeededRng(seed, (_STREAM_STYLE, d_id, s_id, cls, i))
            pts = skeletons[cls]
            if jitter > 0:
                pts = pts + style.normal(0.0, jitter, size=pts.shape)
            img = _render(pts, size, spec.stroke_radius)
            if domain == "target":
                img = _corrupt(img, spec, SeededRng(seed, (_STREAM_CORRUPT, s_id, cls, i)))
            images[at] = img
            labels[at] = cls
            at += 1
    if domain == "target" and split == "train":
        return Dataset(images, None, domain, split, eval_labels=labels)
    return Dataset(images, labels, domain, split)


def generate_glyph_benchmark(spec: GlyphSpec, counts: GlyphCounts, seed: int) -> Benchmark:
    """Render all four splits deterministically from the seed."""
    spec.validate()
    counts.validate()
    skeletons = [_class_skeleton(spec, seed, c) for c in range(spec.classes)]
    return Benchmark(
        source_train=_make_split(spec, seed, "source", "train", counts.source_train, skeletons),
        target_train=_make_split(spec, seed, "target", "train", counts.target_train, skeletons),
        source_test=_make_split(spec, seed, "source", "test", counts.source_test, skeletons),
        target_test=_make_split(spec, seed, "target", "test", counts.target_test, skeletons),
    )


def no_shift_spec(spec: GlyphSpec) -> GlyphSpec:
    """The control variant: no style jitter, no corruption, domains identical."""
    return replace(spec, source_style_jitter=0.0, target_style_jitter=0.0,
                   erosion_radius=0, speckle_density=0.0, contrast_jitter=0.0,
                   brightness_jitter=0.0, rotation_jitter=0.0)


# -- image files ------------------------------------------------------------------


def write_pgm(path, img: np.ndarray) -> None:
    """8-bit binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    """Parse binary (P5) or ascii (P2) PGM into floats in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        count = width * height
        if maxval > 255:
            raw = np.frombuffer(blob, dtype=">u2", count=count, offset=pos)
        else:
            raw = np.frombuffer(blob, dtype=np.uint8, count=count, offset=pos)
    elif magic == b"P2":
        raw = np.array(blob[pos:].split(), dtype=np.int64)
        if raw.size != width * height:
            raise ValueError(f"{path}: P2 pixel count mismatch")
    else:
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
    return raw.astype(np.float64).reshape(height, width) / float(maxval)


def load_image(path) -> np.ndarray:
    """Grayscale image in [0, 1]; PGM parsed natively, PNG via Pillow."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        gray = im.convert("L")
        return np.asarray(gray, dtype=np.float64) / 255.0


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resampling; identity when sizes match."""
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


# -- manifests ---------------------------------------------------------------------


def load_dataset(root, manifest, *, domain: str, split: str,
                 classes: int, image_size: int) -> Dataset:
    """Read a `relative/path,label` manifest; labels validated against classes.

    Target-train labels are retained for diagnostics only (eval_labels).
    """
    root = Path(root)
    manifest = Path(manifest)
    if not manifest.exists():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    images, labels = [], []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rel, label_text = line.rsplit(",", 1)
            label = int(label_text)
        except ValueError:
            raise ValueError(f"{manifest}:{lineno}: malformed manifest line {line!r}") from None
        if not 0 <= label < classes:
            raise ValueError(f"{manifest}:{lineno}: label {label} out of range for {classes} classes")
        path = root / rel
        img = load_image(path)
        if np.any(img < 0.0) or np.any(img > 1.0):
            raise ValueError(f"{path}: pixel values outside [0, 1]")
        images.append(bilinear_resize(img, image_size, image_size))
        labels.append(label)
    if not images:
        raise ValueError(f"{manifest}: no samples")
    stack = np.stack(images)
    label_arr = np.asarray(labels, dtype=np.int64)
    if domain == "target" and split == "train":
        return Dataset(stack, None, domain, split, eval_labels=label_arr)
    return Dataset(stack, label_arr, domain, split)


def save_dataset(ds: Dataset, root, name: str) -> Path:
    """Write images as PGM plus a manifest named <name>.csv under root."""
    root = Path(root)
    img_dir = root / name
    img_dir.mkdir(parents=True, exist_ok=True)
    labels = ds.labels if ds.labels is not None else ds.eval_labels
    lines = []
    for i in range(len(ds)):
        rel = f"{name}/{i:05d}.pgm"
        write_pgm(root / rel, ds.images[i])
        label = int(labels[i]) if labels is not None else -1
        lines.append(f"{rel},{label}")
    manifest = root / f"{name}.csv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def save_benchmark(bench: Benchmark, root) -> dict[str, Path]:
    return {name: save_dataset(getattr(bench, name), root, name) for name in Benchmark._fields}


# -- batching ----------------------------------------------------------------------


class BatchIterator:
    """Deterministic shuffled batches; partial final batch dropped so the
    batch statistics feeding the transition loss keep a constant size."""

    def __init__(self, dataset: Dataset, batch_size: int, seed: int,
                 stream: tuple[int, ...] = ()):
        if len(dataset) == 0:
            raise ValueError("cannot iterate an empty dataset")
        if batch_size > len(dataset):
            raise ValueError(f"batch size {batch_size} exceeds dataset size {len(dataset)}")
        if batch_size < 1:
            raise ValueError("batch size must be positive")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.stream = tuple(stream)
        self.epoch = 0

    def batches_per_epoch(self) -> int:
        return len(self.dataset) // self.batch_size

    def epoch_order(self, epoch: int) -> np.ndarray:
        return SeededRng(self.seed, self.stream + (epoch,)).permutation(len(self.dataset))

    def epoch_batches(self, epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray | None]]:
        order = self.epoch_order(epoch)
        ds = self.dataset
        for b in range(self.batches_per_epoch()):
            idx = order[b * self.batch_size:(b + 1) * self.batch_size]
            labels = ds.labels[idx] if ds.labels is not None else None
            yield ds.images[idx], labels

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray | None]]:
        """Endless stream over reshuffled epochs."""
        while True:
            yield from self.epoch_batches(self.epoch)
            self.epoch += 1


def iterate_batches(it: BatchIterator, epoch: int = 0):
    """One epoch's worth of full batches in deterministic order."""
    return it.epoch_batches(epoch)
