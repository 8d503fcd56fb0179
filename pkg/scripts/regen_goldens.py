#!/usr/bin/env python3
"""Regenerate the frozen augmentation rasters under tests/golden/.

Run only when the augmentation contract intentionally changes; the test
suite compares against these files byte for byte.
"""

from pathlib import Path

import numpy as np

from crossglyph import augment as aug
from crossglyph.rng import SeededRng

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"


def grid_image(seed=100, size=32):
    g = np.random.default_rng(seed)
    return np.rint(g.random((size, size)) * 255.0) / 255.0


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    img = grid_image()
    for seed in (42, 7, 1234):
        out = aug.strong_augment(img, aug.StrongPolicy(), SeededRng(seed).child(0))
        np.save(GOLDEN / f"strong_seed{seed}.npy", out)
        print(f"strong_seed{seed}.npy  sum={out.sum():.6f}")
    weak = aug.weak_augment(img, SeededRng(5).child(0))
    np.save(GOLDEN / "weak_seed5.npy", weak)
    print(f"weak_seed5.npy  flipped={not np.array_equal(weak, img)}")


if __name__ == "__main__":
    main()
