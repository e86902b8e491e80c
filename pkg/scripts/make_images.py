"""Write the bundled 32x32 grayscale test pairs to data/images/.

Each image is a sum of a few Gaussian blobs, quantized to 0..255 with small
values cut to zero so the measures have a few hundred atoms.
"""
import argparse
from pathlib import Path

import numpy as np

from otkit.measures import make_rng, write_pgm

SIZE = 32


def blob_image(rng, n_blobs: int) -> np.ndarray:
    y, x = np.mgrid[0:SIZE, 0:SIZE] + 0.5
    img = np.zeros((SIZE, SIZE))
    for _ in range(n_blobs):
        cx, cy = rng.uniform(6, SIZE - 6, size=2)
        s = rng.uniform(2.0, 5.0)
        img += rng.uniform(0.5, 1.0) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    img = np.round(255 * img / img.max())
    img[img < 8] = 0
    return img / 255.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "images"))
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(args.seed)
    for i in range(3):
        for tag in "ab":
            write_pgm(blob_image(rng, int(rng.integers(2, 5))), out / f"pair{i + 1}_{tag}.pgm")
    print(f"wrote 6 images to {out}")


if __name__ == "__main__":
    main()
