#!/usr/bin/env python3
"""Build the desk-scale MNIST subset under data/mnist/ in IDX format.

Source: the `mnist` npm package (https://www.npmjs.com/package/mnist),
which ships ~1000 genuine MNIST samples per digit as JSON, pixel values
normalized to [0,1].  This script converts them back to the standard
big-endian IDX byte format so the loaders here can also ingest the
official full-size files unchanged.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist

Split: per digit, a seeded shuffle assigns the first 800 samples to the
train files and the rest to the t10k-style test files.
"""

import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_DIGIT = 800
SHUFFLE_SEED = 20240901


def write_idx_images(path: Path, images: list) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))


def write_idx_labels(path: Path, labels: list) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__)
        return 1
    src = Path(sys.argv[1])
    out = Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)

    train, test = [], []
    for digit in range(10):
        with open(src / f"{digit}.json") as f:
            flat = json.load(f)["data"]
        n = len(flat) // 784
        samples = [flat[i * 784:(i + 1) * 784] for i in range(n)]
        rng = random.Random(SHUFFLE_SEED + digit)
        rng.shuffle(samples)
        train += [(img, digit) for img in samples[:TRAIN_PER_DIGIT]]
        test += [(img, digit) for img in samples[TRAIN_PER_DIGIT:]]

    # interleave classes deterministically so prefix subsets stay balanced
    rng = random.Random(SHUFFLE_SEED)
    rng.shuffle(train)
    rng.shuffle(test)

    write_idx_images(out / "train-images-idx3-ubyte", [img for img, _ in train])
    write_idx_labels(out / "train-labels-idx1-ubyte", [y for _, y in train])
    write_idx_images(out / "t10k-images-idx3-ubyte", [img for img, _ in test])
    write_idx_labels(out / "t10k-labels-idx1-ubyte", [y for _, y in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
