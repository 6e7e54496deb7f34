#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package to IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist-subset

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (6,000 digits) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (4,000 digits). The digit order
is a seeded shuffle, so the output is reproducible.
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN = 6000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            pixels = [min(255, max(0, round(v * 255))) for v in flat[i : i + 784]]
            samples.append((pixels, digit))
    random.Random(20160110).shuffle(samples)
    train, test = samples[:TRAIN], samples[TRAIN:]
    write_images(dst / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(dst / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(dst / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(dst / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"{len(train)} train / {len(test)} test digits written to {dst}")


if __name__ == "__main__":
    main()
