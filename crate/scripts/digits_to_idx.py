#!/usr/bin/env python3
"""Convert the digit JSON files of the `mnist` npm package (v1.1.0) to gzipped IDX.

usage: digits_to_idx.py <package>/src/digits <out_dir>

Every fifth sample of each class (index % 5 == 4, file order) goes to the
t10k files, the rest to train. Pixels are stored as round(v * 255).
"""
import gzip
import json
import os
import struct
import sys


def write_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    split = {"train": ([], []), "t10k": ([], [])}
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for k in range(len(flat) // 784):
            px = [min(255, max(0, round(v * 255))) for v in flat[k * 784:(k + 1) * 784]]
            imgs, labs = split["t10k" if k % 5 == 4 else "train"]
            imgs.append(px)
            labs.append(digit)
    for name, (imgs, labs) in split.items():
        write_images(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), imgs)
        write_labels(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), labs)
        print(name, len(labs))


if __name__ == "__main__":
    main()
