#!/usr/bin/env python3
"""Fetch a 10k-digit MNIST subset and write it as IDX files.

The npm package ``mnist`` ships 10,000 MNIST digits as JSON with pixel
values k/255 rounded to three decimals. Rounding back to the nearest byte
recovers the original uint8 pixels exactly (1/255 > 0.001), so the IDX
files written here are byte-for-byte MNIST digits.

Usage: tools/fetch_mnist.py [--out data/] [--tarball mnist-1.1.0.tgz]
"""

import argparse
import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile


def load_digits(tarball: pathlib.Path):
    images, labels = [], []
    with tarfile.open(tarball) as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            data = json.load(tar.extractfile(member))["data"]
            if len(data) % 784:
                raise ValueError(f"digit {digit}: payload not a multiple of 784")
            for i in range(0, len(data), 784):
                pixels = bytes(int(round(v * 255.0)) for v in data[i:i + 784])
                images.append(pixels)
                labels.append(digit)
    return images, labels


def write_idx(out: pathlib.Path, images, labels):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "mnist10k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(out / "mnist10k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    parser.add_argument("--tarball", default=None, help="pre-downloaded npm tarball")
    args = parser.parse_args()

    if args.tarball:
        tarball = pathlib.Path(args.tarball)
    else:
        tmp = pathlib.Path(tempfile.mkdtemp())
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True,
                       stdout=subprocess.DEVNULL)
        tarball = next(tmp.glob("mnist-*.tgz"))

    images, labels = load_digits(tarball)
    write_idx(pathlib.Path(args.out), images, labels)
    print(f"wrote {len(images)} digits to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
