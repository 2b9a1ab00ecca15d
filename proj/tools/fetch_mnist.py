#!/usr/bin/env python3
"""Build a 10,000-image MNIST subsample in IDX format.

The `mnist` npm package ships 10,000 MNIST digits as JSON (pixel/255 rounded
to three decimals, which is enough to recover the original bytes exactly).
This script downloads that tarball, restores the 8-bit pixels and writes a
standard idx3-ubyte image file plus an idx1-ubyte label file.

    python3 tools/fetch_mnist.py [--out data] [--tarball path/to/mnist.tgz]
"""
import argparse
import io
import json
import struct
import tarfile
import urllib.request
from pathlib import Path

URL = "https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz"
SIDE = 28


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--tarball", help="use a local copy instead of downloading")
    args = ap.parse_args()

    if args.tarball:
        blob = Path(args.tarball).read_bytes()
    else:
        with urllib.request.urlopen(URL, timeout=120) as resp:
            blob = resp.read()

    images, labels = [], []
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            values = json.load(tar.extractfile(member))["data"]
            if len(values) % (SIDE * SIDE):
                raise SystemExit(f"digit {digit}: payload not a multiple of {SIDE * SIDE}")
            pixels = bytes(min(255, max(0, round(v * 255))) for v in values)
            count = len(values) // (SIDE * SIDE)
            images.append(pixels)
            labels.append(bytes([digit]) * count)

    n = sum(len(l) for l in labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "mnist10k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, SIDE, SIDE))
        for block in images:
            f.write(block)
    with open(out / "mnist10k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        for block in labels:
            f.write(block)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
