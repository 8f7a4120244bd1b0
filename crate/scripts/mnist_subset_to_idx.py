#!/usr/bin/env python3
"""Convert the 5000-image MNIST subset bundled with mlxtend into gzipped IDX files.

Usage:
    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/mnist_subset_to_idx.py /tmp/mlx/mlxtend-*.whl data/mnist-5k

The CSV inside the wheel holds one image per row: 784 pixel values in [0, 255]
followed by the class label. Rows are grouped by class (500 per digit); the
loader's seeded subsampling takes care of shuffling.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def main() -> None:
    wheel, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    raw = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER)).decode()
    rows = [list(map(int, map(float, line.split(",")))) for line in raw.strip().splitlines()]
    n = len(rows)
    images = bytearray(struct.pack(">IIII", 0x00000803, n, 28, 28))
    labels = bytearray(struct.pack(">II", 0x00000801, n))
    for row in rows:
        assert len(row) == 785
        images.extend(bytes(row[:784]))
        labels.append(row[784])
    out_dir.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archives byte-stable across regenerations
    with gzip.GzipFile(out_dir / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(out_dir / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {n} images to {out_dir}")


if __name__ == "__main__":
    main()
