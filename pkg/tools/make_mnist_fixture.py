"""Build the bundled 10k-sample MNIST IDX fixture.

Source: the `mnist` npm package (MIT licensed), which ships the first
10,000 MNIST training digits as JSON arrays of pixel values normalized
to [0, 1] and rounded to 3 decimals.  Rounding k/255 to 3 decimals is
injective for k in 0..255, so round(v * 255) reconstructs the original
u8 pixels exactly.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python tools/make_mnist_fixture.py package/src/digits data/mnist10k

Output: data/mnist10k/{images-idx3-ubyte.gz, labels-idx1-ubyte.gz},
samples interleaved round-robin across the ten classes.
"""

import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def main(digits_dir: str, out_dir: str) -> None:
    per_class = []
    for k in range(10):
        flat = json.loads((Path(digits_dir) / f"{k}.json").read_text())["data"]
        arr = np.asarray(flat, dtype=np.float64).reshape(-1, 28 * 28)
        pixels = np.rint(arr * 255.0).astype(np.uint8)
        per_class.append(pixels)
        print(f"digit {k}: {len(pixels)} samples")

    images, labels = [], []
    remaining = [len(p) for p in per_class]
    cursors = [0] * 10
    while any(cursors[k] < remaining[k] for k in range(10)):
        for k in range(10):
            if cursors[k] < remaining[k]:
                images.append(per_class[k][cursors[k]])
                labels.append(k)
                cursors[k] += 1

    images = np.stack(images)
    labels = np.asarray(labels, dtype=np.uint8)
    n = len(labels)
    print(f"total {n} samples")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    img_bytes = struct.pack(">IIII", 0x00000803, n, 28, 28) + images.tobytes()
    lbl_bytes = struct.pack(">II", 0x00000801, n) + labels.tobytes()
    (out / "images-idx3-ubyte.gz").write_bytes(gzip.compress(img_bytes, 9))
    (out / "labels-idx1-ubyte.gz").write_bytes(gzip.compress(lbl_bytes, 9))
    print("wrote", out / "images-idx3-ubyte.gz", out / "labels-idx1-ubyte.gz")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
