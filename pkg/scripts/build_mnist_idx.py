#!/usr/bin/env python
"""Rebuild the MNIST training IDX files from the classic ``mnist.pkl.gz`` pickle.

The pickle holds the 60000 training images split 50000/10000 (train/valid)
in their original order, with pixels stored as byte/256.  Concatenating the
two parts and multiplying by 256 restores the original bytes exactly.

Where only PyPI is reachable, the pickle can be taken from the ``mnist-hub``
wheel::

    pip download mnist-hub==0.1.4 --no-deps -d /tmp/mh
    python scripts/build_mnist_idx.py /tmp/mh/mnist_hub-0.1.4-py3-none-any.whl

Without a source argument the wheel is fetched with pip into a temp dir.
"""

import argparse
import glob
import gzip
import io
import pickle
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

from fylab.data import TRAIN_IMAGES, TRAIN_LABELS, default_mnist_dir, load_mnist_idx, write_idx

PICKLE_IN_WHEEL = "mnist/data/mnist.pkl.gz"


def load_pickle_bytes(source: Path) -> bytes:
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as z:
            return z.read(PICKLE_IN_WHEEL)
    return source.read_bytes()


def fetch_wheel(tmp: str) -> Path:
    subprocess.run([sys.executable, "-m", "pip", "download", "mnist-hub==0.1.4", "--no-deps",
                    "-d", tmp, "-q"], check=True)
    return Path(glob.glob(f"{tmp}/*.whl")[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", nargs="?", type=Path, help="mnist.pkl.gz or the mnist-hub wheel")
    ap.add_argument("--out", type=Path, default=default_mnist_dir())
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        source = args.source or fetch_wheel(tmp)
        raw = load_pickle_bytes(source)
    (tx, ty), (vx, vy), _ = pickle.load(gzip.open(io.BytesIO(raw)), encoding="latin1")
    x = np.concatenate([tx, vx]).astype(np.float64) * 256.0
    if np.any(x != np.round(x)) or x.max() > 255:
        sys.exit("pixels are not byte/256 values; refusing to convert")
    images = x.astype(np.uint8).reshape(-1, 28, 28)
    labels = np.concatenate([ty, vy]).astype(np.uint8)

    args.out.mkdir(parents=True, exist_ok=True)
    img_path, lab_path = args.out / TRAIN_IMAGES, args.out / TRAIN_LABELS
    write_idx(images, labels, img_path, lab_path)
    ds = load_mnist_idx(img_path, lab_path)
    print(f"wrote {len(ds)} images to {img_path} and {lab_path}")


if __name__ == "__main__":
    main()
