"""Build IDX files from the 5,000-sample MNIST subset bundled with mlxtend.

The official MNIST archives are not redistributable from this repository and
are often unreachable in sandboxed CI.  mlxtend ships 500 real MNIST training
images per digit; this script shuffles them once (seed 0) and writes a
3,000-image train split and a 2,000-image test split using the standard
file names, gzip-compressed.

    python scripts/make_mnist_subset.py [--wheel mlxtend-*.whl] [--out data/mnist]

Point ``LFGADMM_DATA_DIR`` at a directory holding the official files to use
full MNIST instead.
"""
import argparse
import gzip
import io
import zipfile
from pathlib import Path

import numpy as np

from lfgadmm.data import write_idx

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
N_TRAIN = 3000


def read_csv(wheel):
    if wheel is None:
        from mlxtend.data.mnist import DATA_PATH
        raw = Path(DATA_PATH).read_bytes()
    else:
        raw = zipfile.ZipFile(wheel).read(CSV_MEMBER)
    table = np.loadtxt(io.StringIO(gzip.decompress(raw).decode()), delimiter=",")
    return table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", help="mlxtend wheel to read instead of the installed package")
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "mnist"))
    args = parser.parse_args()

    pixels, labels = read_csv(args.wheel)
    order = np.random.default_rng(0).permutation(len(labels))
    images = pixels[order].reshape(-1, 28, 28)
    labels = labels[order]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", images[:N_TRAIN])
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[:N_TRAIN])
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[N_TRAIN:])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[N_TRAIN:])
    print(f"wrote {N_TRAIN} train and {len(labels) - N_TRAIN} test images to {out}")


if __name__ == "__main__":
    main()
