#!/usr/bin/env python3
"""Convert a pixel CSV (784 pixel columns, label last) into an IDX image/label pair.

Used to produce data/mnist5k from the 5000-sample MNIST excerpt that ships
with mlxtend (mlxtend/data/data/mnist_5k.csv.gz, BSD-3 licensed).
"""
import gzip
import struct
import sys


def main(src, images_out, labels_out):
    opener = gzip.open if src.endswith(".gz") else open
    rows = []
    with opener(src, "rt") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([int(float(v)) for v in line.split(",")])
    n = len(rows)
    with open(images_out, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for r in rows:
            fh.write(bytes(r[:-1]))
    with open(labels_out, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(bytes(r[-1] for r in rows))


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit("usage: csv_to_idx.py <in.csv[.gz]> <images-idx3-ubyte> <labels-idx1-ubyte>")
    main(*sys.argv[1:])
