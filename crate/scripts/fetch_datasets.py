#!/usr/bin/env python3
"""Download datasets that are not bundled and write them as label-last CSV.

    python3 scripts/fetch_datasets.py [dermatology] [usps]

`usps` is written in LIBSVM format, which the CLI reads directly.
"""
import bz2
import csv
import statistics
import sys
import urllib.request
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"
UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"
LIBSVM = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass"


def fetch(url):
    with urllib.request.urlopen(url, timeout=60) as r:
        return r.read()


def dermatology():
    rows = [l.split(",") for l in fetch(f"{UCI}/dermatology/dermatology.data").decode().splitlines() if l.strip()]
    ages = [float(r[33]) for r in rows if r[33] != "?"]
    median = statistics.median(ages)
    with open(DATA / "dermatology.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"a{i}" for i in range(1, 34)] + ["age", "class"])
        for r in rows:
            if r[33] == "?":
                r[33] = f"{median:g}"
            w.writerow([v.strip() for v in r])
    print(f"dermatology: {len(rows)} rows, {len(rows) - len(ages)} ages imputed with {median:g}")


def usps():
    for name in ["usps", "usps.t"]:
        raw = bz2.decompress(fetch(f"{LIBSVM}/{name}.bz2"))
        (DATA / f"{name.replace('.t', '_test')}.libsvm").write_bytes(raw)
        print(f"{name}: {len(raw.splitlines())} rows")


if __name__ == "__main__":
    jobs = {"dermatology": dermatology, "usps": usps}
    for name in sys.argv[1:] or ["dermatology"]:
        jobs[name]()
