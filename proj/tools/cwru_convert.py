#!/usr/bin/env python3
"""Convert CWRU bearing .mat recordings into adda manifests.

Writes one directory per domain (A, B, C) holding class_XX.f32 recordings
(drive-end accelerometer, float32 little-endian) and two manifests:
manifest.json tags samples as source (domain label 0), manifest_target.json
tags the same windows as target (domain label 1).

    cwru_convert.py --raw DIR --mapping mapping.json --out DIR [--windows 800]

The mapping names the .mat file of every class in every domain:

    {"A": {"1": "98.mat", "2": "106.mat", ...}, "B": {...}, "C": {...}}
"""

import argparse
import json
import pathlib
import sys

import numpy as np
from scipy.io import loadmat

WINDOW = 4096


def drive_end_signal(path):
    if not path.is_file():
        raise OSError(f"{path}: no such file")
    data = loadmat(path)
    keys = [k for k in data if k.endswith("_DE_time")]
    if len(keys) != 1:
        raise ValueError(f"{path}: expected one *_DE_time array, found {keys}")
    return np.asarray(data[keys[0]], dtype=np.float64).ravel()


def manifest(domain, label, files, windows, seed):
    return {
        "version": 1,
        "domain": domain,
        "domain_label": label,
        "sample_rate": 12000.0,
        "seed": seed,
        "normalization": "max",
        "classes": [
            {"class_label": c, "file": name, "windows": windows} for c, name in files
        ],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--raw", required=True, type=pathlib.Path, help="directory of CWRU .mat files")
    ap.add_argument("--mapping", required=True, type=pathlib.Path, help="domain -> class -> .mat file")
    ap.add_argument("--out", required=True, type=pathlib.Path, help="output directory")
    ap.add_argument("--windows", type=int, default=800, help="windows per class")
    ap.add_argument("--seed", type=int, default=1, help="window placement seed")
    args = ap.parse_args()

    mapping = json.loads(args.mapping.read_text())
    for domain, classes in sorted(mapping.items()):
        out = args.out / domain
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for label in sorted(classes, key=int):
            signal = drive_end_signal(args.raw / classes[label])
            if signal.size < WINDOW:
                raise ValueError(f"{classes[label]}: {signal.size} samples, need {WINDOW}")
            name = f"class_{int(label):02d}.f32"
            signal.astype("<f4").tofile(out / name)
            files.append((int(label), name))
        for fname, label in (("manifest.json", 0), ("manifest_target.json", 1)):
            text = json.dumps(manifest(domain, label, files, args.windows, args.seed), indent=2)
            (out / fname).write_text(text + "\n")
        print(f"{domain}: {len(files)} classes -> {out}")


if __name__ == "__main__":
    try:
        main()
    except (OSError, ValueError, KeyError) as e:
        print(f"cwru_convert: {e}", file=sys.stderr)
        sys.exit(2)
