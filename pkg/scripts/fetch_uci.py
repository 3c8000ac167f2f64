"""Rebuild data/*.csv from dataset files shipped inside public PyPI wheels.

The UCI archive is not always reachable, but KEEL copies of the UCI sets are
bundled in the ``keel_ds`` wheel and a 34-attribute Ionosphere is bundled in
``Orange3``.  This script downloads both wheels (no install), pulls the raw
files out and writes label-last CSVs with a header row.

    python scripts/fetch_uci.py [--out data]
"""
import argparse
import csv
import glob
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

KEEL = {
    "iris": "iris",
    "wine": "wine",
    "wdbc": "wdbc",
    "pid": "pima",
    "is": "segment",
}


def _download(pkg, dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", dest, pkg],
        check=True,
    )
    wheels = glob.glob(str(Path(dest) / "*.whl"))
    return next(w for w in wheels if Path(w).name.lower().startswith(pkg.lower().replace("-", "_")))


def _parse_keel(text):
    # the wheel's "raw" copies have the @-header stripped
    names, rows, in_data = [], [], "@data" not in text.lower()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if in_data:
            rows.append([tok.strip() for tok in line.split(",")])
        elif line.lower().startswith("@attribute"):
            names.append(line.split()[1])
        elif line.lower() == "@data":
            in_data = True
    if not names:
        names = [f"x{i + 1}" for i in range(len(rows[0]))]
    return names, rows


def _parse_orange_tab(text):
    lines = text.splitlines()
    names = lines[0].split("\t")
    rows = [line.split("\t") for line in lines[3:] if line.strip()]
    return names, rows


def _write(path, names, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names[:-1] + ["label"])
        writer.writerows(rows)
    print(f"{path}: {len(rows)} rows, {len(names) - 1} features")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        keel = zipfile.ZipFile(_download("keel_ds", tmp))
        for name, keel_name in KEEL.items():
            raw = keel.read(f"keel_ds/data/balanced/raw/{keel_name}.dat").decode()
            _write(out / f"{name}.csv", *_parse_keel(raw))

        orange = zipfile.ZipFile(_download("Orange3", tmp))
        raw = orange.read("Orange/tests/datasets/ionosphere.tab").decode()
        _write(out / "ionosphere.csv", *_parse_orange_tab(raw))


if __name__ == "__main__":
    main()
