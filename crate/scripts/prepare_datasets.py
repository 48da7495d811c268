#!/usr/bin/env python3
"""Convert the raw German, COMPAS and Adult distributions into headered CSVs.

The raw files are the copies bundled in the `responsibly` wheel:

    pip download responsibly==0.1.2 --no-deps -d /tmp/wheel
    python3 scripts/prepare_datasets.py --wheel /tmp/wheel/responsibly-0.1.2-py3-none-any.whl

Only mechanical conversions happen here (header, whitespace, the German
`sex` column derived from the joint status/sex code, and the usual
ProPublica screening filter for COMPAS). Feature selection, recoding and
bucketing are declared in the dataset presets of the Rust crate.
"""

import argparse
import csv
import io
import zipfile
from pathlib import Path

GERMAN_COLUMNS = [
    "status", "duration", "credit_history", "purpose", "credit_amount",
    "savings", "employment", "installment_rate", "personal_status",
    "other_debtors", "residence_since", "property", "age",
    "installment_plans", "housing", "existing_credits", "job",
    "people_liable", "telephone", "foreign_worker", "credit",
]

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]

COMPAS_COLUMNS = [
    "sex", "age", "age_cat", "race", "priors_count", "c_charge_degree",
    "days_b_screening_arrest", "is_recid", "score_text", "decile_score",
    "two_year_recid",
]

FEMALE_STATUS = {"A92", "A95"}


def read(zf, name):
    return zf.read(f"responsibly/dataset/{name}").decode("utf-8")


def german(zf, out):
    rows = [line.split() for line in read(zf, "german/german.data").splitlines() if line.strip()]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GERMAN_COLUMNS + ["sex"])
        for r in rows:
            sex = "female" if r[8] in FEMALE_STATUS else "male"
            w.writerow(r + [sex])
    return len(rows)


def adult(zf, out):
    n = 0
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ADULT_COLUMNS)
        for name in ("adult/adult.data", "adult/adult.test"):
            for line in read(zf, name).splitlines():
                if not line.strip() or line.startswith("|"):
                    continue
                cells = [c.strip() for c in line.split(",")]
                cells[-1] = cells[-1].rstrip(".")
                w.writerow(cells)
                n += 1
    return n


def compas(zf, out):
    reader = csv.reader(io.StringIO(read(zf, "compas/compas-scores-two-years.csv")))
    header = next(reader)
    # the raw file repeats some column names; first occurrence wins
    index = {}
    for i, h in enumerate(header):
        index.setdefault(h, i)
    n = 0
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPAS_COLUMNS)
        for r in reader:
            get = lambda c: r[index[c]]
            days = get("days_b_screening_arrest")
            if days == "" or not -30 <= int(float(days)) <= 30:
                continue
            if get("is_recid") == "-1" or get("c_charge_degree") == "O":
                continue
            if get("score_text") == "N/A":
                continue
            w.writerow([get(c) for c in COMPAS_COLUMNS])
            n += 1
    return n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", required=True)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(args.wheel) as zf:
        print("german", german(zf, out / "german.csv"))
        print("adult", adult(zf, out / "adult.csv"))
        print("compas", compas(zf, out / "compas.csv"))


if __name__ == "__main__":
    main()
