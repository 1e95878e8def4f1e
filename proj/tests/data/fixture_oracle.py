"""Independent pandas computation of the statistics the C++ tests freeze for
retail_fixture.csv. Run: python3 fixture_oracle.py retail_fixture.csv"""

import json
import math
import sys

import pandas as pd


def main(path):
    df = pd.read_csv(path, dtype={"InvoiceNo": str, "StockCode": str, "CustomerID": str, "Description": str})
    raw = len(df)
    keep = (
        ~df["InvoiceNo"].str.startswith("C")
        & (df["Quantity"] > 0)
        & (df["UnitPrice"] > 0)
        & df["CustomerID"].notna()
    )
    clean = df[keep]
    pairs = clean.groupby(["CustomerID", "StockCode"])["Quantity"].sum()
    users = clean["CustomerID"].nunique()
    items = clean["StockCode"].nunique()

    # equal-frequency bins, advancing ties to the next distinct value
    q = sorted(pairs.tolist())
    n = len(q)
    bounds = []
    for k in range(1, 5):
        idx = min(max(math.ceil(k * n / 5), 1), n - 1)
        floor = max(q[idx - 1], bounds[-1] if bounds else -math.inf)
        bounds.append(min(v for v in q if v > floor))
    labels = [sum(v >= b for b in bounds) for v in q]
    counts = [labels.count(c) for c in range(5)]

    print(json.dumps({
        "raw_rows": raw,
        "clean_rows": int(keep.sum()),
        "dropped_cancel": int(df["InvoiceNo"].str.startswith("C").sum()),
        "dropped_missing_customer": int(df["CustomerID"].isna().sum()),
        "users": users,
        "items": items,
        "interactions": int(len(pairs)),
        "sparsity": 1 - len(pairs) / (users * items),
        "bin_boundaries": bounds,
        "label_counts": counts,
        "label_shares": [c / n for c in counts],
    }, indent=2))


if __name__ == "__main__":
    main(sys.argv[1])
