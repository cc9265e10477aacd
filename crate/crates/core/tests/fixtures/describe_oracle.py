"""Brute-force moments of the per-event order-flow contribution.

Reads a tick CSV, drops `TRIM` snapshots at each end of every session,
computes e_n between adjacent kept snapshots of the same session and prints
mean, population standard deviation, skewness and kurtosis as JSON.
Moments are accumulated in exact rational arithmetic.
"""
import csv
import json
import math
import sys
from fractions import Fraction

TRIM = 60


def sessions(rows):
    out, cur, last = [], [], None
    for r in rows:
        if r["session_id"] != last and cur:
            out.append(cur)
            cur = []
        cur.append(r)
        last = r["session_id"]
    if cur:
        out.append(cur)
    return out


def e_n(p, c):
    pb, pb0 = Fraction(c["bid_price"]), Fraction(p["bid_price"])
    pa, pa0 = Fraction(c["ask_price"]), Fraction(p["ask_price"])
    qb, qb0 = int(c["bid_qty"]), int(p["bid_qty"])
    qa, qa0 = int(c["ask_qty"]), int(p["ask_qty"])
    e = 0
    if pb >= pb0:
        e += qb
    if pb <= pb0:
        e -= qb0
    if pa <= pa0:
        e -= qa
    if pa >= pa0:
        e += qa0
    return e


def main(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    xs = []
    for s in sessions(rows):
        if len(s) < 2 * TRIM:
            continue
        kept = s[TRIM:len(s) - TRIM]
        xs.extend(e_n(a, b) for a, b in zip(kept, kept[1:]))
    n = len(xs)
    mean = Fraction(sum(xs), n)
    m2 = sum((x - mean) ** 2 for x in xs) / n
    m3 = sum((x - mean) ** 3 for x in xs) / n
    m4 = sum((x - mean) ** 4 for x in xs) / n
    std = math.sqrt(m2)
    print(json.dumps({
        "n": n,
        "mean": float(mean),
        "std": std,
        "skewness": float(m3) / std ** 3,
        "kurtosis": float(m4 / (m2 * m2)),
    }, indent=2))


if __name__ == "__main__":
    main(sys.argv[1])
