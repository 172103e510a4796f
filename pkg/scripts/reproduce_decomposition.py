#!/usr/bin/env python3
"""Recompute the handshake decomposition from a table of reference means.

The default table holds the ESP32 measurements (ms, mean and std over 100
handshakes, baseline plain-CoAP RTT 17.6 ms). Pass ``--table`` with a
summary.json from ``run_matrix.py`` to decompose your own run instead.
"""
from __future__ import annotations

import argparse
import json
import sys

from qeaas.report import compare, decompose, pooled_delta, summary_from_mean_std

# (sig, kex) -> ((no-verify mean, std), (full-chain mean, std))
REFERENCE = {
    ("ECDSA", "ECDHE P-256"): ((479, 11), (668, 10)),
    ("ECDSA", "X25519"): ((819, 11), (1008, 9)),
    ("ECDSA", "ML-KEM-512"): ((313, 6), (517, 41)),
    ("ML-DSA-44", "ECDHE P-256"): ((405, 64), (416, 15)),
    ("ML-DSA-44", "X25519"): ((745, 27), (759, 19)),
    ("ML-DSA-44", "ML-KEM-512"): ((225, 9), (249, 20)),
}
REFERENCE_RTT_MS = 17.6
N = 100


def load_summary(path: str) -> tuple[dict, float, int]:
    doc = json.load(open(path))
    rows = [r for r in doc["summary"] if r["phase"] == "handshake"]
    table: dict = {}
    n = 0
    for r in rows:
        slot = 1 if r["verify"] == "full-chain" else 0
        pair = table.setdefault((r["sig"], r["kex"]), [None, None])
        pair[slot] = (r["mean_us"] / 1e3, r["std_us"] / 1e3)
        n = r["n"]
    return {k: tuple(v) for k, v in table.items() if None not in v}, doc["baseline_rtt_ms"]["mean"], n


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--table", help="summary.json written by run_matrix.py")
    args = ap.parse_args(argv)
    table, rtt, n = (REFERENCE, REFERENCE_RTT_MS, N) if not args.table else load_summary(args.table)

    print(f"baseline RTT {rtt:.2f} ms, network share (3 RTT) {3 * rtt:.1f} ms\n")
    print(f"{'signature':<10} {'key exchange':<12} {'total':>8} {'residual':>9} {'verify':>8}")
    dec = {}
    for (sig, kex), (nv, v) in table.items():
        d = decompose(nv[0], v[0], rtt)
        dec[(sig, kex)] = d
        flag = "  (degenerate)" if d.degenerate else ""
        print(f"{sig:<10} {kex:<12} {d.total_ms:8.1f} {d.compute_residual_ms:9.1f} {d.verify_overhead_ms:8.1f}{flag}")

    summ = {k: tuple(summary_from_mean_std(m, s, n) for m, s in pair) for k, pair in table.items()}
    print("\npooled full-chain minus no-verify (mean +/- SEM):")
    for sig in sorted({k[0] for k in table}):
        mean, sem = pooled_delta([summ[k] for k in table if k[0] == sig])
        print(f"  {sig:<10} {mean:7.2f} +/- {sem:.2f} ms")

    fast, slow = ("ML-DSA-44", "ML-KEM-512"), ("ECDSA", "ECDHE P-256")
    if fast in table and slow in table:
        print("\nML-DSA-44 + ML-KEM-512 against ECDSA + ECDHE P-256:")
        for label, i in (("no-verify", 0), ("full-chain", 1)):
            c = compare(summ[fast][i], summ[slow][i])
            print(f"  {label:<11} {c.percent_faster:6.2f}% faster (SEM {100 * c.sem:.2f} pp)")
        res = 1 - dec[fast].compute_residual_ms / dec[slow].compute_residual_ms
        both = (dec[fast].compute_residual_ms + dec[fast].verify_overhead_ms) / (
            dec[slow].compute_residual_ms + dec[slow].verify_overhead_ms)
        print(f"  compute residual {100 * res:.1f}% lower, residual + verify {100 * (1 - both):.1f}% lower")
    kem, p256 = ("ECDSA", "ML-KEM-512"), ("ECDSA", "ECDHE P-256")
    if kem in table and p256 in table:
        c = compare(summ[kem][0], summ[p256][0])
        print(f"ECDSA no-verify, ML-KEM-512 against P-256: {c.percent_faster:.2f}% faster")
    return 0


if __name__ == "__main__":
    sys.exit(main())
