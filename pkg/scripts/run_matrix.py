#!/usr/bin/env python3
"""Run the 12-configuration handshake matrix over loopback UDP.

Starts an in-process entropy service and, per configuration, a proxy with a
fresh PKI. Writes per-iteration CSVs plus the summary and decomposition
tables produced by ``qeaas.report.emit``.

    python3 scripts/run_matrix.py --iterations 100 --out results/
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from qeaas import report
from qeaas.channel import certs
from qeaas.channel.config import Sig, all_configs
from qeaas.client import ClientConfig, bench_handshake, bench_pool, bench_rtt
from qeaas.proxy import ProxyConfig, ProxyServer
from qeaas.service import EntropyBackend, EntropyServer

log = logging.getLogger("run_matrix")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--warmup", type=int, default=5)
    ap.add_argument("--delay", type=float, default=0.0, help="seconds between handshakes")
    ap.add_argument("--mtu", type=int, default=1400)
    ap.add_argument("--size", type=int, default=32, help="bytes requested per call")
    ap.add_argument("--seed", type=int, default=7, help="seed for the test entropy stream")
    ap.add_argument("--skip-pool", action="store_true")
    ap.add_argument("--out", default="results")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    service = EntropyServer(("127.0.0.1", 0), EntropyBackend.create("test", seed=args.seed))
    service.start()
    uri = f"http://127.0.0.1:{service.port}/random_number/{args.size}"
    pkis = {sig: certs.make_pki(sig) for sig in Sig}

    handshakes: list[report.BenchRecord] = []
    baseline: list[report.BenchRecord] = []
    try:
        for hs in all_configs(args.mtu):
            pki = pkis[hs.sig]
            proxy_cfg = ProxyConfig(coap_port=0, coaps_port=0, handshake=hs, key_store=pki.key_store())
            with ProxyServer(proxy_cfg) as proxy:
                cfg = ClientConfig(
                    ("127.0.0.1", proxy.coaps_port), uri, "secure", hs, pki.ca,
                    iterations=args.iterations, warmup=args.warmup, delay=args.delay,
                )
                recs = bench_handshake(cfg)
                handshakes += recs
                handshakes += bench_rtt(cfg)
                if not baseline:
                    plain = ClientConfig(("127.0.0.1", proxy.coap_port), uri, "plain",
                                         iterations=args.iterations, warmup=args.warmup)
                    baseline = bench_rtt(plain)
            ok = [r for r in recs if not r.failed]
            mean = report.summarize(ok).mean / 1e3 if len(ok) > 1 else float("nan")
            log.info("%-28s %4d ok %3d failed  mean %.2f ms", hs.config_id, len(ok), len(recs) - len(ok), mean)
    finally:
        service.stop()

    report.write_csv(handshakes, out / "handshake.csv")
    report.write_csv(baseline, out / "baseline_rtt.csv")
    records = handshakes + baseline
    if not args.skip_pool:
        pool = bench_pool(n=args.iterations, warmup=args.warmup, source="test")
        report.write_csv(pool, out / "pool.csv")
        records += pool
    for p in report.emit(records, out, baseline):
        log.info("wrote %s", p)
    return 0 if all(not r.failed for r in handshakes) else 1


if __name__ == "__main__":
    sys.exit(main())
