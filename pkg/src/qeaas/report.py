"""Benchmark statistics, latency decomposition and plot-ready exports.

Standard deviations are sample (n - 1) deviations and SEM = std / sqrt(n).
Relative comparisons propagate the two SEMs to first order.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

COLUMNS = [
    "config_id", "transport", "kex", "sig", "verify", "phase", "size",
    "iteration", "latency_us", "failed", "flights", "error",
]
RESIDUAL_NOTE = "conservative lower bound"


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class BenchRecord:
    config_id: str
    transport: str
    phase: str
    iteration: int
    latency_us: float
    kex: str = ""
    sig: str = ""
    verify: str = ""
    size: int = 0
    failed: bool = False
    flights: int = 0
    error: str = ""

    def __post_init__(self):
        if not self.failed and not self.latency_us > 0:
            raise ValueError(f"successful record with latency {self.latency_us}")

    def row(self) -> dict[str, str]:
        d = asdict(self)
        d["failed"] = int(self.failed)
        d["latency_us"] = _fmt(self.latency_us)
        return {k: str(d[k]) for k in COLUMNS}

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "BenchRecord":
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ValueError(f"CSV row lacks columns {sorted(missing)}")
        return cls(
            config_id=row["config_id"], transport=row["transport"], phase=row["phase"],
            iteration=int(row["iteration"]), latency_us=float(row["latency_us"]),
            kex=row["kex"], sig=row["sig"], verify=row["verify"], size=int(row["size"]),
            failed=row["failed"] in ("1", "True", "true"), flights=int(row["flights"]),
            error=row["error"],
        )


def _fmt(x: float) -> str:
    return repr(round(float(x), 6))


def write_csv(records: Iterable[BenchRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_csv(path: str | Path) -> list[BenchRecord]:
    with open(path, newline="") as fh:
        return [BenchRecord.from_row(row) for row in csv.DictReader(fh)]


# -- statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    sem: float
    n: int
    failed: int = 0
    min: float = math.nan
    max: float = math.nan


def summarize(samples: Sequence[float] | Sequence[BenchRecord]) -> Summary:
    """Mean, sample std and SEM of the non-failed samples."""
    failed = 0
    if samples and isinstance(samples[0], BenchRecord):
        failed = sum(r.failed for r in samples)
        values = [r.latency_us for r in samples if not r.failed]
    else:
        values = [float(v) for v in samples]
    n = len(values)
    if n < 2:
        raise InsufficientData(f"need at least 2 successful samples, got {n}")
    std = statistics.stdev(values)
    return Summary(statistics.fmean(values), std, std / math.sqrt(n), n, failed, min(values), max(values))


def pool_samples(groups: Iterable[Sequence[float]]) -> Summary:
    """Flat pooling: every sample weighs the same regardless of its group."""
    return summarize([v for g in groups for v in g])


@dataclass(frozen=True)
class Decomposition:
    network_ms: float
    compute_residual_ms: float
    verify_overhead_ms: float
    total_ms: float
    degenerate: bool = False
    note: str = RESIDUAL_NOTE


def decompose(
    nonverify_mean: float, verify_mean: float, baseline_rtt_mean: float, round_trips: int = 3
) -> Decomposition:
    """Split a verified handshake mean into network, compute and verification.

    The network part is ``round_trips`` baseline RTTs; the compute residual
    is what remains of the non-verified mean and is a lower bound, since the
    baseline RTT already contains some processing. When the residual would be
    negative it is clamped to 0 and ``degenerate`` is set; the components then
    no longer sum to ``verify_mean``.
    """
    if min(nonverify_mean, verify_mean) <= 0 or baseline_rtt_mean < 0:
        raise ValueError("means must be positive and the baseline non-negative")
    network = round_trips * baseline_rtt_mean
    residual = nonverify_mean - network
    degenerate = residual <= 0
    return Decomposition(
        network_ms=network,
        compute_residual_ms=max(residual, 0.0),
        verify_overhead_ms=verify_mean - nonverify_mean,
        total_ms=verify_mean,
        degenerate=degenerate,
        note=RESIDUAL_NOTE + ("; degenerate: residual clamped to 0" if degenerate else ""),
    )


@dataclass(frozen=True)
class Comparison:
    relative: float
    sem: float

    @property
    def percent_faster(self) -> float:
        return -100.0 * self.relative


def compare_means(mean_a: float, sem_a: float, mean_b: float, sem_b: float) -> Comparison:
    if mean_b == 0:
        raise ValueError("reference mean is zero")
    ratio = mean_a / mean_b
    if mean_a == 0:
        sem = abs(sem_a / mean_b)
    else:
        sem = abs(ratio) * math.hypot(sem_a / mean_a, sem_b / mean_b)
    return Comparison(ratio - 1.0, sem)


def compare(a: Summary, b: Summary) -> Comparison:
    """``(A - B) / B`` with first-order SEM propagation."""
    return compare_means(a.mean, a.sem, b.mean, b.sem)


def pooled_delta(pairs: Sequence[tuple[Summary, Summary]]) -> tuple[float, float]:
    """Mean of ``with - without`` over pairs and its propagated SEM."""
    if not pairs:
        raise InsufficientData("no pairs")
    k = len(pairs)
    mean = sum(w.mean - wo.mean for wo, w in pairs) / k
    sem = math.sqrt(sum(wo.sem ** 2 + w.sem ** 2 for wo, w in pairs)) / k
    return mean, sem


def summary_from_mean_std(mean: float, std: float, n: int) -> Summary:
    """Rebuild a summary from published ``mean +/- std`` figures."""
    return Summary(mean, std, std / math.sqrt(n), n)


# -- export ----------------------------------------------------------------------

def _slug(*parts) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", "_".join(str(p) for p in parts if p != ""))


def _group_key(r: BenchRecord) -> tuple:
    return (r.config_id, r.transport, r.phase, r.size)


def group(records: Iterable[BenchRecord]) -> dict[tuple, list[BenchRecord]]:
    groups: dict[tuple, list[BenchRecord]] = defaultdict(list)
    for r in records:
        groups[_group_key(r)].append(r)
    return dict(sorted(groups.items()))


def _summary_rows(groups: dict[tuple, list[BenchRecord]]) -> list[dict]:
    rows = []
    for (config_id, transport, phase, size), recs in groups.items():
        first = recs[0]
        row = {
            "config_id": config_id, "transport": transport, "kex": first.kex, "sig": first.sig,
            "verify": first.verify, "phase": phase, "size": size,
        }
        try:
            s = summarize(recs)
            row.update(mean_us=s.mean, std_us=s.std, sem_us=s.sem, min_us=s.min, max_us=s.max, n=s.n, failed=s.failed)
        except InsufficientData:
            ok = [r.latency_us for r in recs if not r.failed]
            row.update(
                mean_us=ok[0] if ok else math.nan, std_us=math.nan, sem_us=math.nan,
                min_us=min(ok, default=math.nan), max_us=max(ok, default=math.nan),
                n=len(ok), failed=len(recs) - len(ok),
            )
        rows.append(row)
    return rows


def _decomposition_rows(rows: list[dict], baseline_ms: float) -> list[dict]:
    handshakes = {
        (r["kex"], r["sig"], r["verify"]): r for r in rows
        if r["phase"] == "handshake" and r["transport"] == "secure" and r["n"] >= 2
    }
    out = []
    for (kex, sig, verify), r in sorted(handshakes.items()):
        if verify != "no-verify" or (kex, sig, "full-chain") not in handshakes:
            continue
        v = handshakes[(kex, sig, "full-chain")]
        d = decompose(r["mean_us"] / 1e3, v["mean_us"] / 1e3, baseline_ms)
        out.append({"kex": kex, "sig": sig, **asdict(d)})
    return out


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, float):
        return round(x, 6)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    return x


def _write_table(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})


def emit(
    records: Sequence[BenchRecord], out_dir: str | Path, baseline: Sequence[BenchRecord] | None = None
) -> list[Path]:
    """Write summary.csv/json, one scatter file per group and, given a
    baseline RTT run, decomposition.csv. Returns the paths written."""
    if not records:
        raise InsufficientData("no records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = group(records)
    rows = _summary_rows(groups)
    written = []

    p = out / "summary.csv"
    _write_table(rows, p)
    written.append(p)
    doc = {"summary": rows}

    for (config_id, transport, phase, size), recs in groups.items():
        p = out / f"scatter_{_slug(config_id, transport, phase, size or '')}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["config_id", "iteration", "latency_us"])
            for r in sorted(recs, key=lambda r: r.iteration):
                if not r.failed:
                    w.writerow([config_id, r.iteration, _fmt(r.latency_us)])
        written.append(p)

    if baseline:
        base = summarize(list(baseline))
        dec = _decomposition_rows(rows, base.mean / 1e3)
        doc["baseline_rtt_ms"] = {"mean": base.mean / 1e3, "std": base.std / 1e3, "n": base.n}
        doc["decomposition"] = dec
        p = out / "decomposition.csv"
        _write_table(dec, p)
        written.append(p)

    p = out / "summary.json"
    p.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description="Summarize benchmark CSVs")
    ap.add_argument("--in", dest="inputs", nargs="+", required=True, help="per-iteration CSV files")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--baseline", help="plain-CoAP RTT CSV used as the per-round-trip network cost")
    ap.add_argument("--decompose", action="store_true", help="emit the handshake decomposition")
    args = ap.parse_args(argv)
    if args.decompose and not args.baseline:
        ap.error("--decompose needs --baseline")
    records = [r for path in args.inputs for r in read_csv(path)]
    baseline = read_csv(args.baseline) if args.decompose else None
    try:
        paths = emit(records, args.out, baseline)
    except InsufficientData as exc:
        raise SystemExit(f"error: {exc}")
    for p in paths:
        print(p)


if __name__ == "__main__":
    main()
