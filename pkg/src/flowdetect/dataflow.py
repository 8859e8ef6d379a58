"""NetFlow CSV ingestion, preprocessing, chronological splits and windowing.

Row order in the file is taken as temporal order. Addresses and ports are
identifiers and never become features; ``Attack`` is kept on the record but
is not a feature either.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .container import atomic_write_text, read_container, write_container
from .errors import ConfigError, DataError, IncompatibleVersionError, SchemaError, SequenceTooShortError
from .tensor import Rng

log = logging.getLogger(__name__)

COLUMNS = (
    "IPV4_SRC_ADDR",
    "L4_SRC_PORT",
    "IPV4_DST_ADDR",
    "L4_DST_PORT",
    "PROTOCOL",
    "L7_PROTO",
    "IN_BYTES",
    "OUT_BYTES",
    "IN_PKTS",
    "OUT_PKTS",
    "TCP_FLAGS",
    "FLOW_DURATION_MILLISECONDS",
    "Label",
    "Attack",
)
CATEGORICAL = ("PROTOCOL", "L7_PROTO")
NUMERIC = ("IN_BYTES", "OUT_BYTES", "IN_PKTS", "OUT_PKTS", "TCP_FLAGS", "FLOW_DURATION_MILLISECONDS")
FEATURES = CATEGORICAL + NUMERIC

WINDOWS_VERSION = 1
STATS_VERSION = 1


@dataclass(slots=True)
class FlowRecord:
    src_addr: str
    src_port: int
    dst_addr: str
    dst_port: int
    protocol: int
    l7_proto: float
    in_bytes: int
    out_bytes: int
    in_pkts: int
    out_pkts: int
    tcp_flags: int
    flow_duration_ms: int
    label: int
    attack_name: str

    def feature_values(self) -> tuple:
        return (
            self.protocol,
            self.l7_proto,
            self.in_bytes,
            self.out_bytes,
            self.in_pkts,
            self.out_pkts,
            self.tcp_flags,
            self.flow_duration_ms,
        )

    def to_row(self) -> list:
        return [
            self.src_addr,
            self.src_port,
            self.dst_addr,
            self.dst_port,
            self.protocol,
            repr(float(self.l7_proto)),
            self.in_bytes,
            self.out_bytes,
            self.in_pkts,
            self.out_pkts,
            self.tcp_flags,
            self.flow_duration_ms,
            self.label,
            self.attack_name,
        ]


class RowIssue(NamedTuple):
    line: int
    message: str


class CsvLoad(NamedTuple):
    records: list[FlowRecord]
    skipped: list[RowIssue]


def _count(text: str, name: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError(f"{name} is negative ({value})")
    return value


def _port(text: str, name: str) -> int:
    value = int(text)
    if not 0 <= value <= 65535:
        raise ValueError(f"{name} out of range ({value})")
    return value


def _parse_row(row: list[str], idx: dict[str, int]) -> FlowRecord:
    get = lambda col: row[idx[col]].strip()  # noqa: E731
    l7 = float(get("L7_PROTO"))
    if not math.isfinite(l7):
        raise ValueError("L7_PROTO is not finite")
    label = int(get("Label"))
    if label not in (0, 1):
        raise ValueError(f"Label must be 0 or 1, got {label}")
    return FlowRecord(
        src_addr=get("IPV4_SRC_ADDR"),
        src_port=_port(get("L4_SRC_PORT"), "L4_SRC_PORT"),
        dst_addr=get("IPV4_DST_ADDR"),
        dst_port=_port(get("L4_DST_PORT"), "L4_DST_PORT"),
        protocol=int(get("PROTOCOL")),
        l7_proto=l7,
        in_bytes=_count(get("IN_BYTES"), "IN_BYTES"),
        out_bytes=_count(get("OUT_BYTES"), "OUT_BYTES"),
        in_pkts=_count(get("IN_PKTS"), "IN_PKTS"),
        out_pkts=_count(get("OUT_PKTS"), "OUT_PKTS"),
        tcp_flags=_count(get("TCP_FLAGS"), "TCP_FLAGS"),
        flow_duration_ms=_count(get("FLOW_DURATION_MILLISECONDS"), "FLOW_DURATION_MILLISECONDS"),
        label=label,
        attack_name=get("Attack"),
    )


def check_header(header: Sequence[str], required: Sequence[str] = COLUMNS) -> dict[str, int]:
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(missing, [h for h in header if h not in COLUMNS])
    return {c: header.index(c) for c in COLUMNS}


def load_csv(path) -> CsvLoad:
    """Parse an NF-BoT-IoT style CSV.

    Malformed rows are skipped and reported with their line number; a
    missing column raises ``SchemaError``. Extra columns are ignored.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    records: list[FlowRecord] = []
    skipped: list[RowIssue] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(COLUMNS) from None
        idx = check_header(header)
        width = len(header)
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                skipped.append(RowIssue(reader.line_num, f"expected {width} fields, found {len(row)}"))
                continue
            try:
                records.append(_parse_row(row, idx))
            except ValueError as exc:
                skipped.append(RowIssue(reader.line_num, str(exc)))
    for issue in skipped[:20]:
        log.warning("%s:%d skipped: %s", path, issue.line, issue.message)
    if len(skipped) > 20:
        log.warning("%s: %d more rows skipped", path, len(skipped) - 20)
    return CsvLoad(records, skipped)


def write_csv(records: Sequence[FlowRecord], path) -> None:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow(r.to_row())
    atomic_write_text(path, buf.getvalue())


def benign_fraction(records: Sequence[FlowRecord]) -> float:
    if not records:
        return 0.0
    return sum(r.label == 0 for r in records) / len(records)


# --------------------------------------------------------------------------
# preprocessing


@dataclass
class PreprocStats:
    """Fitted on the training split only.

    ``vocab`` maps each categorical column to ``{value: code}``, codes being
    frequency ranks starting at 1 (ties broken by value); 0 is reserved for
    values never seen during fitting.
    """

    feature_names: list[str]
    mean: np.ndarray
    std: np.ndarray
    vocab: dict[str, dict[float, int]]
    dropped: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "format_version": STATS_VERSION,
            "feature_names": list(self.feature_names),
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "vocab": {col: [[float(k), int(v)] for k, v in voc.items()] for col, voc in self.vocab.items()},
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocStats":
        if d.get("format_version") != STATS_VERSION:
            raise IncompatibleVersionError(f"preprocessing stats version {d.get('format_version')} is not supported")
        return cls(
            feature_names=list(d["feature_names"]),
            mean=np.array(d["mean"], dtype=np.float64),
            std=np.array(d["std"], dtype=np.float64),
            vocab={col: {float(k): int(v) for k, v in pairs} for col, pairs in d["vocab"].items()},
            dropped=list(d["dropped"]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PreprocStats):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass
class FeatureTable:
    matrix: np.ndarray  # (rows, n)
    labels: np.ndarray  # (rows,) int64
    feature_names: list[str]

    def __len__(self) -> int:
        return self.matrix.shape[0]


def _frequency_codes(values: Sequence[float]) -> dict[float, int]:
    counts = Counter(float(v) for v in values)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {value: rank + 1 for rank, (value, _) in enumerate(ranked)}


def raw_features(records: Sequence[FlowRecord], vocab: dict[str, dict[float, int]]) -> np.ndarray:
    """Unscaled feature matrix in ``FEATURES`` order with categoricals encoded."""
    raw = np.array([r.feature_values() for r in records], dtype=np.float64).reshape(len(records), len(FEATURES))
    for j, col in enumerate(CATEGORICAL):
        codes = vocab[col]
        raw[:, j] = [codes.get(float(v), 0) for v in raw[:, j]]
    return raw


def column_stats(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column mean, population std, and a mask of non-constant columns."""
    keep = np.ptp(matrix, axis=0) > 0
    return matrix.mean(axis=0), matrix.std(axis=0), keep


def fit_preprocessor(train_records: Sequence[FlowRecord]) -> PreprocStats:
    if len(train_records) == 0:
        raise ConfigError("cannot fit preprocessing on an empty training split")
    vocab = {
        "PROTOCOL": _frequency_codes(r.protocol for r in train_records),
        "L7_PROTO": _frequency_codes(r.l7_proto for r in train_records),
    }
    raw = raw_features(train_records, vocab)
    mean, std, keep = column_stats(raw)
    dropped = [name for name, k in zip(FEATURES, keep) if not k]
    if dropped:
        log.info("dropping constant features: %s", ", ".join(dropped))
    if not keep.any():
        raise ConfigError("every feature is constant on the training split")
    return PreprocStats(
        feature_names=[name for name, k in zip(FEATURES, keep) if k],
        mean=mean[keep],
        std=std[keep],
        vocab=vocab,
        dropped=dropped,
    )


def transform(records: Sequence[FlowRecord], stats: PreprocStats) -> FeatureTable:
    raw = raw_features(records, stats.vocab)
    cols = [FEATURES.index(name) for name in stats.feature_names]
    matrix = (raw[:, cols] - stats.mean) / stats.std
    labels = np.array([r.label for r in records], dtype=np.int64)
    return FeatureTable(np.ascontiguousarray(matrix), labels, list(stats.feature_names))


def save_stats(stats: PreprocStats, path) -> None:
    atomic_write_text(path, json.dumps(stats.to_dict(), indent=2) + "\n")


def load_stats(path) -> PreprocStats:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    return PreprocStats.from_dict(json.loads(path.read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# splitting and sampling


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    # tiny slack so e.g. 10 * 0.3 = 2.9999999999999996 floors to 3
    n_val = math.floor(n * ratios[1] + 1e-9)
    n_test = math.floor(n * ratios[2] + 1e-9)
    n_train = n - n_val - n_test
    sizes = (n_train, n_val, n_test)
    if min(sizes) == 0:
        raise ConfigError(f"split of {n} rows with ratios {tuple(ratios)} leaves an empty split {sizes}")
    return sizes


def split_chronological(records: Sequence, ratios=(0.6, 0.2, 0.2)) -> tuple[list, list, list]:
    """Contiguous train / validation / test blocks; floor allocation, remainder to train."""
    n_train, n_val, _ = split_sizes(len(records), ratios)
    records = list(records)
    return records[:n_train], records[n_train:n_train + n_val], records[n_train + n_val:]


def stratified_subsample(records: Sequence[FlowRecord], n: int, seed: int) -> list[FlowRecord]:
    """Seeded per-label sample of ``n`` rows that keeps the original row order.

    Quotas follow the label proportions, rounded by largest remainder.
    """
    if n >= len(records):
        return list(records)
    by_label: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        by_label.setdefault(r.label, []).append(i)
    labels = sorted(by_label)
    exact = [n * len(by_label[c]) / len(records) for c in labels]
    quota = [math.floor(e) for e in exact]
    order = sorted(range(len(labels)), key=lambda j: (-(exact[j] - quota[j]), labels[j]))
    for j in order[: n - sum(quota)]:
        quota[j] += 1
    rng = Rng(seed, stream=11)
    chosen: list[int] = []
    for c, q in zip(labels, quota):
        idx = by_label[c]
        perm = rng.permutation(len(idx))[:q]
        chosen.extend(idx[p] for p in perm)
    return [records[i] for i in sorted(chosen)]


# --------------------------------------------------------------------------
# windowing


@dataclass
class WindowSet:
    sequences: np.ndarray  # (W, T, n)
    labels: np.ndarray  # (W,) label of each window's last row
    starts: np.ndarray  # (W,) index of the first row of each window
    T: int
    stride: int
    feature_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.sequences.shape[0]

    @property
    def n_features(self) -> int:
        return self.sequences.shape[2]


def window_count(rows: int, T: int, stride: int) -> int:
    return (rows - T) // stride + 1


def build_windows(table: FeatureTable, T: int = 10, stride: int = 1) -> WindowSet:
    if T < 1 or stride < 1:
        raise ConfigError("window length and stride must be >= 1")
    rows, n = table.matrix.shape
    if rows < T:
        raise SequenceTooShortError(f"{rows} rows cannot fill a window of {T}")
    # sliding_window_view puts the window axis last: (rows-T+1, n, T)
    views = sliding_window_view(table.matrix, T, axis=0)[::stride]
    sequences = np.ascontiguousarray(views.transpose(0, 2, 1))
    starts = np.arange(0, rows - T + 1, stride, dtype=np.int64)
    labels = table.labels[starts + T - 1].astype(np.int64)
    return WindowSet(sequences, labels, starts, T, stride, list(table.feature_names))


def save_windows(ws: WindowSet, path) -> None:
    meta = {"T": ws.T, "stride": ws.stride, "feature_names": ws.feature_names}
    arrays = {"sequences": ws.sequences, "labels": ws.labels, "starts": ws.starts}
    write_container(path, "windowset", WINDOWS_VERSION, meta, arrays)


def load_windows(path) -> WindowSet:
    meta, arrays, _ = read_container(path, "windowset", (WINDOWS_VERSION,))
    return WindowSet(
        arrays["sequences"], arrays["labels"], arrays["starts"], meta["T"], meta["stride"], meta["feature_names"]
    )
