"""Synthetic flows in the NF-BoT-IoT v1 schema, for tests and offline demos.

Rows are emitted as attack campaigns (runs of one attack type) with benign
flows interleaved at a fixed rate. A share of benign flows copies an attack
profile so the classes overlap and a perfect score is not attainable.
Nothing here is used when a real dataset file is supplied.
"""

from __future__ import annotations

import numpy as np

from .dataflow import FlowRecord

ATTACKS = ("DDoS", "DoS", "Reconnaissance", "Theft")
ATTACK_WEIGHTS = (0.52, 0.39, 0.085, 0.005)


def _benign(rng: np.random.Generator) -> tuple:
    proto = rng.choice([6, 17, 1], p=[0.6, 0.35, 0.05])
    l7 = float(rng.choice([7.0, 91.0, 5.0, 0.0, 92.0, 178.0], p=[0.3, 0.25, 0.2, 0.1, 0.1, 0.05]))
    in_bytes = int(rng.lognormal(6.5, 1.5))
    out_bytes = int(rng.lognormal(7.0, 2.0))
    in_pkts = max(1, in_bytes // int(rng.integers(60, 600)))
    out_pkts = max(1, out_bytes // int(rng.integers(60, 1400)))
    flags = int(rng.choice([27, 30, 31, 24, 26])) if proto == 6 else 0
    duration = 0 if rng.random() < 0.3 else int(rng.exponential(2000.0))
    return proto, l7, in_bytes, out_bytes, in_pkts, out_pkts, flags, duration


def _attack(rng: np.random.Generator, kind: str) -> tuple:
    if kind in ("DDoS", "DoS"):
        proto = int(rng.choice([17, 6], p=[0.6, 0.4]))
        in_pkts = int(rng.integers(1, 6))
        in_bytes = in_pkts * int(rng.integers(60, 100))
        out_bytes = 0 if rng.random() < 0.85 else int(rng.integers(40, 200))
        out_pkts = 0 if out_bytes == 0 else 1
        flags = int(rng.choice([2, 22])) if proto == 6 else 0
        duration = 0 if rng.random() < 0.9 else int(rng.integers(1, 4000))
        l7 = 0.0
    elif kind == "Reconnaissance":
        proto = 6 if rng.random() < 0.9 else 17
        in_pkts = int(rng.integers(1, 3))
        in_bytes = int(rng.integers(40, 120))
        out_bytes = 0 if rng.random() < 0.5 else 40
        out_pkts = 0 if out_bytes == 0 else 1
        flags = int(rng.choice([22, 20, 2])) if proto == 6 else 0
        duration = 0 if rng.random() < 0.8 else int(rng.integers(1, 1000))
        l7 = 0.0
    else:
        proto = 6
        in_bytes = int(rng.integers(300, 5000))
        out_bytes = int(rng.integers(1000, 100000))
        in_pkts = max(1, in_bytes // 200)
        out_pkts = max(1, out_bytes // 1400)
        flags = 27
        duration = int(rng.integers(100, 20000))
        l7 = float(rng.choice([7.0, 0.0]))
    return proto, l7, in_bytes, out_bytes, in_pkts, out_pkts, flags, duration


def generate_flows(
    n: int,
    seed: int = 0,
    benign_fraction: float = 0.0231,
    benign_overlap: float = 0.01,
    mean_campaign: float = 200.0,
) -> list[FlowRecord]:
    rng = np.random.default_rng(seed)
    out: list[FlowRecord] = []
    kind = str(rng.choice(ATTACKS, p=ATTACK_WEIGHTS))
    while len(out) < n:
        if rng.random() < 1.0 / mean_campaign:
            kind = str(rng.choice(ATTACKS, p=ATTACK_WEIGHTS))
        if rng.random() < benign_fraction:
            if rng.random() < benign_overlap:
                feats = _attack(rng, str(rng.choice(ATTACKS[:3])))
            else:
                feats = _benign(rng)
            src = f"192.168.100.{int(rng.integers(1, 30))}"
            dst = f"{int(rng.integers(1, 224))}.{int(rng.integers(0, 256))}.{int(rng.integers(0, 256))}.{int(rng.integers(1, 255))}"
            label, name = 0, "Benign"
        else:
            feats = _attack(rng, kind)
            src = f"192.168.100.{int(rng.integers(147, 151))}"
            dst = f"192.168.100.{int(rng.integers(3, 8))}"
            label, name = 1, kind
        proto, l7, ib, ob, ip, op, flags, dur = feats
        out.append(
            FlowRecord(
                src_addr=src,
                src_port=int(rng.integers(1024, 65536)),
                dst_addr=dst,
                dst_port=int(rng.choice([80, 443, 53, 8080, int(rng.integers(1, 65536))])),
                protocol=int(proto),
                l7_proto=float(l7),
                in_bytes=ib,
                out_bytes=ob,
                in_pkts=ip,
                out_pkts=op,
                tcp_flags=flags,
                flow_duration_ms=dur,
                label=label,
                attack_name=name,
            )
        )
    return out
