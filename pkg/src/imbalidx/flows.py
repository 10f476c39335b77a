"""Bidirectional flow assembly and per-flow traffic features.

Packets sharing a canonical 5-tuple form one flow until an idle gap longer
than the timeout closes it. The endpoint that sent the flow's first packet
is the source for every directional feature.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np

from .packets import PacketRecord, Protocol

NORMAL = 0
ATTACK = 1

DEFAULT_IDLE_TIMEOUT = 5.0


class UnorderedInput(ValueError):
    """Packet stream is not sorted by timestamp."""


class EmptyFlow(ValueError):
    """Feature computation needs at least one packet."""


class FlowKey(NamedTuple):
    """Canonical 5-tuple: the lexicographically smaller endpoint comes first,
    so a packet and its reverse map to the same key."""

    addr_a: str
    port_a: int
    addr_b: str
    port_b: int
    protocol: Protocol


def _canonical(src: str, sport: int, dst: str, dport: int, proto: Protocol):
    if (src, sport) <= (dst, dport):
        return (src, sport, dst, dport, proto)
    return (dst, dport, src, sport, proto)


@dataclass(slots=True)
class FlowRecord:
    """Accumulated per-direction state for one flow. fwd is the initiator
    direction."""

    key: FlowKey
    initiator_addr: str
    initiator_port: int
    responder_addr: str
    responder_port: int
    fwd_times: List[float] = field(default_factory=list)
    bwd_times: List[float] = field(default_factory=list)
    fwd_bytes: int = 0
    bwd_bytes: int = 0
    fwd_loss: int = 0
    bwd_loss: int = 0
    start_time: float = 0.0
    end_time: float = 0.0

    @property
    def packet_count(self) -> int:
        return len(self.fwd_times) + len(self.bwd_times)


def assemble_flows(
    packets: Iterable[PacketRecord], idle_timeout: float = DEFAULT_IDLE_TIMEOUT
) -> List[FlowRecord]:
    """Fold a time-ordered packet stream into flows.

    A gap longer than idle_timeout between consecutive packets of the same
    key closes the flow; the next packet opens a fresh one. Output order is
    flow creation order.
    """
    flows: List[FlowRecord] = []
    open_flows: Dict[tuple, FlowRecord] = {}
    last_ts = -math.inf
    for pkt in packets:
        if pkt.timestamp < last_ts:
            raise UnorderedInput(
                f"packet at {pkt.timestamp} follows one at {last_ts}"
            )
        last_ts = pkt.timestamp
        key = _canonical(
            pkt.src_addr, pkt.src_port, pkt.dst_addr, pkt.dst_port, pkt.protocol
        )
        flow = open_flows.get(key)
        if flow is None or pkt.timestamp - flow.end_time > idle_timeout:
            flow = FlowRecord(
                key=FlowKey(*key),
                initiator_addr=pkt.src_addr,
                initiator_port=pkt.src_port,
                responder_addr=pkt.dst_addr,
                responder_port=pkt.dst_port,
                start_time=pkt.timestamp,
                end_time=pkt.timestamp,
            )
            open_flows[key] = flow
            flows.append(flow)
        forward = (
            pkt.src_addr == flow.initiator_addr and pkt.src_port == flow.initiator_port
        )
        if forward:
            flow.fwd_times.append(pkt.timestamp)
            flow.fwd_bytes += pkt.wire_len
            flow.fwd_loss += pkt.is_retransmission
        else:
            flow.bwd_times.append(pkt.timestamp)
            flow.bwd_bytes += pkt.wire_len
            flow.bwd_loss += pkt.is_retransmission
        flow.end_time = pkt.timestamp
    return flows


FEATURE_NAMES = (
    "mean_dur",
    "sport",
    "dport",
    "spkts",
    "dpkts",
    "tpkts",
    "sbytes",
    "dbytes",
    "tbytes",
    "sload",
    "dload",
    "tload",
    "srate",
    "drate",
    "trate",
    "sloss",
    "dloss",
    "tloss",
    "ploss",
    "src_jitter",
    "dst_jitter",
    "s_intpkt",
    "d_intpkt",
)

FEATURE_CSV_HEADER = ",".join(FEATURE_NAMES) + ",label"

# Feature CSV prints these as bare integers, the rest as 6-decimal floats.
_INT_FEATURES = frozenset(
    ("sport", "dport", "spkts", "dpkts", "tpkts", "sbytes", "dbytes", "tbytes")
)


@dataclass(slots=True)
class FlowFeatures:
    """The 23 per-flow features plus a ground-truth label.

    Endpoint and time-window metadata ride along for labelling but are not
    part of the feature vector and do not survive the feature CSV.
    """

    mean_dur: float
    sport: int
    dport: int
    spkts: int
    dpkts: int
    tpkts: int
    sbytes: int
    dbytes: int
    tbytes: int
    sload: float
    dload: float
    tload: float
    srate: float
    drate: float
    trate: float
    sloss: int
    dloss: int
    tloss: int
    ploss: float
    src_jitter: float
    dst_jitter: float
    s_intpkt: float
    d_intpkt: float
    label: int = NORMAL
    src_addr: str = ""
    dst_addr: str = ""
    start_time: float = 0.0
    end_time: float = 0.0

    def vector(self) -> List[float]:
        return [float(getattr(self, name)) for name in FEATURE_NAMES]


def _gap_stats_ms(times: Sequence[float]) -> Tuple[float, float]:
    """Mean and population stddev of consecutive gaps, in milliseconds."""
    n = len(times)
    if n < 2:
        return 0.0, 0.0
    gaps = [(times[i + 1] - times[i]) * 1000.0 for i in range(n - 1)]
    m = sum(gaps) / len(gaps)
    var = sum((g - m) ** 2 for g in gaps) / len(gaps)
    return m, math.sqrt(var)


def compute_features(flow: FlowRecord) -> FlowFeatures:
    """Summarize one flow. Zero-duration flows get zero rates and loads."""
    if flow.packet_count == 0:
        raise EmptyFlow("flow has no packets")
    dur = flow.end_time - flow.start_time
    spkts = len(flow.fwd_times)
    dpkts = len(flow.bwd_times)
    tpkts = spkts + dpkts
    sbytes = flow.fwd_bytes
    dbytes = flow.bwd_bytes
    tbytes = sbytes + dbytes
    if dur > 0:
        sload = 8.0 * sbytes / dur
        dload = 8.0 * dbytes / dur
        tload = 8.0 * tbytes / dur
        srate = spkts / dur
        drate = dpkts / dur
        trate = tpkts / dur
    else:
        sload = dload = tload = srate = drate = trate = 0.0
    sloss = flow.fwd_loss
    dloss = flow.bwd_loss
    tloss = sloss + dloss
    s_intpkt, src_jitter = _gap_stats_ms(flow.fwd_times)
    d_intpkt, dst_jitter = _gap_stats_ms(flow.bwd_times)
    return FlowFeatures(
        mean_dur=dur,
        sport=flow.initiator_port,
        dport=flow.responder_port,
        spkts=spkts,
        dpkts=dpkts,
        tpkts=tpkts,
        sbytes=sbytes,
        dbytes=dbytes,
        tbytes=tbytes,
        sload=sload,
        dload=dload,
        tload=tload,
        srate=srate,
        drate=drate,
        trate=trate,
        sloss=sloss,
        dloss=dloss,
        tloss=tloss,
        ploss=100.0 * tloss / tpkts,
        src_jitter=src_jitter,
        dst_jitter=dst_jitter,
        s_intpkt=s_intpkt,
        d_intpkt=d_intpkt,
        src_addr=flow.initiator_addr,
        dst_addr=flow.responder_addr,
        start_time=flow.start_time,
        end_time=flow.end_time,
    )


class LabelParseError(ValueError):
    """Malformed label CSV; message carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class LabelRule(NamedTuple):
    """One ground-truth window: the address pair is an attack conversation
    during [start_time, end_time]."""

    src_addr: str
    dst_addr: str
    start_time: float
    end_time: float
    label: int


LABEL_CSV_HEADER = "src_addr,dst_addr,start_time,end_time,label"


def write_label_csv(rules: Iterable[LabelRule], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(LABEL_CSV_HEADER + "\n")
        for r in rules:
            f.write(
                f"{r.src_addr},{r.dst_addr},{r.start_time:.6f},{r.end_time:.6f},{r.label}\n"
            )


def read_label_csv(path) -> List[LabelRule]:
    rules: List[LabelRule] = []
    with open(path, "r", newline="") as f:
        header = f.readline().rstrip("\r\n")
        if header != LABEL_CSV_HEADER:
            raise LabelParseError(1, f"expected header {LABEL_CSV_HEADER!r}")
        for line_no, raw in enumerate(f, start=2):
            raw = raw.rstrip("\r\n")
            if not raw:
                continue
            fields = raw.split(",")
            if len(fields) != 5:
                raise LabelParseError(line_no, f"expected 5 fields, got {len(fields)}")
            src, dst, start_s, end_s, label_s = fields
            try:
                start, end = float(start_s), float(end_s)
                label = int(label_s)
            except ValueError:
                raise LabelParseError(line_no, f"bad numeric field in {raw!r}") from None
            if end < start:
                raise LabelParseError(line_no, "window ends before it starts")
            if label not in (NORMAL, ATTACK):
                raise LabelParseError(line_no, f"label must be 0 or 1, got {label_s!r}")
            rules.append(LabelRule(src, dst, start, end, label))
    return rules


class _WindowIndex:
    """Per address pair: windows sorted by start with a prefix max of ends,
    so overlap queries are O(log n)."""

    def __init__(self, windows: List[Tuple[float, float]]):
        windows.sort()
        self.starts = [w[0] for w in windows]
        self.max_end = []
        top = -math.inf
        for _, end in windows:
            top = max(top, end)
            self.max_end.append(top)

    def overlaps(self, start: float, end: float) -> bool:
        hi = bisect_right(self.starts, end)
        return hi > 0 and self.max_end[hi - 1] >= start


def label_flows(
    features: Sequence[FlowFeatures], rules: Sequence[LabelRule]
) -> List[FlowFeatures]:
    """Label each flow Attack iff an attack rule matches its address pair
    and overlaps its time window; everything else is Normal."""
    by_pair: Dict[tuple, List[Tuple[float, float]]] = {}
    for r in rules:
        if r.label == ATTACK:
            pair = tuple(sorted((r.src_addr, r.dst_addr)))
            by_pair.setdefault(pair, []).append((r.start_time, r.end_time))
    index = {pair: _WindowIndex(ws) for pair, ws in by_pair.items()}

    out: List[FlowFeatures] = []
    for feat in features:
        if not feat.src_addr or not feat.dst_addr:
            raise ValueError("flow features lack endpoint metadata; label before CSV export")
        idx = index.get(tuple(sorted((feat.src_addr, feat.dst_addr))))
        hit = idx is not None and idx.overlaps(feat.start_time, feat.end_time)
        out.append(replace(feat, label=ATTACK if hit else NORMAL))
    return out


def features_from_packets(
    packets: Iterable[PacketRecord],
    rules: Sequence[LabelRule] = (),
    idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
) -> List[FlowFeatures]:
    """assemble -> compute -> label, the standard extraction pipeline."""
    feats = [compute_features(f) for f in assemble_flows(packets, idle_timeout)]
    return label_flows(feats, rules) if rules else feats


def write_features_csv(features: Iterable[FlowFeatures], path) -> None:
    """Feature matrix CSV: floats with 6 decimals, counts as integers,
    label 0/1 last."""
    with open(path, "w", newline="") as f:
        f.write(FEATURE_CSV_HEADER + "\n")
        for feat in features:
            parts = []
            for name in FEATURE_NAMES:
                v = getattr(feat, name)
                parts.append(str(int(v)) if name in _INT_FEATURES else f"{float(v):.6f}")
            parts.append(str(int(feat.label)))
            f.write(",".join(parts) + "\n")


def read_features_csv(path) -> List[FlowFeatures]:
    feats: List[FlowFeatures] = []
    n_fields = len(FEATURE_NAMES) + 1
    with open(path, "r", newline="") as f:
        header = f.readline().rstrip("\r\n")
        if header != FEATURE_CSV_HEADER:
            raise LabelParseError(1, f"expected header {FEATURE_CSV_HEADER!r}")
        for line_no, raw in enumerate(f, start=2):
            raw = raw.rstrip("\r\n")
            if not raw:
                continue
            fields = raw.split(",")
            if len(fields) != n_fields:
                raise LabelParseError(
                    line_no, f"expected {n_fields} fields, got {len(fields)}"
                )
            try:
                values = [float(v) for v in fields[:-1]]
                label = int(fields[-1])
            except ValueError:
                raise LabelParseError(line_no, f"bad numeric field in {raw!r}") from None
            if label not in (NORMAL, ATTACK):
                raise LabelParseError(line_no, f"label must be 0 or 1, got {fields[-1]!r}")
            kwargs = {}
            for name, v in zip(FEATURE_NAMES, values):
                kwargs[name] = int(v) if name in _INT_FEATURES else v
            for name in ("sloss", "dloss", "tloss"):
                kwargs[name] = int(kwargs[name])
            feats.append(FlowFeatures(label=label, **kwargs))
    return feats


def to_arrays(features: Sequence[FlowFeatures]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack features into an (n, 23) float matrix and an (n,) label vector."""
    x = np.array([feat.vector() for feat in features], dtype=np.float64)
    y = np.array([feat.label for feat in features], dtype=np.int64)
    if x.size == 0:
        x = x.reshape(0, len(FEATURE_NAMES))
    return x, y
