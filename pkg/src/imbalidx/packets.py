"""Packet capture I/O: classic pcap files and a flat CSV interchange format.

Only classic pcap is handled (24-byte global header, magic 0xA1B2C3D4 in
either byte order, microsecond timestamps, Ethernet link type). Written
frames are minimal Ethernet+IPv4+TCP/UDP constructions padded out to the
record's wire length; the retransmission marker rides in the reserved bit
of the IPv4 flags field so a capture round-trips every field.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import BinaryIO, Iterable, List, Sequence


class Protocol(Enum):
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"


class BadMagic(ValueError):
    """File does not start with a classic pcap magic number."""


class Truncated(ValueError):
    """A header or record claims more bytes than the file holds."""


class UnsupportedLinkType(ValueError):
    """Capture uses a link type other than Ethernet."""


class ParseError(ValueError):
    """Malformed packet CSV; message carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# Minimum wire lengths accepted per protocol (IP + transport headers).
MIN_WIRE_LEN = {Protocol.TCP: 40, Protocol.UDP: 28, Protocol.OTHER: 0}

PCAP_MAGIC_LE = 0xA1B2C3D4
_ETH_HDR = 14
_IP_HDR = 20
# Written frames cannot shrink below their header stack even when the
# claimed wire length is smaller; orig_len still records the wire length.
_MIN_FRAME = {Protocol.TCP: 54, Protocol.UDP: 42, Protocol.OTHER: 34}
# IANA "experimentation" protocol number used for OTHER records.
_PROTO_NUM = {Protocol.TCP: 6, Protocol.UDP: 17, Protocol.OTHER: 253}


@dataclass(slots=True)
class PacketRecord:
    """One captured frame, reduced to the fields the flow features need."""

    timestamp: float
    src_addr: str
    dst_addr: str
    src_port: int
    dst_port: int
    protocol: Protocol
    wire_len: int
    is_retransmission: bool = False

    def __post_init__(self):
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError(f"timestamp must be finite and >= 0, got {self.timestamp!r}")
        for name in ("src_port", "dst_port"):
            p = getattr(self, name)
            if not 0 <= p <= 65535:
                raise ValueError(f"{name} out of range: {p!r}")
        if self.wire_len < MIN_WIRE_LEN[self.protocol]:
            raise ValueError(
                f"wire_len {self.wire_len} below minimum "
                f"{MIN_WIRE_LEN[self.protocol]} for {self.protocol.value}"
            )
        # OTHER frames carry no transport header, so ports cannot survive a
        # pcap round trip; forbid them up front.
        if self.protocol is Protocol.OTHER and (self.src_port or self.dst_port):
            raise ValueError("OTHER records must have zero ports")


def quantize_timestamp(t: float) -> float:
    """Snap a timestamp to the microsecond grid pcap and CSV can represent."""
    us = round(t * 1e6)
    return (us // 1_000_000) + (us % 1_000_000) / 1e6


def _split_timestamp(t: float) -> tuple[int, int]:
    sec = int(t)
    usec = round((t - sec) * 1e6)
    if usec >= 1_000_000:
        sec += 1
        usec -= 1_000_000
    return sec, usec


def _addr_bytes(addr: str) -> bytes:
    parts = addr.split(".")
    if len(parts) != 4:
        raise ValueError(f"not a dotted-quad IPv4 address: {addr!r}")
    try:
        quad = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"not a dotted-quad IPv4 address: {addr!r}") from None
    if any(not 0 <= q <= 255 for q in quad):
        raise ValueError(f"not a dotted-quad IPv4 address: {addr!r}")
    return bytes(quad)


def _addr_str(raw: bytes) -> str:
    return ".".join(str(b) for b in raw)


def _ip_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) | header[i + 1]
    total = (total & 0xFFFF) + (total >> 16)
    total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _build_frame(pkt: PacketRecord) -> bytes:
    """Reconstruct a minimal Ethernet+IPv4(+TCP/UDP) frame for one record."""
    frame_len = max(_MIN_FRAME[pkt.protocol], pkt.wire_len)
    ip_len = min(frame_len - _ETH_HDR, 0xFFFF)

    eth = b"\x02\x00\x00\x00\x00\x02" + b"\x02\x00\x00\x00\x00\x01" + b"\x08\x00"

    flags_frag = 0x8000 if pkt.is_retransmission else 0
    ip = struct.pack(
        ">BBHHHBBH4s4s",
        0x45,
        0,
        ip_len,
        0,
        flags_frag,
        64,
        _PROTO_NUM[pkt.protocol],
        0,
        _addr_bytes(pkt.src_addr),
        _addr_bytes(pkt.dst_addr),
    )
    ip = ip[:10] + struct.pack(">H", _ip_checksum(ip)) + ip[12:]

    if pkt.protocol is Protocol.TCP:
        l4 = struct.pack(
            ">HHIIBBHHH", pkt.src_port, pkt.dst_port, 0, 0, 0x50, 0x18, 8192, 0, 0
        )
    elif pkt.protocol is Protocol.UDP:
        udp_len = min(frame_len - _ETH_HDR - _IP_HDR, 0xFFFF)
        l4 = struct.pack(">HHHH", pkt.src_port, pkt.dst_port, udp_len, 0)
    else:
        l4 = b""

    frame = eth + ip + l4
    if len(frame) < frame_len:
        frame += b"\x00" * (frame_len - len(frame))
    return frame


def write_pcap(packets: Iterable[PacketRecord], path) -> None:
    """Write records to a little-endian classic pcap file.

    The whole sequence is validated before any bytes go out, so a bad
    record never leaves a partially written file behind. Round trips are
    exact for records whose timestamps sit on the microsecond grid (see
    quantize_timestamp).
    """
    packets = list(packets)
    for pkt in packets:
        if pkt.wire_len < MIN_WIRE_LEN[pkt.protocol]:
            raise ValueError(
                f"wire_len {pkt.wire_len} below minimum "
                f"{MIN_WIRE_LEN[pkt.protocol]} for {pkt.protocol.value}"
            )
        if pkt.wire_len > 0xFFFFFFFF:
            raise ValueError(f"wire_len {pkt.wire_len} exceeds the pcap field range")
        if _split_timestamp(pkt.timestamp)[0] > 0xFFFFFFFF:
            raise ValueError(f"timestamp {pkt.timestamp} exceeds the pcap epoch range")
    with open(path, "wb") as f:
        f.write(struct.pack("<IHHiIII", PCAP_MAGIC_LE, 2, 4, 0, 0, 65535, 1))
        for pkt in packets:
            sec, usec = _split_timestamp(pkt.timestamp)
            frame = _build_frame(pkt)
            f.write(struct.pack("<IIII", sec, usec, len(frame), pkt.wire_len))
            f.write(frame)


def _parse_frame(data: bytes, wire_len: int) -> tuple[str, str, int, int, Protocol, bool]:
    """Best-effort decode; anything that is not clean IPv4 TCP/UDP is OTHER."""
    if len(data) < _ETH_HDR + _IP_HDR or data[12:14] != b"\x08\x00":
        return "0.0.0.0", "0.0.0.0", 0, 0, Protocol.OTHER, False
    ver_ihl = data[_ETH_HDR]
    ihl = (ver_ihl & 0x0F) * 4
    if ver_ihl >> 4 != 4 or ihl < 20 or len(data) < _ETH_HDR + ihl:
        return "0.0.0.0", "0.0.0.0", 0, 0, Protocol.OTHER, False

    flags_frag = (data[20] << 8) | data[21]
    retx = bool(flags_frag & 0x8000)
    src = _addr_str(data[26:30])
    dst = _addr_str(data[30:34])
    proto_num = data[23]
    l4 = _ETH_HDR + ihl

    if proto_num == 6 and len(data) >= l4 + 4 and wire_len >= MIN_WIRE_LEN[Protocol.TCP]:
        sport, dport = struct.unpack_from(">HH", data, l4)
        return src, dst, sport, dport, Protocol.TCP, retx
    if proto_num == 17 and len(data) >= l4 + 4 and wire_len >= MIN_WIRE_LEN[Protocol.UDP]:
        sport, dport = struct.unpack_from(">HH", data, l4)
        return src, dst, sport, dport, Protocol.UDP, retx
    return src, dst, 0, 0, Protocol.OTHER, retx


def _read_records(f: BinaryIO, fmt: str) -> List[PacketRecord]:
    records: List[PacketRecord] = []
    while True:
        hdr = f.read(16)
        if not hdr:
            return records
        if len(hdr) < 16:
            raise Truncated("record header cut short")
        ts_sec, ts_usec, incl_len, orig_len = struct.unpack(fmt + "IIII", hdr)
        data = f.read(incl_len)
        if len(data) < incl_len:
            raise Truncated(f"record claims {incl_len} bytes, {len(data)} remain")
        src, dst, sport, dport, proto, retx = _parse_frame(data, orig_len)
        records.append(
            PacketRecord(
                timestamp=ts_sec + ts_usec / 1e6,
                src_addr=src,
                dst_addr=dst,
                src_port=sport,
                dst_port=dport,
                protocol=proto,
                wire_len=orig_len,
                is_retransmission=retx,
            )
        )


def read_pcap(path) -> List[PacketRecord]:
    """Read a classic pcap file into packet records, in file order.

    Raises BadMagic, UnsupportedLinkType, or Truncated; never anything else,
    no matter what bytes the file holds.
    """
    with open(path, "rb") as f:
        hdr = f.read(24)
        if len(hdr) < 24:
            raise BadMagic("file shorter than a pcap global header")
        (magic,) = struct.unpack("<I", hdr[:4])
        if magic == PCAP_MAGIC_LE:
            fmt = "<"
        else:
            (magic_be,) = struct.unpack(">I", hdr[:4])
            if magic_be == PCAP_MAGIC_LE:
                fmt = ">"
            else:
                raise BadMagic(f"magic 0x{magic:08X} is not a classic pcap file")
        _, _, _, _, _, linktype = struct.unpack(fmt + "HHiIII", hdr[4:])
        if linktype != 1:
            raise UnsupportedLinkType(f"link type {linktype}, only Ethernet (1) is handled")
        return _read_records(f, fmt)


CSV_HEADER = "timestamp,src_addr,src_port,dst_addr,dst_port,protocol,wire_len,is_retransmission"


def write_packet_csv(packets: Iterable[PacketRecord], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        for p in packets:
            f.write(
                f"{p.timestamp:.6f},{p.src_addr},{p.src_port},{p.dst_addr},"
                f"{p.dst_port},{p.protocol.value},{p.wire_len},{int(p.is_retransmission)}\n"
            )


def _parse_timestamp(text: str, line: int) -> float:
    # Reassembled as sec + usec/1e6, the same expression the pcap reader
    # uses, so a printed timestamp parses back to the identical float.
    sec_part, _, frac = text.partition(".")
    try:
        sec = int(sec_part)
        usec = int(frac.ljust(6, "0")) if frac else 0
    except ValueError:
        raise ParseError(line, f"bad timestamp {text!r}") from None
    if sec < 0 or len(frac) > 6:
        raise ParseError(line, f"bad timestamp {text!r}")
    return sec + usec / 1e6


def read_packet_csv(path) -> List[PacketRecord]:
    records: List[PacketRecord] = []
    with open(path, "r", newline="") as f:
        header = f.readline().rstrip("\r\n")
        if header != CSV_HEADER:
            raise ParseError(1, f"expected header {CSV_HEADER!r}")
        for line_no, raw in enumerate(f, start=2):
            raw = raw.rstrip("\r\n")
            if not raw:
                continue
            fields = raw.split(",")
            if len(fields) != 8:
                raise ParseError(line_no, f"expected 8 fields, got {len(fields)}")
            ts_s, src, sport_s, dst, dport_s, proto_s, wlen_s, retx_s = fields
            ts = _parse_timestamp(ts_s, line_no)
            try:
                proto = Protocol(proto_s)
            except ValueError:
                raise ParseError(line_no, f"unknown protocol {proto_s!r}") from None
            try:
                sport, dport, wlen = int(sport_s), int(dport_s), int(wlen_s)
            except ValueError:
                raise ParseError(line_no, "ports and wire_len must be integers") from None
            if retx_s not in ("0", "1"):
                raise ParseError(line_no, f"is_retransmission must be 0 or 1, got {retx_s!r}")
            for name, addr in (("src_addr", src), ("dst_addr", dst)):
                try:
                    _addr_bytes(addr)
                except ValueError:
                    raise ParseError(line_no, f"bad {name} {addr!r}") from None
            try:
                records.append(
                    PacketRecord(
                        timestamp=ts,
                        src_addr=src,
                        dst_addr=dst,
                        src_port=sport,
                        dst_port=dport,
                        protocol=proto,
                        wire_len=wlen,
                        is_retransmission=retx_s == "1",
                    )
                )
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
    return records
