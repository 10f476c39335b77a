"""Capture I/O: byte-level pcap checks, round trips, and reader fuzzing."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imbalidx.packets import (
    CSV_HEADER,
    MIN_WIRE_LEN,
    BadMagic,
    PacketRecord,
    ParseError,
    Protocol,
    Truncated,
    UnsupportedLinkType,
    quantize_timestamp,
    read_packet_csv,
    read_pcap,
    write_packet_csv,
    write_pcap,
)

GLOBAL_HEADER = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)


octet = st.integers(0, 255)
addresses = st.builds(lambda a, b, c, d: f"{a}.{b}.{c}.{d}", octet, octet, octet, octet)
ports = st.integers(1, 65535)
# Timestamps snapped to the microsecond grid, spanning small offsets up to
# the top of the 32-bit pcap epoch.
timestamps = st.one_of(
    st.integers(0, 10**6).map(lambda us: us / 1e6),
    st.integers(0, 0xFFFFFFFF * 10**6 + 999_999).map(
        lambda us: (us // 10**6) + (us % 10**6) / 1e6
    ),
)


@st.composite
def packet_records(draw):
    proto = draw(st.sampled_from(list(Protocol)))
    if proto is Protocol.OTHER:
        sport = dport = 0
    else:
        sport, dport = draw(ports), draw(ports)
    return PacketRecord(
        timestamp=draw(timestamps),
        src_addr=draw(addresses),
        dst_addr=draw(addresses),
        src_port=sport,
        dst_port=dport,
        protocol=proto,
        wire_len=draw(st.integers(MIN_WIRE_LEN[proto], 3000)),
        is_retransmission=draw(st.booleans()),
    )


def test_empty_pcap_is_just_the_global_header(tmp_path):
    path = tmp_path / "empty.pcap"
    write_pcap([], path)
    assert path.read_bytes() == GLOBAL_HEADER
    assert read_pcap(path) == []


def test_single_tcp_packet_round_trip(tmp_path):
    pkt = PacketRecord(
        timestamp=1.25,
        src_addr="10.0.0.1",
        dst_addr="10.0.0.2",
        src_port=1234,
        dst_port=502,
        protocol=Protocol.TCP,
        wire_len=60,
        is_retransmission=True,
    )
    path = tmp_path / "one.pcap"
    write_pcap([pkt], path)
    assert read_pcap(path) == [pkt]


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bad.pcap"
    path.write_bytes(struct.pack("<I", 0xDEADBEEF) + GLOBAL_HEADER[4:])
    with pytest.raises(BadMagic):
        read_pcap(path)


def test_short_file_rejected(tmp_path):
    path = tmp_path / "short.pcap"
    path.write_bytes(GLOBAL_HEADER[:10])
    with pytest.raises(BadMagic):
        read_pcap(path)


def test_non_ethernet_link_type_rejected(tmp_path):
    path = tmp_path / "linktype.pcap"
    path.write_bytes(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 101))
    with pytest.raises(UnsupportedLinkType):
        read_pcap(path)


def test_truncated_record_rejected(tmp_path):
    path = tmp_path / "trunc.pcap"
    path.write_bytes(GLOBAL_HEADER + struct.pack("<IIII", 0, 0, 500, 500) + b"\x00" * 20)
    with pytest.raises(Truncated):
        read_pcap(path)


def test_byte_swapped_magic_accepted(tmp_path):
    pkt = PacketRecord(0.5, "1.2.3.4", "5.6.7.8", 80, 8080, Protocol.TCP, 64)
    le = tmp_path / "le.pcap"
    write_pcap([pkt], le)
    body = le.read_bytes()
    # Swap every header field to big-endian by hand; frame bytes stay put.
    g = struct.unpack("<IHHiIII", body[:24])
    rec = struct.unpack("<IIII", body[24:40])
    be = struct.pack(">IHHiIII", *g) + struct.pack(">IIII", *rec) + body[40:]
    swapped = tmp_path / "be.pcap"
    swapped.write_bytes(be)
    assert read_pcap(swapped) == [pkt]


def test_writer_rejects_corrupted_wire_len_before_writing(tmp_path):
    pkt = PacketRecord(0.0, "1.1.1.1", "2.2.2.2", 1, 2, Protocol.TCP, 40)
    pkt.wire_len = 12  # below the TCP minimum, bypassing construction checks
    path = tmp_path / "never.pcap"
    with pytest.raises(ValueError):
        write_pcap([pkt], path)
    assert not path.exists()


def test_writer_rejects_timestamp_past_the_epoch_range(tmp_path):
    pkt = PacketRecord(2.0**33, "1.1.1.1", "2.2.2.2", 1, 2, Protocol.TCP, 40)
    with pytest.raises(ValueError):
        write_pcap([pkt], tmp_path / "never.pcap")


def test_record_validation():
    with pytest.raises(ValueError):
        PacketRecord(-1.0, "1.1.1.1", "2.2.2.2", 1, 2, Protocol.TCP, 40)
    with pytest.raises(ValueError):
        PacketRecord(0.0, "1.1.1.1", "2.2.2.2", 70000, 2, Protocol.TCP, 40)
    with pytest.raises(ValueError):
        PacketRecord(0.0, "1.1.1.1", "2.2.2.2", 1, 2, Protocol.TCP, 39)
    with pytest.raises(ValueError):
        PacketRecord(0.0, "1.1.1.1", "2.2.2.2", 1, 2, Protocol.UDP, 27)
    with pytest.raises(ValueError):
        PacketRecord(0.0, "1.1.1.1", "2.2.2.2", 5, 0, Protocol.OTHER, 100)


def test_quantize_timestamp():
    # The grid value is reconstructed as sec + usec/1e6, the exact
    # expression both readers use, so equality is against that form.
    assert quantize_timestamp(1.2345678) == 1 + 234568 / 1e6
    assert quantize_timestamp(0.0) == 0.0
    assert quantize_timestamp(3.0000004) == 3.0
    # Quantizing is idempotent on the grid.
    t = quantize_timestamp(977.123456)
    assert quantize_timestamp(t) == t


@given(timestamps)
def test_quantize_is_idempotent(t):
    q = quantize_timestamp(t)
    assert quantize_timestamp(q) == q
    assert abs(q - t) <= 5e-7 + 1e-9 * max(t, 1.0)


@given(st.lists(packet_records(), max_size=40))
@settings(max_examples=150, deadline=None)
def test_pcap_round_trip(tmp_path_factory, pkts):
    path = tmp_path_factory.mktemp("rt") / "seq.pcap"
    write_pcap(pkts, path)
    assert read_pcap(path) == pkts


@given(st.lists(packet_records(), max_size=40))
@settings(max_examples=150, deadline=None)
def test_csv_round_trip(tmp_path_factory, pkts):
    path = tmp_path_factory.mktemp("rt") / "seq.csv"
    write_packet_csv(pkts, path)
    assert read_packet_csv(path) == pkts


def test_csv_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    write_packet_csv([], path)
    assert path.read_text() == CSV_HEADER + "\n"
    assert read_packet_csv(path) == []


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("time,stuff\n")
    with pytest.raises(ParseError) as err:
        read_packet_csv(path)
    assert err.value.line == 1


@pytest.mark.parametrize(
    "row,fragment",
    [
        ("1.0,1.1.1.1,70000,2.2.2.2,2,TCP,60,0", "out of range"),
        ("1.0,1.1.1.1,1,2.2.2.2,2,ICMP,60,0", "protocol"),
        ("1.0,1.1.1.1,1,2.2.2.2,2,TCP,60,2", "is_retransmission"),
        ("1.0,1.1.1.1,1,2.2.2.2,2,TCP,60", "8 fields"),
        ("x,1.1.1.1,1,2.2.2.2,2,TCP,60,0", "timestamp"),
        ("1.0,1.1.1,1,2.2.2.2,2,TCP,60,0", "src_addr"),
        ("-1.0,1.1.1.1,1,2.2.2.2,2,TCP,60,0", "timestamp"),
    ],
)
def test_csv_bad_rows_carry_line_numbers(tmp_path, row, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(CSV_HEADER + "\n" + row + "\n")
    with pytest.raises(ParseError) as err:
        read_packet_csv(path)
    assert err.value.line == 2
    assert fragment in str(err.value)


@given(st.binary(max_size=400))
@settings(max_examples=300, deadline=None)
def test_fuzzed_bytes_never_crash_the_reader(tmp_path_factory, blob):
    path = tmp_path_factory.mktemp("fuzz") / "bytes.pcap"
    path.write_bytes(blob)
    try:
        read_pcap(path)
    except (BadMagic, Truncated, UnsupportedLinkType):
        pass


@given(st.binary(max_size=300))
@settings(max_examples=300, deadline=None)
def test_fuzzed_record_bytes_never_crash_the_reader(tmp_path_factory, blob):
    # Force a valid global header so the fuzz lands on the record parser.
    path = tmp_path_factory.mktemp("fuzz") / "records.pcap"
    path.write_bytes(GLOBAL_HEADER + blob)
    try:
        read_pcap(path)
    except (BadMagic, Truncated, UnsupportedLinkType):
        pass
