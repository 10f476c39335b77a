"""Flow assembly and the 23 per-flow features, checked against hand
computations and an independent statistics-library oracle."""

import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imbalidx.flows import (
    ATTACK,
    FEATURE_CSV_HEADER,
    FEATURE_NAMES,
    NORMAL,
    EmptyFlow,
    FlowFeatures,
    FlowRecord,
    FlowKey,
    LabelParseError,
    LabelRule,
    UnorderedInput,
    assemble_flows,
    compute_features,
    features_from_packets,
    label_flows,
    read_features_csv,
    read_label_csv,
    to_arrays,
    write_features_csv,
    write_label_csv,
)
from imbalidx.packets import PacketRecord, Protocol


def pkt(ts, src, dst, sport=5000, dport=502, n=100, proto=Protocol.TCP, retx=False):
    return PacketRecord(
        timestamp=ts,
        src_addr=src,
        dst_addr=dst,
        src_port=sport,
        dst_port=dport,
        protocol=proto,
        wire_len=n,
        is_retransmission=retx,
    )


A, B = "10.0.0.1", "10.0.0.2"


def four_packet_flow():
    return [
        pkt(0.000, A, B, n=100),
        pkt(0.100, B, A, sport=502, dport=5000, n=50),
        pkt(0.200, A, B, n=100),
        pkt(0.350, A, B, n=100),
    ]


def test_worked_four_packet_example():
    flows = assemble_flows(four_packet_flow())
    assert len(flows) == 1
    f = compute_features(flows[0])
    assert f.spkts == 3
    assert f.dpkts == 1
    assert f.tpkts == 4
    assert f.sbytes == 300
    assert f.dbytes == 50
    assert f.tbytes == 350
    assert f.mean_dur == pytest.approx(0.350, abs=1e-12)
    assert f.sload == pytest.approx(8 * 300 / 0.35, rel=1e-12)
    assert f.dload == pytest.approx(8 * 50 / 0.35, rel=1e-12)
    assert f.tload == pytest.approx(8 * 350 / 0.35, rel=1e-12)
    assert f.srate == pytest.approx(3 / 0.35, rel=1e-12)
    assert f.trate == pytest.approx(4 / 0.35, rel=1e-12)
    assert f.s_intpkt == pytest.approx(175.0, abs=1e-9)   # mean(200 ms, 150 ms)
    assert f.src_jitter == pytest.approx(25.0, abs=1e-9)  # popstddev(200, 150)
    assert f.dst_jitter == 0.0
    assert f.d_intpkt == 0.0
    assert f.sport == 5000
    assert f.dport == 502
    assert f.ploss == 0.0


def test_single_packet_flow_conventions():
    f = compute_features(assemble_flows([pkt(3.5, A, B)])[0])
    assert f.mean_dur == 0.0
    assert f.spkts == 1 and f.dpkts == 0
    assert f.sload == f.dload == f.tload == 0.0
    assert f.srate == f.drate == f.trate == 0.0
    assert f.src_jitter == f.dst_jitter == 0.0
    assert f.s_intpkt == f.d_intpkt == 0.0
    assert f.ploss == 0.0


def test_feature_vector_has_23_fields():
    assert len(FEATURE_NAMES) == 23
    f = compute_features(assemble_flows([pkt(0.0, A, B)])[0])
    assert len(f.vector()) == 23


def test_idle_timeout_splits_flows():
    close = [pkt(0.0, A, B), pkt(0.1, A, B)]
    assert len(assemble_flows(close, idle_timeout=5.0)) == 1
    far_apart = [pkt(0.0, A, B), pkt(10.0, A, B)]
    assert len(assemble_flows(far_apart, idle_timeout=5.0)) == 2
    # The boundary gap does not split: strict inequality.
    edge = [pkt(0.0, A, B), pkt(5.0, A, B)]
    assert len(assemble_flows(edge, idle_timeout=5.0)) == 1


def test_reverse_direction_joins_the_same_flow():
    flows = assemble_flows(
        [pkt(0.0, A, B), pkt(0.1, B, A, sport=502, dport=5000)]
    )
    assert len(flows) == 1
    assert flows[0].initiator_addr == A
    assert isinstance(flows[0].key, FlowKey)


def test_unordered_input_rejected():
    with pytest.raises(UnorderedInput):
        assemble_flows([pkt(1.0, A, B), pkt(0.5, A, B)])


def test_empty_flow_rejected():
    bare = FlowRecord(
        key=FlowKey(A, 1, B, 2, Protocol.TCP),
        initiator_addr=A,
        initiator_port=1,
        responder_addr=B,
        responder_port=2,
    )
    with pytest.raises(EmptyFlow):
        compute_features(bare)


def test_retransmissions_become_loss_counts():
    flows = assemble_flows(
        [
            pkt(0.0, A, B, retx=True),
            pkt(0.1, B, A, sport=502, dport=5000, retx=True),
            pkt(0.2, A, B, retx=True),
            pkt(0.3, A, B),
        ]
    )
    f = compute_features(flows[0])
    assert f.sloss == 2
    assert f.dloss == 1
    assert f.tloss == 3
    assert f.ploss == pytest.approx(100.0 * 3 / 4)


flow_packets = st.lists(
    st.tuples(
        st.integers(0, 2_000_000),        # microsecond timestamp
        st.booleans(),                    # direction: True = A->B
        st.integers(40, 1500),            # wire bytes
        st.booleans(),                    # retransmission
    ),
    min_size=1,
    max_size=30,
)


def build_packets(raw, a=A, b=B):
    out = []
    for us, forward, size, retx in sorted(raw):
        src, dst = (a, b) if forward else (b, a)
        sport, dport = (5000, 502) if forward else (502, 5000)
        out.append(
            pkt(us / 1e6, src, dst, sport=sport, dport=dport, n=size, retx=retx)
        )
    return out


@given(flow_packets)
@settings(max_examples=200)
def test_additivity_and_oracle(raw):
    packets = build_packets(raw)
    for flow in assemble_flows(packets, idle_timeout=1e9):
        f = compute_features(flow)
        assert f.tpkts == f.spkts + f.dpkts
        assert f.tbytes == f.sbytes + f.dbytes
        assert f.tloss == f.sloss + f.dloss
        assert f.ploss == pytest.approx(100.0 * f.tloss / f.tpkts)
        # Independent recomputation of the directional statistics.
        fwd = flow.fwd_times
        if len(fwd) >= 2:
            gaps = [(t2 - t1) * 1e3 for t1, t2 in zip(fwd, fwd[1:])]
            assert f.s_intpkt == pytest.approx(statistics.fmean(gaps), abs=1e-9)
            assert f.src_jitter == pytest.approx(statistics.pstdev(gaps), abs=1e-9)
        else:
            assert f.s_intpkt == 0.0 and f.src_jitter == 0.0
        dur = flow.end_time - flow.start_time
        if dur > 0:
            assert f.sload == pytest.approx(8 * f.sbytes / dur, rel=1e-12)
            assert f.trate == pytest.approx(f.tpkts / dur, rel=1e-12)
        else:
            assert f.sload == 0.0 and f.trate == 0.0


@given(flow_packets)
@settings(max_examples=100)
def test_direction_symmetry_at_the_flow_level(raw):
    # Swapping the two direction roles of an assembled flow must swap every
    # S* feature with its D* partner and leave the t* features untouched.
    packets = build_packets(raw)
    for flow in assemble_flows(packets, idle_timeout=1e9):
        mirror = FlowRecord(
            key=flow.key,
            initiator_addr=flow.responder_addr,
            initiator_port=flow.responder_port,
            responder_addr=flow.initiator_addr,
            responder_port=flow.initiator_port,
            fwd_times=flow.bwd_times,
            bwd_times=flow.fwd_times,
            fwd_bytes=flow.bwd_bytes,
            bwd_bytes=flow.fwd_bytes,
            fwd_loss=flow.bwd_loss,
            bwd_loss=flow.fwd_loss,
            start_time=flow.start_time,
            end_time=flow.end_time,
        )
        f, g = compute_features(flow), compute_features(mirror)
        assert (f.tpkts, f.tbytes, f.tloss) == (g.tpkts, g.tbytes, g.tloss)
        assert f.tload == g.tload and f.trate == g.trate
        assert f.mean_dur == g.mean_dur and f.ploss == g.ploss
        assert (f.spkts, f.sbytes, f.sloss) == (g.dpkts, g.dbytes, g.dloss)
        assert (f.dpkts, f.dbytes, f.dloss) == (g.spkts, g.sbytes, g.sloss)
        assert (f.sport, f.dport) == (g.dport, g.sport)
        assert f.sload == g.dload and f.srate == g.drate
        assert f.src_jitter == g.dst_jitter and f.s_intpkt == g.d_intpkt


@given(flow_packets)
@settings(max_examples=100)
def test_endpoint_mirror_reanchors_the_initiator(raw):
    # Mirroring src/dst on every packet flips the first sender too, so the
    # initiator role follows the swap: directional feature values stay put
    # and only the port labels trade places.
    packets = build_packets(raw)
    mirrored = [
        pkt(
            p.timestamp, p.dst_addr, p.src_addr,
            sport=p.dst_port, dport=p.src_port,
            n=p.wire_len, retx=p.is_retransmission,
        )
        for p in packets
    ]
    orig = [compute_features(f) for f in assemble_flows(packets, idle_timeout=1e9)]
    swap = [compute_features(f) for f in assemble_flows(mirrored, idle_timeout=1e9)]
    assert len(orig) == len(swap)
    for f, g in zip(orig, swap):
        assert (f.sport, f.dport) == (g.dport, g.sport)
        assert (f.spkts, f.sbytes, f.sloss) == (g.spkts, g.sbytes, g.sloss)
        assert (f.tpkts, f.tbytes, f.tloss) == (g.tpkts, g.tbytes, g.tloss)
        assert f.src_jitter == g.src_jitter and f.s_intpkt == g.s_intpkt


@given(flow_packets, st.integers(1, 10**6))
@settings(max_examples=100)
def test_time_shift_invariance(raw, shift):
    packets = build_packets(raw)
    shifted = [
        pkt(
            p.timestamp + shift, p.src_addr, p.dst_addr,
            sport=p.src_port, dport=p.dst_port,
            n=p.wire_len, retx=p.is_retransmission,
        )
        for p in packets
    ]
    orig = [compute_features(f) for f in assemble_flows(packets, idle_timeout=1e9)]
    moved = [compute_features(f) for f in assemble_flows(shifted, idle_timeout=1e9)]
    for f, g in zip(orig, moved):
        for name in FEATURE_NAMES:
            assert getattr(f, name) == pytest.approx(
                getattr(g, name), rel=1e-6, abs=1e-5
            ), name


def test_labeling_by_window_overlap():
    feats = [compute_features(f) for f in assemble_flows(four_packet_flow())]
    inside = [LabelRule(A, B, 0.0, 1.0, ATTACK)]
    assert label_flows(feats, inside)[0].label == ATTACK
    disjoint = [LabelRule(A, B, 5.0, 6.0, ATTACK)]
    assert label_flows(feats, disjoint)[0].label == NORMAL
    assert label_flows(feats, [])[0].label == NORMAL
    # Address order in the rule does not matter.
    reversed_pair = [LabelRule(B, A, 0.0, 1.0, ATTACK)]
    assert label_flows(feats, reversed_pair)[0].label == ATTACK
    # Touching windows count as overlap (closed intervals).
    touching = [LabelRule(A, B, 0.35, 2.0, ATTACK)]
    assert label_flows(feats, touching)[0].label == ATTACK
    other_pair = [LabelRule(A, "10.9.9.9", 0.0, 1.0, ATTACK)]
    assert label_flows(feats, other_pair)[0].label == NORMAL


def test_label_csv_round_trip(tmp_path):
    rules = [
        LabelRule("10.0.0.66", "10.0.0.20", 50.0, 61.25, ATTACK),
        LabelRule("10.0.0.66", "10.0.0.20", 70.5, 80.0, ATTACK),
    ]
    path = tmp_path / "labels.csv"
    write_label_csv(rules, path)
    assert read_label_csv(path) == rules


@pytest.mark.parametrize(
    "row",
    [
        "1.1.1.1,2.2.2.2,1.0,0.5,1",     # window ends before it starts
        "1.1.1.1,2.2.2.2,0.0,1.0,2",     # label out of range
        "1.1.1.1,2.2.2.2,x,1.0,1",       # non-numeric
        "1.1.1.1,2.2.2.2,0.0,1.0",       # missing field
    ],
)
def test_label_csv_rejects_bad_rows(tmp_path, row):
    path = tmp_path / "bad.csv"
    path.write_text("src_addr,dst_addr,start_time,end_time,label\n" + row + "\n")
    with pytest.raises(LabelParseError) as err:
        read_label_csv(path)
    assert err.value.line == 2


def test_features_csv_round_trip(tmp_path):
    packets = four_packet_flow() + [
        pkt(9.0, A, "10.0.0.7", sport=1100, dport=502, n=70, retx=True),
    ]
    feats = features_from_packets(packets, [LabelRule(A, B, 0.0, 1.0, ATTACK)])
    path = tmp_path / "features.csv"
    write_features_csv(feats, path)
    assert path.read_text().splitlines()[0] == FEATURE_CSV_HEADER
    back = read_features_csv(path)
    assert len(back) == len(feats)
    for f, g in zip(feats, back):
        assert g.label == f.label
        for name in FEATURE_NAMES:
            want = getattr(f, name)
            got = getattr(g, name)
            if isinstance(want, int):
                assert got == want, name
            else:
                assert got == pytest.approx(want, abs=5e-7), name


def test_features_csv_drops_endpoint_metadata(tmp_path):
    feats = features_from_packets(four_packet_flow())
    path = tmp_path / "f.csv"
    write_features_csv(feats, path)
    back = read_features_csv(path)
    assert back[0].src_addr == ""
    with pytest.raises(ValueError):
        label_flows(back, [LabelRule(A, B, 0.0, 1.0, ATTACK)])


def test_to_arrays_shape_and_dtype():
    feats = features_from_packets(four_packet_flow())
    x, y = to_arrays(feats)
    assert x.shape == (1, 23)
    assert x.dtype == np.float64
    assert y.tolist() == [NORMAL]
    empty_x, empty_y = to_arrays([])
    assert empty_x.shape == (0, 23)
    assert empty_y.shape == (0,)


def test_extraction_pipeline_label_counts():
    packets = []
    for i in range(10):
        base = i * 20.0
        src = "10.0.0.66" if i < 3 else A
        packets.append(pkt(base, src, B, sport=2000 + i))
        packets.append(pkt(base + 0.05, B, src, sport=502, dport=2000 + i))
    rules = [LabelRule("10.0.0.66", B, 0.0, 45.0, ATTACK)]
    feats = features_from_packets(packets, rules)
    assert len(feats) == 10
    assert sum(f.label == ATTACK for f in feats) == 3


def test_flow_key_is_direction_independent():
    flows_ab = assemble_flows([pkt(0.0, A, B)])
    flows_ba = assemble_flows([pkt(0.0, B, A, sport=502, dport=5000)])
    key = flows_ab[0].key
    assert key == flows_ba[0].key
    assert (key.addr_a, key.port_a) <= (key.addr_b, key.port_b)
