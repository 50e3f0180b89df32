import hashlib

import pytest
from hypothesis import given, settings, strategies as st

from hybrid_dedup.trace import (
    Op,
    StreamType,
    TraceError,
    TraceHeader,
    TraceRecord,
    load_trace,
    parse_record,
    write_trace,
)
from hybrid_dedup.workload import mix_streams, preset_mix


def fp(tag):
    return hashlib.md5(str(tag).encode()).digest()


def test_parse_small_file(tmp_path):
    p = tmp_path / "t.trace"
    p.write_text(
        "# M=2,bs=4096,n=3\n"
        f"0,0,W,100,{fp(1).hex()}\n"
        "15,1,R,7,\n"
        f"15,0,W,101,{fp(2).hex()}\n"
    )
    header, recs = load_trace(p)
    assert header.stream_count == 2
    assert len(recs) == 3
    assert recs[1].op is Op.READ and recs[1].fingerprint is None
    assert recs[2].fingerprint == fp(2)


def test_write_without_fingerprint_reports_line(tmp_path):
    p = tmp_path / "t.trace"
    p.write_text("# M=1,bs=4096,n=2\n0,0,R,1,\n1,0,W,2,\n")
    with pytest.raises(TraceError, match="line 3"):
        load_trace(p)


def test_empty_body(tmp_path):
    p = tmp_path / "t.trace"
    p.write_text("# M=1,bs=4096,n=0\n")
    header, recs = load_trace(p)
    assert recs == [] and header.record_count == 0


@pytest.mark.parametrize(
    "body, message",
    [
        ("5,0,R,1,\n4,0,R,2,\n", "backwards"),
        ("0,3,R,1,\n", "outside"),
        ("0,0,X,1,\n", "unknown op"),
        ("0,0,W,1,zz\n", "hex"),
        ("0,0,R,1\n", "5 fields"),
        (f"0,0,R,1,{fp(0).hex()}\n", "fingerprint"),
    ],
)
def test_malformed_lines(tmp_path, body, message):
    p = tmp_path / "t.trace"
    n = body.count("\n")
    p.write_text(f"# M=2,bs=4096,n={n}\n" + body)
    with pytest.raises(TraceError, match=message):
        load_trace(p)


def test_header_validation():
    with pytest.raises(TraceError):
        TraceHeader.from_line("# M=1,bs=512,n=0")
    with pytest.raises(TraceError):
        TraceHeader.from_line("M=1,n=0")
    with pytest.raises(TraceError, match="types"):
        TraceHeader.from_line("# M=2,n=0,types=U")
    h = TraceHeader.from_line("# M=2,bs=4096,n=0,seed=7,types=U:P")
    assert h.generator_seed == 7 and h.type_of(1) is StreamType.P and h.type_of(5) is StreamType.U


def test_record_count_mismatch(tmp_path):
    p = tmp_path / "t.trace"
    p.write_text("# M=1,bs=4096,n=2\n0,0,R,1,\n")
    with pytest.raises(TraceError, match="n=2"):
        load_trace(p)


def test_round_trip_generated(tmp_path):
    spec = preset_mix("workload-B", scale=0.01, seed=3)
    recs = mix_streams(spec, 3)[:1000]
    p = tmp_path / "g.trace"
    write_trace(recs, p, len(spec.profiles), 3, spec.stream_types)
    header, back = load_trace(p)
    assert back == recs
    assert header.generator_seed == 3
    assert header.stream_types == spec.stream_types
    # interleaving of the merged streams is kept
    assert [r.stream for r in back] == [r.stream for r in recs]


def test_unsorted_input_rejected(tmp_path):
    recs = [TraceRecord(5, 0, Op.READ, 1), TraceRecord(4, 0, Op.READ, 2)]
    with pytest.raises(TraceError):
        write_trace(recs, tmp_path / "x.trace")


def test_record_invariants():
    with pytest.raises(TraceError):
        TraceRecord(0, 0, Op.WRITE, 1)
    with pytest.raises(TraceError):
        TraceRecord(0, 0, Op.READ, 1, fp(1))
    with pytest.raises(TraceError):
        TraceRecord(0, 0, Op.WRITE, 1, b"short")
    with pytest.raises(TraceError):
        parse_record("0,0,R,-1,", 2, 1)


records_strategy = st.lists(
    st.tuples(
        st.integers(0, 1000),
        st.integers(0, 3),
        st.booleans(),
        st.integers(0, 2**64 - 1),
        st.binary(min_size=16, max_size=16),
    ),
    max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(records_strategy)
def test_round_trip_property(tmp_path_factory, raw):
    gaps = sorted(r[0] for r in raw)
    recs = [
        TraceRecord(t, s, Op.WRITE if w else Op.READ, lba, f if w else None)
        for t, (_, s, w, lba, f) in zip(gaps, raw)
    ]
    p = tmp_path_factory.mktemp("rt") / "p.trace"
    write_trace(recs, p, stream_count=4)
    _, back = load_trace(p)
    assert back == recs
    assert all((r.fingerprint is not None) == r.is_write for r in back)
