import statistics

import numpy as np
import pytest

from hybrid_dedup.oracle import compute_oracle, reuse_distances
from hybrid_dedup.trace import Op
from hybrid_dedup.workload import (
    TEMPLATES,
    Distribution,
    MixSpec,
    StreamProfile,
    WorkloadError,
    generate_stream,
    load_mix_config,
    locality_split,
    mix_streams,
    preset_mix,
)


def dup_ratio(records):
    o = compute_oracle(records)
    return o.duplicates / o.writes


def test_zero_duplicate_ratio_gives_distinct_fingerprints():
    prof = StreamProfile(duplicate_ratio=0.0, request_count=5000)
    recs = generate_stream(prof, seed=1)
    assert compute_oracle(recs).duplicates == 0


@pytest.mark.slow
def test_mail_template_calibration():
    prof = TEMPLATES["fiu-mail"]
    prof = StreamProfile(**{**prof.__dict__, "request_count": 110_000})
    recs = generate_stream(prof, seed=5)
    o = compute_oracle(recs)
    assert o.writes >= 100_000
    assert 0.89 <= o.duplicates / o.writes <= 0.93


@pytest.mark.parametrize("name", ["fiu-web", "fiu-home", "cloud-ftp", "cloud-ftp-media"])
def test_template_ratios_within_two_points(name):
    spec = preset_mix(name, scale=1.0, seed=2)
    r = dup_ratio(mix_streams(spec, 2))
    assert abs(r - TEMPLATES[name].duplicate_ratio) <= 0.02


def test_geometric_half_median_distance():
    prof = StreamProfile(duplicate_ratio=0.6, reuse=Distribution("geometric", 0.5),
                         run_length=Distribution("fixed", 1), write_ratio=1.0, request_count=20_000)
    recs = generate_stream(prof, seed=4)
    hist = reuse_distances([r.fingerprint for r in recs])
    expanded = sorted(d for d, c in hist.items() for _ in range(c))
    assert statistics.median(expanded) in (1, 2)


def test_reuse_distance_shapes_differ():
    # good-locality templates re-reference much closer than the weak ones
    def median_distance(name):
        spec = preset_mix(name, scale=0.5, seed=1)
        hist = reuse_distances([r.fingerprint for r in mix_streams(spec, 1) if r.is_write])
        return statistics.median(d for d, c in hist.items() for _ in range(c))

    assert median_distance("fiu-mail") * 2 < median_distance("cloud-ftp")


def test_determinism():
    spec = preset_mix("workload-A", scale=0.02, seed=9)
    assert mix_streams(spec, 9) == mix_streams(spec, 9)
    assert mix_streams(spec, 9) != mix_streams(spec, 10)


def test_single_profile_mix_is_identity():
    prof = StreamProfile(request_count=2000)
    assert mix_streams(MixSpec([prof]), 3) == generate_stream(prof, 3)


def test_mix_sorted_and_substreams_preserved():
    profs = [StreamProfile(request_count=1500, rate=50.0), StreamProfile(request_count=800, rate=20.0)]
    spec = MixSpec(profs)
    mixed = mix_streams(spec, 11)
    ts = [r.timestamp for r in mixed]
    assert ts == sorted(ts)
    for i, p in enumerate(profs):
        assert [r for r in mixed if r.stream == i] == generate_stream(p, 11, i)


def test_overlap_creates_shared_fingerprints_without_changing_structure():
    profs = [StreamProfile(duplicate_ratio=0.2, request_count=3000)] * 2
    overlap = np.array([[0, 0.4], [0.4, 0]])
    shared = mix_streams(MixSpec(profs, overlap), 5)
    fps = [{r.fingerprint for r in shared if r.is_write and r.stream == s} for s in (0, 1)]
    assert fps[0] & fps[1]
    plain = mix_streams(MixSpec(profs), 5)
    strip = lambda rs: [(r.timestamp, r.stream, r.op, r.lba) for r in rs]
    assert strip(shared) == strip(plain)


@pytest.mark.parametrize("name, ratio", [("workload-A", 3.0), ("workload-B", 1.0), ("workload-C", 1 / 3)])
def test_preset_locality_ratios(name, ratio):
    spec = preset_mix(name, scale=0.01, seed=0)
    l, nl = locality_split(spec)
    assert l / nl == pytest.approx(ratio, rel=0.05)


def test_preset_overlap_bounds():
    spec = preset_mix("workload-C", scale=0.01, seed=4)
    o = spec.overlap
    assert np.all(o >= 0) and np.all(o <= 0.4) and np.allclose(o, o.T)


@pytest.mark.parametrize(
    "make",
    [
        lambda: Distribution("geometric", 0.0),
        lambda: Distribution("geometric", float("nan")),
        lambda: Distribution("zipf", -1.0),
        lambda: Distribution("uniform", 0),
        lambda: Distribution("uniform", 2.5),
        lambda: Distribution("pareto", 1.0),
        lambda: StreamProfile(duplicate_ratio=1.5),
        lambda: StreamProfile(rate=0.0),
        lambda: MixSpec([]),
        lambda: MixSpec([StreamProfile()] * 2, np.array([[0, 0.5], [0.5, 0]])),
        lambda: MixSpec([StreamProfile()] * 2, np.array([[0, 0.1], [0.2, 0]])),
        lambda: preset_mix("workload-Z"),
    ],
)
def test_degenerate_inputs_rejected(make):
    with pytest.raises(WorkloadError):
        make()


def test_distribution_parse_and_mean():
    d = Distribution.parse("zipf:1.2:100")
    assert d.kind == "zipf" and d.cap == 100
    assert str(Distribution.parse("geometric:0.5")) == "geometric:0.5"
    assert Distribution("uniform", 9).mean() == 5.0
    with pytest.raises(WorkloadError):
        Distribution.parse("geometric")


def test_config_file(tmp_path):
    cfg = tmp_path / "mix.ini"
    cfg.write_text(
        "[mix]\nseed = 4\n\n"
        "[stream.0]\ntemplate = fiu-mail\nrequest_count = 500\n\n"
        "[stream.1]\nduplicate_ratio = 0.1\nrequest_count = 300\ntype = P\nreuse = uniform:1000\n\n"
        "[overlap]\n0-1 = 0.2\n"
    )
    spec, seed = load_mix_config(cfg)
    assert seed == 4
    assert spec.profiles[0].duplicate_ratio == TEMPLATES["fiu-mail"].duplicate_ratio
    assert spec.profiles[1].stream_type.value == "P"
    assert spec.overlap[1, 0] == 0.2
    recs = mix_streams(spec, seed)
    assert len(recs) == 800 and any(r.op is Op.READ for r in recs)


def test_config_errors(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[stream.0]\nbogus = 1\n")
    with pytest.raises(WorkloadError):
        load_mix_config(cfg)
    with pytest.raises(WorkloadError):
        load_mix_config(tmp_path / "missing.ini")
