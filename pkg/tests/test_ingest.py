import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellstrings.core import CoincidenceSeries, DataFormatError, InsufficientDataError, ParameterError
from bellstrings.ingest import (
    Channel,
    TimeTagStreams,
    pair_coincidences,
    parse_duration,
    parse_timetags,
    synthesize_timetags,
    visibility_report,
    write_timetags,
)
from bellstrings.simulate import generate_iid, wqm_generate

codes_st = st.lists(st.integers(0, 3), min_size=1, max_size=200).map(lambda v: np.array(v, dtype=np.uint8))


def streams_from(events):
    buckets = {c: [] for c in Channel}
    for t, ch in events:
        buckets[Channel(ch)].append(t)
    return TimeTagStreams({c: np.array(sorted(v), np.int64) for c, v in buckets.items()})


class TestRoundTrip:
    @given(codes_st, st.integers(0, 2**32))
    def test_synth_then_pair(self, codes, seed):
        s = CoincidenceSeries(codes)
        streams = synthesize_timetags(s, pair_rate=5e4, t_w=2e-9, seed=seed)
        back, report = pair_coincidences(streams, 2e-9)
        assert np.array_equal(back.codes, s.codes)
        assert report.n_coincidences == s.m

    def test_file_round_trip(self, tmp_path):
        s = wqm_generate(2000, 0.0, 0.3, eta=0.5, seed=1)
        streams = synthesize_timetags(s, seed=2)
        path = tmp_path / "tags.txt"
        write_timetags(streams, path)
        parsed = parse_timetags(path)
        assert parsed.metadata == streams.metadata
        assert parsed.counts() == streams.counts()
        back, _ = pair_coincidences(parsed, parse_duration("2ns"))
        assert np.array_equal(back.codes, s.codes)
        assert back.meta["generator"] == "ingested"

    def test_dark_counts_add_accidentals_only(self):
        s = generate_iid(20_000, 0.05, 3)
        clean = pair_coincidences(synthesize_timetags(s, seed=4), 2e-9)[0]
        noisy_streams = synthesize_timetags(s, seed=4, dark_rate=2e3)
        noisy, report = pair_coincidences(noisy_streams, 2e-9, r_dark=2e3)
        assert noisy.m >= clean.m
        assert report.accidental_rate == pytest.approx(2e3**2 * 2e-9)
        assert report.accidental_odd_rate == pytest.approx(0.5 * report.accidental_rate)

    def test_jitter_bound(self):
        with pytest.raises(ParameterError):
            synthesize_timetags(generate_iid(10, 0.1), t_w=2e-9, jitter=1e-9)


class TestPairing:
    def test_nearest_unused(self):
        st_ = streams_from([(1000, "A+"), (1400, "B-"), (1900, "B+"), (5000, "A-"), (9000, "B+")])
        s, _ = pair_coincidences(st_, 1e-9)
        assert s.codes.tolist() == [1]
        s, _ = pair_coincidences(st_, 5e-9)
        assert s.codes.tolist() == [1, 2]

    def test_tie_goes_to_earlier(self):
        st_ = streams_from([(600, "B+"), (1000, "A+"), (1400, "B-")])
        s, _ = pair_coincidences(st_, 1e-9)
        assert s.codes.tolist() == [0]

    def test_each_event_once(self):
        st_ = streams_from([(1000, "A+"), (1100, "A-"), (1050, "B+")])
        s, _ = pair_coincidences(st_, 1e-9)
        assert s.m == 1

    def test_rates(self):
        st_ = streams_from([(0, "A+"), (10, "B+"), (10**12, "A-"), (10**12 + 5, "B-")])
        _, report = pair_coincidences(st_, 1e-9)
        assert report.duration_s == pytest.approx(1.0, rel=1e-9)
        assert report.r_coinc == pytest.approx(2.0, rel=1e-9)

    def test_bad_window(self):
        with pytest.raises(ParameterError):
            pair_coincidences(TimeTagStreams(), 0.0)


class TestParsing:
    @pytest.mark.parametrize("body,line", [
        ("# run=1\n100\tA+\n200 B+\n", 3),
        ("100\tA+\nabc\tB+\n", 2),
        ("100\tA+\n200\tC+\n", 2),
        ("300\tA+\n200\tB+\n", 2),
    ])
    def test_errors_name_line(self, tmp_path, body, line):
        path = tmp_path / "bad.txt"
        path.write_text(body)
        with pytest.raises(DataFormatError) as exc:
            parse_timetags(path)
        assert exc.value.line == line

    def test_metadata_and_names(self, tmp_path):
        path = tmp_path / "ok.txt"
        path.write_text("# duration_ps=2000\n# comment without equals\n\n100\tAPlus\n150\tB-\n")
        st_ = parse_timetags(path)
        assert st_.metadata == {"duration_ps": "2000"}
        assert st_.span_ps() == 2000 and st_.total == 2

    @pytest.mark.parametrize("text,value", [("2ns", 2e-9), ("10 ns", 1e-8), ("1.5us", 1.5e-6), ("3e-9", 3e-9), ("40ps", 4e-11)])
    def test_durations(self, text, value):
        assert parse_duration(text) == pytest.approx(value)

    def test_bad_duration(self):
        with pytest.raises(ParameterError):
            parse_duration("two ns")


class TestVisibility:
    def test_example(self):
        # n_min / (n_max + n_min) = 0.0297
        r = visibility_report(9703, 297)
        assert r.s_real == pytest.approx(2.66, abs=0.005)
        assert r.epsilon == pytest.approx(2 * 0.0297, abs=1e-4)

    def test_error_propagation(self):
        n_max, n_min = 9000.0, 1000.0
        r = visibility_report(n_max, n_min)
        v = lambda a, b: 2 * math.sqrt(2) * (a - b) / (a + b)
        h = 1e-3
        ds_a = (v(n_max + h, n_min) - v(n_max - h, n_min)) / (2 * h)
        ds_b = (v(n_max, n_min + h) - v(n_max, n_min - h)) / (2 * h)
        assert r.s_err == pytest.approx(math.sqrt(ds_a**2 * n_max + ds_b**2 * n_min), rel=1e-6)

    def test_sums_and_errors(self):
        assert visibility_report([5000, 4703], [150, 147]).n_max == 9703
        with pytest.raises(InsufficientDataError):
            visibility_report(0, 0)
