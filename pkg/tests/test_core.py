import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellstrings.core import (
    SQRT2_2,
    CoincidenceSeries,
    Convention,
    DataFormatError,
    ExperimentParams,
    FeasibilityWindow,
    Gate,
    Limit,
    Outcome,
    Parity,
    ParameterError,
    StringsDistribution,
    code_of,
    degrees_to_phi,
    dumps_series,
    loads_series,
    odd_mask,
    parity_of,
    phi_to_degrees,
    read_series,
    write_series,
)

codes_st = st.lists(st.integers(0, 3), max_size=300).map(lambda v: np.array(v, dtype=np.uint8))


class TestOutcome:
    @pytest.mark.parametrize("a,b,parity", [
        (Gate.Plus, Gate.Plus, Parity.Even), (Gate.Plus, Gate.Minus, Parity.Odd),
        (Gate.Minus, Gate.Plus, Parity.Odd), (Gate.Minus, Gate.Minus, Parity.Even),
    ])
    def test_parity_table(self, a, b, parity):
        assert parity_of(a, b) is parity
        assert Outcome(a, b).parity is parity

    @pytest.mark.parametrize("code", range(4))
    def test_code_round_trip(self, code):
        o = Outcome.from_code(code)
        assert o.code == code == code_of(o.gate_a, o.gate_b)
        assert (o.parity is Parity.Odd) == bool(odd_mask(np.array([code], np.uint8))[0])

    def test_tokens(self):
        assert Outcome(Gate.Plus, Gate.Minus).token() == "A+ B-"


class TestSeries:
    def test_immutable(self):
        s = CoincidenceSeries(np.array([0, 1, 2], np.uint8), {"generator": "iid"})
        with pytest.raises(ValueError):
            s.codes[0] = 3
        meta = {"params": {"m": 3}}
        s2 = CoincidenceSeries(np.zeros(3, np.uint8), meta)
        meta["params"]["m"] = 99
        assert s2.meta["params"]["m"] == 3

    def test_rejects_bad_codes(self):
        with pytest.raises(ParameterError):
            CoincidenceSeries(np.array([0, 4], np.uint8))

    def test_empty(self):
        s = CoincidenceSeries(np.zeros(0, np.uint8))
        assert s.m == 0 and len(s) == 0
        assert loads_series(dumps_series(s)) == s

    @given(codes_st)
    def test_round_trip_bit_exact(self, codes):
        s = CoincidenceSeries(codes, {"generator": "iid", "seed": 5, "params": {"phi": 0.1}})
        blob = dumps_series(s)
        back = loads_series(blob)
        assert back == s and back.meta == s.meta
        assert dumps_series(back) == blob

    @given(codes_st)
    def test_outcome_view_matches_codes(self, codes):
        s = CoincidenceSeries(codes)
        assert [o.code for o in s] == codes.tolist()
        assert s.odd_count == sum(1 for o in s if o.parity is Parity.Odd)

    def test_file_round_trip(self, tmp_path):
        s = CoincidenceSeries(np.array([3, 2, 1, 0], np.uint8), {"generator": "wqm"})
        write_series(s, tmp_path / "s.txt")
        text = (tmp_path / "s.txt").read_text()
        assert text.splitlines()[1:] == ["A- B-", "A- B+", "A+ B-", "A+ B+"]
        assert read_series(tmp_path / "s.txt") == s

    def test_format_errors_carry_line_numbers(self):
        good = dumps_series(CoincidenceSeries(np.array([0, 1, 2], np.uint8)))
        lines = good.split(b"\n")
        lines[2] = b"A+ C-"
        with pytest.raises(DataFormatError) as exc:
            loads_series(b"\n".join(lines))
        assert exc.value.line == 3
        with pytest.raises(DataFormatError):
            loads_series(b"no header\n")
        header = json.loads(good.split(b"\n")[0][1:])
        header["m"] = 7
        bad = ("#" + json.dumps(header)).encode() + b"\n" + b"\n".join(good.split(b"\n")[1:])
        with pytest.raises(DataFormatError):
            loads_series(bad)

    def test_parity_flip(self):
        s = CoincidenceSeries(np.array([0, 1, 2, 3], np.uint8))
        f = s.parity_flipped()
        assert np.array_equal(f.odd, ~s.odd)


class TestParams:
    def test_defaults_and_epsilon(self):
        p = ExperimentParams(alpha=0.0, beta=0.0)
        assert p.epsilon == pytest.approx(0.0, abs=1e-12)
        assert p.eta == (1.0,) * 4
        p = ExperimentParams(alpha=0.0, beta=0.1, s_real=2.66, eta=0.1)
        assert p.epsilon == pytest.approx(1 - 2.66 / (2 * math.sqrt(2)))
        assert p.eta_mean == pytest.approx(0.1)

    @pytest.mark.parametrize("kw", [
        {"s_real": 3.0}, {"s_real": -0.1}, {"eta": 1.2}, {"eta": (0.5, 0.5, 0.5)},
        {"r_dark": -1.0}, {"r_coinc": 0.0}, {"t_w": 0.0}, {"alpha": math.nan},
    ])
    def test_validation(self, kw):
        base = {"alpha": 0.0, "beta": 0.0}
        with pytest.raises(ParameterError):
            ExperimentParams(**{**base, **kw})

    def test_tsirelson_tolerance(self):
        p = ExperimentParams(alpha=0.0, beta=0.0, s_real=SQRT2_2 * (1 + 1e-13))
        assert 0.0 <= p.epsilon <= 1e-12

    def test_degrees(self):
        p = ExperimentParams.from_degrees(0.0, 45.0)
        assert p.beta == pytest.approx(math.pi / 4)

    @given(st.floats(0.0, 90.0))
    def test_angle_phi_round_trip(self, deg):
        assert phi_to_degrees(degrees_to_phi(deg)) == pytest.approx(deg, abs=1e-6)


class TestStringsDistribution:
    def test_counts_invariant(self):
        with pytest.raises(ParameterError):
            StringsDistribution(np.array([-1]), Convention.EvenRuns, 10)
        with pytest.raises(ParameterError):
            # 3 strings of length 4 need 15 elements
            StringsDistribution(np.array([0, 0, 0, 0, 3]), Convention.EvenRuns, 10)

    def test_csv_round_trip(self):
        d = StringsDistribution(np.array([5, 3, 0, 1]), Convention.OddRuns, 40, trailing_run=2)
        back = StringsDistribution.from_csv(d.to_csv())
        assert np.array_equal(back.counts, d.counts) and back.meta() == d.meta()
        f = StringsDistribution(np.array([0.1, 1 / 3]), Convention.EvenRuns, 10, None, 2)
        back = StringsDistribution.from_csv(f.to_csv())
        assert back.counts.tolist() == f.counts.tolist() and back.k_min == 2

    def test_add(self):
        a = StringsDistribution(np.array([1, 2]), Convention.EvenRuns, 10, 1)
        b = StringsDistribution(np.array([1, 0, 1]), Convention.EvenRuns, 10, 0)
        c = a + b
        assert c.counts.tolist() == [2, 2, 1] and c.total_elements == 20
        assert c.max_length == 2 and c.count(7) == 0


class TestWindowType:
    def test_exists(self):
        w = FeasibilityWindow(0.05, 0.25, Limit.Entanglement, 10.0, 0.005, 1e-9)
        assert w.exists and w.angle_high_deg == pytest.approx(30.0)
        assert not FeasibilityWindow(0.3, None, Limit.Entanglement, 10.0, 0.03, 1e-9).exists
        assert not FeasibilityWindow(0.3, 0.2, Limit.DarkCounts, 10.0, 0.0, 0.03).exists
