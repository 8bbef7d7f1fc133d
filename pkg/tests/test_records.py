import io
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pflacg.cg import run_cg
from pflacg.problem import ProblemSpec, gen_experiment
from pflacg.records import (
    COLUMNS,
    Budget,
    RunRecord,
    TraceRecorder,
    read_records,
    records_to_csv,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
small_int = st.integers(0, 2**40)

record = st.builds(
    RunRecord,
    st.sampled_from(["afw", "pflacg", "acc"]),
    st.text("abc-_0123456789", min_size=1, max_size=12),
    small_int,
    st.floats(0, 1e6),
    finite,
    finite,
    small_int,
    st.integers(0, 1),
    small_int,
    small_int,
    small_int,
)


@settings(max_examples=150, deadline=None)
@given(st.lists(record, max_size=8))
def test_csv_round_trip_is_exact(rows):
    assert read_records(io.StringIO(records_to_csv(rows))) == rows


def test_header_matches_columns():
    assert records_to_csv([]).strip() == ",".join(COLUMNS)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "foo,bar\n",
        ",".join(COLUMNS) + "\nafw,r,1,0.0,1.0\n",
        ",".join(COLUMNS) + "\nafw,r,one,0.0,1.0,1.0,1,0,0,1,1\n",
    ],
)
def test_malformed_input_raises(text):
    with pytest.raises(ValueError):
        read_records(io.StringIO(text))


def test_blank_lines_are_skipped():
    text = ",".join(COLUMNS) + "\n\nafw,r,1,0.0,1.0,2.0,1,0,0,1,1\n"
    assert len(read_records(io.StringIO(text))) == 1


def test_recorder_elapsed_never_decreases():
    class Backwards:
        def __init__(self):
            self.t = 10.0

        def elapsed(self):
            self.t -= 1.0
            return self.t

    rec = TraceRecorder("afw", "r", Backwards())
    for i in range(3):
        rec.add(i, 0.0, 0.0, 1, i, i)
    assert [r.elapsed_s for r in rec] == [9.0, 9.0, 9.0]


def test_run_trace_ordering():
    exp = gen_experiment(ProblemSpec("simplex", 40, 4.0, 0))
    res = run_cg(exp.objective, exp.region, exp.x0, 1e-8)
    rows = list(res.trace)
    assert all(b.iteration > a.iteration for a, b in zip(rows, rows[1:]))
    assert all(b.elapsed_s >= a.elapsed_s for a, b in zip(rows, rows[1:]))


def test_budget_clock():
    clock = Budget(3, None).start()
    assert not clock.exhausted(2) and clock.exhausted(3)
    timed = Budget(None, 0.001).start()
    time.sleep(0.005)
    assert timed.exhausted(0)
    assert not Budget(None, None).start().exhausted(10**9)
