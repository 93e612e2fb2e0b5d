import math

from hypothesis import given
from hypothesis import strategies as st

from perkpz.records import COLUMNS, ResultRecord, dumps, loads

finite = st.floats(allow_nan=False, allow_infinity=False)
maybe = st.one_of(st.none(), finite)


@st.composite
def record(draw):
    return ResultRecord(
        draw(st.sampled_from(["cdf", "mc", "tasep"])),
        {"x": draw(st.lists(finite, max_size=3)), "case": draw(st.integers(1, 3))},
        value_re=draw(maybe), value_im=draw(maybe), imag_residual=draw(maybe), quad_proxy=draw(maybe),
        trunc_proxy=draw(maybe), se=draw(maybe), n_paths=draw(st.one_of(st.none(), st.integers(0, 10**9))),
        seed=draw(st.one_of(st.none(), st.integers(0, 2**63))), wall_time=draw(maybe),
        details={"note": draw(st.text(max_size=10))},
    )


@given(st.lists(record(), min_size=1, max_size=4), st.sampled_from(["csv", "json"]))
def test_round_trip(recs, fmt):
    text = dumps(recs, fmt)
    back = loads(text, fmt)
    assert back == [r.normalized() for r in recs]
    assert dumps(back, fmt) == text


def test_csv_header_and_empty_fields():
    text = dumps([ResultRecord("cdf", {"beta": [0.5]}, value_re=0.25)], "csv")
    header, row = text.splitlines()
    assert header.split(",") == list(COLUMNS)
    assert loads(text, "csv")[0].se is None


def test_float_repr_exact():
    v = math.pi / 3
    back = loads(dumps([ResultRecord("cdf", {}, value_re=v)], "json"), "json")[0]
    assert back.value_re == v
