from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from exceptions import BadArity, UnknownProtocol, ZeroQubits
from metrics import (
    CITED_ROWS,
    GHZ_LIKE_LABEL,
    PROPOSED_LABELS,
    account,
    comparison_table,
    decoy_vs_split,
    eta1,
    eta2,
    multi_step_eta2_bound,
    order_disclosure_bits,
    recount_from_transcript,
)
from models import OrderCost, Protocol, SessionConfig
from protocols import run_session


def test_eta_examples():
    assert eta1(2, 5) == Fraction(2, 5)
    assert eta2(2, 5, 3) == Fraction(1, 4)
    assert eta2(3, 6, 0) == eta1(3, 6) == Fraction(1, 2)


def test_eta_rejects_empty_and_negative():
    with pytest.raises(ZeroQubits):
        eta1(1, 0)
    with pytest.raises(ZeroQubits):
        eta2(1, 0, 0)
    with pytest.raises(ValueError):
        eta2(1, 2, -1)


@pytest.mark.parametrize("protocol, c, q, b, e1, e2", [
    (Protocol.DSQC1, 2, 5, 3, Fraction(2, 5), Fraction(1, 4)),
    (Protocol.DSQC2, 3, 6, 3, Fraction(1, 2), Fraction(1, 3)),
    (Protocol.QSDC, 3, 6, 0, Fraction(1, 2), Fraction(1, 2)),
    (Protocol.QKD, 3, 6, 3, Fraction(1, 2), Fraction(1, 3)),
])
def test_account_single_unit(protocol, c, q, b, e1, e2):
    report = account(protocol, 1)
    assert (report.c, report.q, report.b) == (c, q, b)
    assert (report.eta1, report.eta2) == (e1, e2)


def test_account_percentages():
    report = account("dsqc1", 1)
    assert (report.eta1_percent, report.eta2_percent) == (40.0, 25.0)
    report = account(Protocol.DSQC2, 1)
    assert (report.eta1_percent, report.eta2_percent) == (50.0, 33.33)


@given(st.integers(min_value=1, max_value=500), st.sampled_from(list(Protocol)))
def test_account_is_independent_of_n(n, protocol):
    one, many = account(protocol, 1), account(protocol, n)
    assert (many.eta1, many.eta2) == (one.eta1, one.eta2)
    assert many.eta1 >= many.eta2


def test_account_qkd_on_dsqc1_carrier():
    report = account(Protocol.QKD, 3, qkd_carrier=Protocol.DSQC1)
    assert (report.eta1, report.eta2) == (Fraction(2, 5), Fraction(1, 4))
    assert "DSQC1 carrier" in report.convention_note


def test_account_notes_explain_b():
    assert "home announcements" in account(Protocol.DSQC1, 2).convention_note
    assert "b = 0" in account(Protocol.QSDC, 2).convention_note


def test_account_rejects_bad_input():
    with pytest.raises(UnknownProtocol):
        account("bb84", 1)
    with pytest.raises(ZeroQubits):
        account(Protocol.DSQC2, 0)


@pytest.mark.parametrize("units, bits", [(1, 0), (2, 1), (3, 3), (4, 5), (10, 22)])
def test_information_theoretic_order_cost(units, bits):
    assert order_disclosure_bits(3 * units, units, OrderCost.INFORMATION_THEORETIC) == bits
    assert order_disclosure_bits(3 * units, units, OrderCost.PER_TRAVEL_QUBIT) == 3 * units


def test_information_theoretic_cost_raises_eta2():
    cheap = account(Protocol.DSQC2, 16, OrderCost.INFORMATION_THEORETIC)
    assert cheap.b == 45  # ceil(log2 16!)
    assert cheap.eta2 > account(Protocol.DSQC2, 16).eta2
    assert "log2" in cheap.convention_note


@pytest.mark.parametrize("protocol", list(Protocol))
@pytest.mark.parametrize("n", [1, 4, 7, 16])
def test_recount_matches_formula(protocol, n):
    message = None if protocol == Protocol.QKD else "1" * (n * (2 if protocol == Protocol.DSQC1 else 3))
    result = run_session(SessionConfig(protocol=protocol, n=n, message=message, seed=n))
    counted, formula = recount_from_transcript(result.transcript), account(protocol, n)
    assert (counted.c, counted.q, counted.b) == (formula.c, formula.q, formula.b)
    assert (counted.eta1, counted.eta2) == (formula.eta1, formula.eta2)


def test_recount_information_theoretic():
    result = run_session(SessionConfig(protocol=Protocol.DSQC1, n=4, message="01" * 4, seed=2))
    counted = recount_from_transcript(result.transcript, OrderCost.INFORMATION_THEORETIC)
    assert counted.b == 5 + 4
    assert counted.eta2 == account(Protocol.DSQC1, 4, OrderCost.INFORMATION_THEORETIC).eta2


def test_recount_needs_session_start():
    result = run_session(SessionConfig(protocol=Protocol.QSDC, n=1, message="000"))
    result.transcript.events.pop(0)
    with pytest.raises(ValueError):
        recount_from_transcript(result.transcript)


def test_multi_step_bound():
    for n in range(2, 101):
        bound = multi_step_eta2_bound(n)
        assert bound == Fraction(n - 1, 2 * n - 1)
        assert bound < Fraction(1, 2)
    assert multi_step_eta2_bound(3) == Fraction(2, 5)
    with pytest.raises(BadArity):
        multi_step_eta2_bound(1)


def test_decoy_vs_split():
    assert decoy_vs_split(1, 3) == (Fraction(1), Fraction(3, 4))
    assert decoy_vs_split(2, 4) == (Fraction(2, 3), Fraction(1, 2))
    with pytest.raises(ValueError):
        decoy_vs_split(0, 1)


def test_comparison_table():
    rows = comparison_table()
    assert len(rows) == 9
    assert [r.protocol_label for r in rows[:6]] == [label for label, *_ in CITED_ROWS]
    assert not any(r.computed for r in rows[:6])

    proposed = {r.protocol_label: r for r in rows[6:]}
    assert set(proposed) == set(PROPOSED_LABELS.values())
    dsqc1 = proposed[PROPOSED_LABELS[Protocol.DSQC1]]
    dsqc2 = proposed[PROPOSED_LABELS[Protocol.DSQC2]]
    qsdc = proposed[PROPOSED_LABELS[Protocol.QSDC]]
    assert (dsqc1.eta1_percent, dsqc1.eta2_percent) == (40.0, 25.0)
    assert (dsqc2.eta1_percent, dsqc2.eta2_percent) == (50.0, 33.33)
    assert (qsdc.eta1_percent, qsdc.eta2_percent) == (50.0, 50.0)
    assert all(r.computed and r.state_label == GHZ_LIKE_LABEL for r in rows[6:])


def test_published_rows_kept_verbatim():
    rows = {r.protocol_label: r for r in comparison_table()}
    assert rows["Hwang-Hwang-Tsai"].eta1_percent == 26.67
    assert rows["Tsai et al."].eta2 == Fraction(1, 3)
    assert rows["Cao-Song"].eta2_percent == 14.29
