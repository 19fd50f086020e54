import json

import numpy as np
import pytest

from codebook import (
    DSQC1_DECODE_TABLE,
    MeasurementStep,
    build_example_states,
    codebooks_equivalent,
    decode,
    load_channel_spec,
    load_channel_spec_file,
    make_codebook,
    measure_with_plan,
    validate_codebook,
)
from exceptions import InconsistentOutcome, ParseError, ValidationFailed
from models import Actor
from quantum_core import (
    BELL_STATES,
    GHZ_LIKE_BASIS,
    IDENTITY,
    KET_0,
    KET_1,
    PAULI_X,
    bell_product,
    computational_basis,
    computational_state,
    equal_up_to_global_phase,
    inner_product,
    kron_ops,
    superpose,
    tensor,
)


def _bell_home(terms):
    """Σ c |bit⟩|bell⟩ with the single qubit first"""
    return superpose((c, tensor(KET_1 if bit == "1" else KET_0, BELL_STATES[bell])) for c, bit, bell in terms)


# ------------------------------------------------------------------
# DSQC1
# ------------------------------------------------------------------

def test_dsqc1_encoded_states(dsqc1_codebook):
    states = dsqc1_codebook.encoded_states
    assert equal_up_to_global_phase(states["00"], _bell_home([(1, "0", "psi+"), (1, "1", "phi+")]))
    assert equal_up_to_global_phase(states["01"], dsqc1_codebook.initial_state)
    assert equal_up_to_global_phase(states["11"], _bell_home([(1, "0", "psi-"), (1, "1", "phi-")]))


def test_dsqc1_derived_table_matches_stored(dsqc1_codebook):
    assert dsqc1_codebook.plan.table == DSQC1_DECODE_TABLE
    assert len(dsqc1_codebook.plan.table) == 8
    assert not dsqc1_codebook.plan.ambiguous


@pytest.mark.parametrize("outcome, expected", [
    (("0", "phi+"), "01"),
    (("1", "psi-"), "10"),
    (("1", "phi+"), "00"),
    (("1", "psi+"), "01"),
])
def test_dsqc1_decode(dsqc1_codebook, outcome, expected):
    assert decode(dsqc1_codebook, list(outcome)) == expected


def test_dsqc1_split(dsqc1_codebook):
    assert dsqc1_codebook.home_qubits == (0,)
    assert dsqc1_codebook.travel_qubits == (1, 2)
    assert dsqc1_codebook.message_bits == 2


# ------------------------------------------------------------------
# DSQC2
# ------------------------------------------------------------------

def test_dsqc2_states_follow_ghz_like_rows(dsqc2_codebook):
    for bits, state in dsqc2_codebook.encoded_states.items():
        row = GHZ_LIKE_BASIS.vectors[int(bits, 2)]
        assert abs(inner_product(state, row)) > 1 - 1e-12, bits


# Rows 011 and 111 as listed in the expanded-state form, which exchanges the dense-coding table's rows
LISTED_ROW_011 = bell_product([(1, "psi-", "0"), (-1, "psi+", "1")])
LISTED_ROW_111 = bell_product([(1, "phi-", "0"), (-1, "phi+", "1")])


@pytest.mark.parametrize("bits, table_terms, listed_row", [
    ("011", [(1, "phi+", "1"), (-1, "phi-", "0")], LISTED_ROW_011),
    ("111", [(1, "psi+", "1"), (-1, "psi-", "0")], LISTED_ROW_111),
])
def test_dsqc2_rows_011_and_111_follow_the_table(dsqc2_codebook, bits, table_terms, listed_row):
    state = dsqc2_codebook.encoded_states[bits]
    assert equal_up_to_global_phase(state, bell_product(table_terms))
    assert abs(inner_product(state, listed_row)) < 1e-12


def test_listed_rows_011_and_111_are_exchanged(dsqc2_codebook):
    assert equal_up_to_global_phase(LISTED_ROW_011, dsqc2_codebook.encoded_states["111"])
    assert equal_up_to_global_phase(LISTED_ROW_111, dsqc2_codebook.encoded_states["011"])


def test_dsqc2_known_rows(dsqc2_codebook):
    entry = dsqc2_codebook.entries["101"]
    assert np.allclose(entry.op.matrix, kron_ops(PAULI_X, IDENTITY).matrix)
    expected = bell_product([(1, "phi+", "0"), (-1, "phi-", "1")])
    assert equal_up_to_global_phase(dsqc2_codebook.encoded_states["101"], expected)
    assert equal_up_to_global_phase(dsqc2_codebook.encoded_states["000"], dsqc2_codebook.initial_state)


def test_dsqc2_decode_by_label(dsqc2_codebook):
    assert decode(dsqc2_codebook, [GHZ_LIKE_BASIS.outcome_labels[6]]) == "110"


def test_dsqc2_plans_agree_on_every_message(dsqc2_codebook, rng):
    alternate = dsqc2_codebook.alternate_plans["bell_and_z"]
    for bits, state in dsqc2_codebook.encoded_states.items():
        primary = measure_with_plan(dsqc2_codebook, state, rng)
        assert decode(dsqc2_codebook, primary) == bits
        records = measure_with_plan(dsqc2_codebook, state, rng, alternate)
        assert decode(dsqc2_codebook, records, alternate) == bits


def test_dsqc1_measure_with_plan_round_trip(dsqc1_codebook, rng):
    for _ in range(10):
        for bits, state in dsqc1_codebook.encoded_states.items():
            assert decode(dsqc1_codebook, measure_with_plan(dsqc1_codebook, state, rng)) == bits


def test_qsdc_codebook_is_dsqc2_channel(dsqc2_codebook, qsdc_codebook):
    assert qsdc_codebook.name == "qsdc"
    assert codebooks_equivalent(qsdc_codebook, dsqc2_codebook)


def test_unknown_outcome_is_inconsistent(dsqc1_codebook):
    with pytest.raises(InconsistentOutcome):
        decode(dsqc1_codebook, ["0", "nope"])


# ------------------------------------------------------------------
# Validation
# ------------------------------------------------------------------

def test_validate_dsqc2(dsqc2_codebook):
    report = validate_codebook(dsqc2_codebook)
    assert report.valid
    assert report.orthonormal
    assert report.operator_arity == 2
    assert report.register_size == 3
    assert report.dense_coding_capable
    assert report.encoded_state_count == 8


def test_duplicate_unitaries_are_not_orthonormal():
    cb = make_codebook(
        "duplicates", BELL_STATES["psi+"],
        {"0": (IDENTITY, (0,)), "1": (IDENTITY, (0,))},
        home_qubits=(), steps=[MeasurementStep(Actor.BOB, computational_basis(2), (0, 1))],
    )
    report = validate_codebook(cb)
    assert not report.orthonormal
    assert not report.valid
    assert report.max_cross_overlap == pytest.approx(1.0)


def test_full_register_operators_are_not_dense_coding():
    entries = {
        f"{a}{b}": (kron_ops(PAULI_X if a else IDENTITY, PAULI_X if b else IDENTITY), (0, 1))
        for a in (0, 1) for b in (0, 1)
    }
    cb = make_codebook(
        "full", computational_state("00"), entries,
        home_qubits=(), steps=[MeasurementStep(Actor.BOB, computational_basis(2), (0, 1))],
    )
    report = validate_codebook(cb)
    assert report.orthonormal
    assert not report.dense_coding_capable


def test_example_states():
    states = build_example_states()
    for state in states.values():
        assert state.norm() == pytest.approx(1.0, abs=1e-12)
    assert states["omega"].num_qubits == 4
    assert inner_product(states["q4"], states["q5"]).real == pytest.approx(0.25, abs=1e-12)


# ------------------------------------------------------------------
# Channel specs
# ------------------------------------------------------------------

def _bell_spec(**overrides):
    h = 2 ** -0.5
    doc = {
        "name": "dense",
        "num_qubits": 2,
        "message_bits": 2,
        "initial_state": [[h, 0], [0, 0], [0, 0], [h, 0]],
        "measurement_basis": "bell_plus_z",
        "entries": [
            {"bits": "00", "targets": [0], "matrix": [[1, 0], [0, 1]]},
            {"bits": "01", "targets": [0], "matrix": [[0, 1], [1, 0]]},
            {"bits": "10", "targets": [0], "matrix": [[1, 0], [0, -1]]},
            {"bits": "11", "targets": [0], "matrix": [[0, 1], [-1, 0]]},
        ],
    }
    doc.update(overrides)
    return doc


def test_bundled_dsqc2_spec_matches_builtin(channel_dir, dsqc2_codebook):
    cb = load_channel_spec_file(channel_dir / "dsqc2_ghz_like.json")
    assert codebooks_equivalent(cb, dsqc2_codebook)
    report = validate_codebook(cb, 1e-9)
    assert report.valid and report.dense_coding_capable
    assert (report.operator_arity, report.register_size) == (2, 3)


def test_bundled_full_register_spec(channel_dir):
    report = validate_codebook(load_channel_spec_file(channel_dir / "full_register_computational.json"), 1e-9)
    assert report.valid
    assert not report.dense_coding_capable


def test_bell_dense_coding_spec(channel_dir):
    cb = load_channel_spec_file(channel_dir / "bell_dense_coding.json")
    assert (cb.num_qubits, cb.message_bits) == (2, 2)
    assert validate_codebook(cb, 1e-9).dense_coding_capable
    assert load_channel_spec(_bell_spec()).plan.table == cb.plan.table


def test_spec_accepts_json_text():
    cb = load_channel_spec(json.dumps(_bell_spec()))
    assert sorted(cb.messages) == ["00", "01", "10", "11"]


def test_spec_near_unitary_matrix_is_snapped():
    doc = _bell_spec()
    doc["entries"][1]["matrix"] = [[0, 1 + 1e-11], [1, 0]]
    cb = load_channel_spec(doc)
    assert np.allclose(cb.entries["01"].op.matrix, PAULI_X.matrix, atol=1e-9)


def test_spec_non_unitary_raises_with_report():
    doc = _bell_spec()
    doc["entries"][2]["matrix"] = [[1, 0], [0, 2]]
    with pytest.raises(ValidationFailed) as info:
        load_channel_spec(doc)
    assert info.value.report is not None
    assert not info.value.report.unitaries_valid


def test_spec_non_orthogonal_family_fails():
    doc = _bell_spec()
    doc["entries"][1]["matrix"] = [[1, 0], [0, 1]]
    with pytest.raises(ValidationFailed) as info:
        load_channel_spec(doc)
    assert not info.value.report.orthonormal


def test_spec_corrupt_json_reports_location():
    with pytest.raises(ParseError) as info:
        load_channel_spec('{"name": "x", ')
    assert "line 1" in info.value.location


@pytest.mark.parametrize("overrides, location", [
    ({"num_qubits": "three"}, "num_qubits"),
    ({"initial_state": [[1, 0], [0, 0]]}, "initial_state"),
    ({"measurement_basis": "diagonal"}, "measurement_basis"),
    ({"unexpected": 1}, "unexpected"),
])
def test_spec_schema_errors(overrides, location):
    with pytest.raises(ParseError) as info:
        load_channel_spec(_bell_spec(**overrides))
    assert location in info.value.location


def test_spec_duplicate_bits():
    doc = _bell_spec()
    doc["entries"][1]["bits"] = "00"
    with pytest.raises(ParseError) as info:
        load_channel_spec(doc)
    assert info.value.location == "entries[1].bits"


def test_spec_ragged_matrix():
    doc = _bell_spec()
    doc["entries"][0]["matrix"] = [[1, 0], [0]]
    with pytest.raises(ParseError) as info:
        load_channel_spec(doc)
    assert info.value.location == "entries[0].matrix"


def test_spec_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_channel_spec_file(tmp_path / "absent.json")


def test_spec_inline_basis():
    doc = _bell_spec(measurement_basis=[
        [[2 ** -0.5, 0], 0, 0, [2 ** -0.5, 0]],
        [0, 2 ** -0.5, 2 ** -0.5, 0],
        [2 ** -0.5, 0, 0, -(2 ** -0.5)],
        [0, 2 ** -0.5, -(2 ** -0.5), 0],
    ], outcome_labels=["a", "b", "c", "d"])
    cb = load_channel_spec(doc)
    assert decode(cb, ["a"]) == "00"
    assert decode(cb, ["b"]) == "01"


def test_spec_inline_basis_must_be_orthonormal():
    doc = _bell_spec(measurement_basis=[[1, 0, 0, 0], [1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    with pytest.raises(ParseError):
        load_channel_spec(doc)


def test_spec_z_home_qubit_variant():
    doc = _bell_spec(home_qubits=[1], measurement_basis="computational",
                     entries=[{"bits": "0", "targets": [0], "matrix": [[1, 0], [0, 1]]},
                              {"bits": "1", "targets": [0], "matrix": [[0, 1], [1, 0]]}],
                     message_bits=1, initial_state=[1, 0, 0, 0])
    cb = load_channel_spec(doc)
    assert cb.plan.steps[0].party == Actor.ALICE
    assert cb.plan.steps[0].basis.num_qubits == 1
    assert decode(cb, ["0", "1"]) == "1"
