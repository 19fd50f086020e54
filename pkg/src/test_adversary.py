import numpy as np
import pytest

from adversary import (
    LeakageTally,
    build_leakage_setup,
    detection_probability_closed_form,
    estimate_detection_probability,
    estimate_leakage,
    estimate_leakage_parallel,
    fake_qubits,
    infer_unit,
    uniform_guess_estimate,
    sample_decoy_error_rate,
)
from models import DecoyDialogue, EveKind, EveModel, FakeStatePolicy, Protocol
from quantum_core import Z_BASIS, QuantumMemory

INTERCEPT = EveModel(kind=EveKind.INTERCEPT_RESEND_FAKE)
MEASURE_RESEND = EveModel(kind=EveKind.DECOY_MEASURE_RESEND)


# ------------------------------------------------------------------
# Detection
# ------------------------------------------------------------------

@pytest.mark.parametrize("d, expected", [(0, 0.0), (1, 0.25), (2, 0.4375), (10, 1 - 0.75 ** 10)])
def test_detection_closed_form(d, expected):
    assert detection_probability_closed_form(d) == pytest.approx(expected)


def test_decoy_error_rate_under_measure_resend(rng):
    assert sample_decoy_error_rate(100_000, rng) == pytest.approx(0.25, abs=0.01)
    assert sample_decoy_error_rate(0, rng) == 0.0


@pytest.mark.parametrize("d", [1, 5, 10])
def test_detection_monte_carlo_matches_closed_form(d, rng):
    estimate = estimate_detection_probability(d, 20_000, rng)
    assert estimate == pytest.approx(detection_probability_closed_form(d), abs=0.02)


def test_detection_grows_with_decoys():
    values = [detection_probability_closed_form(d) for d in range(1, 30)]
    assert values == sorted(values)
    assert values[-1] > 0.99


# ------------------------------------------------------------------
# Eve's view of a single unit
# ------------------------------------------------------------------

@pytest.mark.parametrize("message", ["000", "011", "101", "111"])
def test_intercepted_dsqc2_unit_is_read_exactly(message, dsqc2_codebook, rng):
    memory = QuantumMemory()
    handles = memory.allocate(dsqc2_codebook.encode(message))
    guess, measured = infer_unit(dsqc2_codebook, memory, dict(enumerate(handles)), INTERCEPT, rng)
    assert (guess, measured) == (message, True)


def test_partial_unit_can_only_be_guessed(qsdc_codebook, rng):
    memory = QuantumMemory()
    handles = memory.allocate(qsdc_codebook.encode("110"))
    guess, measured = infer_unit(qsdc_codebook, memory, {0: handles[0]}, INTERCEPT, rng)
    assert not measured
    assert len(guess) == 3


def test_fake_qubits_fixed_zero(rng):
    memory = QuantumMemory()
    for handle in fake_qubits(memory, 5, FakeStatePolicy.FIXED_ZERO, rng):
        assert memory.probabilities([handle], Z_BASIS) == pytest.approx([1.0, 0.0])


def test_tally_merge():
    merged = LeakageTally(trials=2, units=4, unit_hits=1).merge(LeakageTally(trials=3, units=6, detected=2))
    assert (merged.trials, merged.units, merged.unit_hits, merged.detected) == (5, 10, 1, 2)


# ------------------------------------------------------------------
# Leak-before-detection
# ------------------------------------------------------------------

def test_dsqc2_leaks_everything_without_reordering(rng):
    report = estimate_leakage(Protocol.DSQC2, INTERCEPT, 2000, rng, threshold=1.0)
    assert report.per_message_accuracy == 1.0
    assert report.per_bit_accuracy == 1.0
    assert report.uniform_guess_estimate == pytest.approx(1.0)
    assert report.table_exact_message_estimate == pytest.approx(1.0)


def test_dsqc1_leakage_estimates(rng):
    report = estimate_leakage(Protocol.DSQC1, INTERCEPT, 20_000, rng, threshold=1.0)
    assert report.uniform_guess_estimate == pytest.approx(0.625)
    assert report.table_exact_message_estimate == pytest.approx(0.5)
    assert report.table_exact_bit_estimate == pytest.approx(0.75)
    assert report.per_message_accuracy == pytest.approx(0.5, abs=0.02)
    assert report.per_bit_accuracy == pytest.approx(0.75, abs=0.02)


def test_reordering_drops_leakage_to_chance(rng):
    report = estimate_leakage(Protocol.DSQC2, INTERCEPT, 500, rng, units_per_trial=64, reorder=True, threshold=1.0)
    assert report.per_bit_accuracy == pytest.approx(0.5, abs=0.02)
    assert report.per_message_accuracy == pytest.approx(0.125, abs=0.03)
    assert report.uniform_guess_estimate == pytest.approx(0.125)
    assert report.table_exact_message_estimate is None


def test_reordering_hides_dsqc1_units(rng):
    report = estimate_leakage(Protocol.DSQC1, INTERCEPT, 500, rng, units_per_trial=64, reorder=True, threshold=1.0)
    assert report.per_bit_accuracy == pytest.approx(0.5, abs=0.02)
    assert report.per_message_accuracy == pytest.approx(0.25, abs=0.03)
    assert report.uniform_guess_estimate == pytest.approx(0.25)


def test_qsdc_detects_before_the_last_round(rng):
    report = estimate_leakage(Protocol.QSDC, INTERCEPT, 20_000, rng, units_per_trial=4)
    assert report.uniform_guess_estimate == pytest.approx(0.125)
    assert report.detection_probability > 0.9
    assert report.per_message_accuracy < 0.25


def test_qsdc_first_round_attack_gains_nothing(rng):
    eve = EveModel(kind=EveKind.INTERCEPT_RESEND_FAKE, attack_rounds=[1])
    report = estimate_leakage(Protocol.QSDC, eve, 20_000, rng, threshold=1.0)
    assert report.per_message_accuracy == pytest.approx(0.125, abs=0.02)


def test_measure_resend_detection(rng):
    report = estimate_leakage(Protocol.DSQC2, MEASURE_RESEND, 20_000, rng)
    # 3 decoys, each sifted with probability 1/2 and then wrong with probability 1/4
    assert report.detection_probability == pytest.approx(1 - 0.875 ** 3, abs=0.02)
    assert report.sifted_decoys_mean == pytest.approx(1.5, abs=0.05)
    assert report.per_message_accuracy is None
    assert report.uniform_guess_estimate is None


def test_announced_bases_keep_every_decoy(rng):
    report = estimate_leakage(Protocol.DSQC2, MEASURE_RESEND, 1000, rng, dialogue=DecoyDialogue.ANNOUNCE_BASIS)
    assert report.sifted_decoys_mean == pytest.approx(3.0)


def test_qkd_reports_its_carrier(rng):
    report = estimate_leakage(Protocol.QKD, INTERCEPT, 200, rng, threshold=1.0)
    assert report.protocol == Protocol.DSQC2
    setup = build_leakage_setup(Protocol.QKD, INTERCEPT, qkd_carrier=Protocol.DSQC1)
    assert uniform_guess_estimate(setup) == pytest.approx(0.625)


def test_leakage_needs_trials(rng):
    with pytest.raises(ValueError):
        estimate_leakage(Protocol.DSQC2, INTERCEPT, 0, rng)


@pytest.mark.asyncio
async def test_parallel_result_ignores_worker_count():
    one = await estimate_leakage_parallel(Protocol.DSQC1, INTERCEPT, 3000, seed=17, workers=1, batch_size=700)
    four = await estimate_leakage_parallel(Protocol.DSQC1, INTERCEPT, 3000, seed=17, workers=4, batch_size=700)
    assert one == four
    assert one.trials == 3000


@pytest.mark.asyncio
async def test_parallel_rejects_zero_trials():
    with pytest.raises(ValueError):
        await estimate_leakage_parallel(Protocol.DSQC2, INTERCEPT, 0, seed=1)


@pytest.mark.slow
def test_dsqc1_leakage_converges():
    report = estimate_leakage(Protocol.DSQC1, INTERCEPT, 200_000, np.random.default_rng(99), threshold=1.0)
    assert report.per_message_accuracy == pytest.approx(0.5, abs=0.005)
