# ============================================
# FILE: src/adversary.py
# Eavesdropper strategies wired into the session channel, plus
# leak-before-detection and detection-probability estimation
# ============================================

import asyncio
import logging
from dataclasses import astuple, dataclass, field
from itertools import product
from math import ceil
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from codebook import Codebook, DecodePlan, build_dsqc1_codebook, build_dsqc2_codebook, build_qsdc_codebook
from models import (
    Actor,
    DecoyDialogue,
    EveInference,
    EveKind,
    EveModel,
    FakeStatePolicy,
    LeakageReport,
    Protocol,
    SessionTranscript,
    carrier_of,
)
from quantum_core import KET_0, KET_1, X_BASIS, Z_BASIS, QuantumMemory

logger = logging.getLogger(__name__)

# Per-sifted-decoy error probability each strategy causes
MEASURE_RESEND_DECOY_ERROR = 0.25
FAKE_DECOY_ERROR = 0.5

QSDC_ROUNDS = 3


@dataclass
class SessionContext:
    """What Eve can see and touch during one transmission round"""

    codebook: Codebook
    memory: QuantumMemory
    rng: np.random.Generator
    transcript: SessionTranscript
    round_number: int
    sequence: List[int]                  # qubit handles in transmitted order
    unit_qubits: Tuple[int, ...]         # unit-qubit indices carried by this round's message qubits
    decoy_positions: List[int] = field(default_factory=list)


def fake_qubits(memory: QuantumMemory, count: int, policy: FakeStatePolicy, rng: np.random.Generator) -> List[int]:
    """Fresh single qubits Eve forwards in place of the real ones"""
    if policy == FakeStatePolicy.FIXED_ZERO:
        bits = [0] * count
    else:
        bits = rng.integers(0, 2, size=count).tolist()
    return [memory.allocate(KET_1 if bit else KET_0)[0] for bit in bits]


def decoy_measure_resend(ctx: SessionContext, eve: EveModel) -> List[int]:
    """Measure every transmitted qubit in a random Z/X basis and resend it"""
    bases = ctx.rng.integers(0, 2, size=len(ctx.sequence))
    for handle, basis_bit in zip(ctx.sequence, bases):
        ctx.memory.measure([handle], X_BASIS if basis_bit else Z_BASIS, ctx.rng)
    ctx.transcript.record(
        Actor.EVE, "measure_resend",
        round=ctx.round_number, count=len(ctx.sequence), unit_qubits=list(ctx.unit_qubits),
    )
    return list(ctx.sequence)


def _assumed_label(plan_step, assumed_bit: int) -> str:
    label = str(assumed_bit) * plan_step.basis.num_qubits
    return label if label in plan_step.basis.outcome_labels else plan_step.basis.outcome_labels[0]


def infer_unit(
    codebook: Codebook, memory: QuantumMemory, handles: Dict[int, int], eve: EveModel, rng: np.random.Generator
) -> Tuple[str, bool]:
    """Eve's guess for one unit from the unit qubits she holds (unit index -> handle).

    Alice's steps are replaced by the assumed home outcome. Returns (bits, measured).
    """
    plan = codebook.plan
    bob_targets = set(t for step in plan.steps if step.party != Actor.ALICE for t in step.targets)
    if not bob_targets <= set(handles):
        return _random_bits(codebook, rng), False

    for op, targets in plan.rotations:
        memory.apply(op, [handles[t] for t in targets])
    key = []
    for step in plan.steps:
        if step.party == Actor.ALICE:
            key.append(_assumed_label(step, eve.assumed_home_outcome))
        else:
            key.append(memory.measure([handles[t] for t in step.targets], step.basis, rng).outcome_label)

    guess = plan.lookup(key)
    if guess is None:
        return _random_bits(codebook, rng), True
    return guess, True


def _random_bits(codebook: Codebook, rng: np.random.Generator) -> str:
    return "".join(str(b) for b in rng.integers(0, 2, size=codebook.message_bits))


def intercept_resend(ctx: SessionContext, eve: EveModel) -> EveInference:
    """Measure the stored message qubits of one round (decoys already known) and infer the message.

    Stored qubits are grouped into units in transmitted order; Eve cannot
    undo a unit-level reordering.
    """
    decoys = set(ctx.decoy_positions)
    message_qubits = [h for i, h in enumerate(ctx.sequence) if i not in decoys]
    width = len(ctx.unit_qubits)

    bits, measured, guessed = [], 0, 0
    for start in range(0, len(message_qubits) - width + 1, width):
        handles = dict(zip(ctx.unit_qubits, message_qubits[start:start + width]))
        guess, was_measured = infer_unit(ctx.codebook, ctx.memory, handles, eve, ctx.rng)
        bits.append(guess)
        measured += was_measured
        guessed += not was_measured

    ctx.transcript.record(
        Actor.EVE, "measure_stored",
        round=ctx.round_number, units=measured, unit_qubits=list(ctx.unit_qubits),
    )
    return EveInference(inferred_message="".join(bits), measured_units=measured, guessed_units=guessed)


class EveAgent:
    """Stateful adversary for one session, called by the channel at each round"""

    def __init__(self, model: EveModel, codebook: Codebook, memory: QuantumMemory,
                 rng: np.random.Generator, transcript: SessionTranscript):
        self.model = model
        self.codebook = codebook
        self.memory = memory
        self.rng = rng
        self.transcript = transcript
        self.logger = logging.getLogger(__name__)

        # round -> (stored sequence, unit qubits, decoy positions)
        self._stored: Dict[int, SessionContext] = {}
        self.inference: Optional[EveInference] = None

    def on_transmit(self, ctx: SessionContext) -> List[int]:
        """Return the sequence Bob receives"""
        if not self.model.attacks_round(ctx.round_number):
            return list(ctx.sequence)

        if self.model.kind == EveKind.DECOY_MEASURE_RESEND:
            return decoy_measure_resend(ctx, self.model)

        self._stored[ctx.round_number] = ctx
        self.logger.debug(f"Eve stores round {ctx.round_number} ({len(ctx.sequence)} qubits)")
        fakes = fake_qubits(self.memory, len(ctx.sequence), self.model.fake_state_policy, self.rng)
        self.transcript.record(
            Actor.EVE, "intercept",
            round=ctx.round_number, stored=len(ctx.sequence), unit_qubits=list(ctx.unit_qubits),
        )
        self.transcript.record(
            Actor.EVE, "resend_fake",
            round=ctx.round_number, count=len(fakes), policy=self.model.fake_state_policy.value,
        )
        return fakes

    def on_decoy_positions(self, round_number: int, positions: Sequence[int]) -> None:
        ctx = self._stored.get(round_number)
        if ctx is None:
            return
        ctx.decoy_positions = list(positions)
        self.transcript.record(Actor.EVE, "discard_decoys", round=round_number, count=len(positions))

        if len(ctx.unit_qubits) == self.codebook.num_qubits - len(self.codebook.home_qubits):
            self.inference = intercept_resend(ctx, self.model)

    def finalize(self, n_units: int) -> Optional[EveInference]:
        """Eve's final inference, in transmitted unit order"""
        if self.model.kind != EveKind.INTERCEPT_RESEND_FAKE:
            return None
        if self.inference is None:
            self.inference = self._infer_across_rounds(n_units)
        self.transcript.record(
            Actor.EVE, "infer",
            measured_units=self.inference.measured_units, guessed_units=self.inference.guessed_units,
        )
        return self.inference

    def _infer_across_rounds(self, n_units: int) -> EveInference:
        # Round r carries one qubit of every unit; a unit is measurable only if Eve holds all of them
        per_round: Dict[int, List[int]] = {}
        for ctx in self._stored.values():
            decoys = set(ctx.decoy_positions)
            message_qubits = [h for i, h in enumerate(ctx.sequence) if i not in decoys]
            if len(message_qubits) == n_units:
                per_round[ctx.unit_qubits[0]] = message_qubits

        bits, measured = [], 0
        for u in range(n_units):
            handles = {q: per_round[q][u] for q in per_round}
            guess, was_measured = infer_unit(self.codebook, self.memory, handles, self.model, self.rng)
            bits.append(guess)
            measured += was_measured
        return EveInference(inferred_message="".join(bits), measured_units=measured, guessed_units=n_units - measured)


# ------------------------------------------------------------------
# Closed forms
# ------------------------------------------------------------------

def detection_probability_closed_form(d: int, per_decoy_error: float = MEASURE_RESEND_DECOY_ERROR) -> float:
    """1 - (1 - e)^d for d sifted decoys"""
    if d <= 0:
        return 0.0
    return 1.0 - (1.0 - per_decoy_error) ** d


def _measure_resend_errors(count: int, rng: np.random.Generator) -> np.ndarray:
    # Prepared basis and Eve's basis uniform; a basis mismatch randomizes Bob's sifted outcome
    prepared_basis = rng.integers(0, 2, size=count)
    eve_basis = rng.integers(0, 2, size=count)
    coin = rng.integers(0, 2, size=count)
    return (prepared_basis != eve_basis) & (coin == 1)


def sample_decoy_error_rate(sifted_decoys: int, rng: np.random.Generator) -> float:
    """Sifted-decoy error rate under measure-resend"""
    if sifted_decoys <= 0:
        return 0.0
    return float(_measure_resend_errors(sifted_decoys, rng).mean())


def estimate_detection_probability(d: int, trials: int, rng: np.random.Generator) -> float:
    """Monte Carlo probability that measure-resend leaves at least one error among d sifted decoys"""
    if d <= 0:
        return 0.0
    errors = _measure_resend_errors(d * trials, rng).reshape(trials, d)
    return float(errors.any(axis=1).mean())


# ------------------------------------------------------------------
# Leakage Monte Carlo
# ------------------------------------------------------------------

@dataclass
class LeakageTally:
    trials: int = 0
    units: int = 0
    unit_hits: int = 0
    bits: int = 0
    bit_hits: int = 0
    detected: int = 0
    sifted: int = 0

    def merge(self, other: "LeakageTally") -> "LeakageTally":
        return LeakageTally(*(a + b for a, b in zip(astuple(self), astuple(other))))


@dataclass
class LeakageSetup:
    """Everything a batch needs, precomputed once from the codebook"""

    protocol: Protocol
    eve: EveModel
    units_per_trial: int
    reorder: bool
    decoys_per_round: List[int]
    dialogue: DecoyDialogue
    threshold: float
    message_bits: np.ndarray       # (M, k) bit matrix
    eve_cdf: np.ndarray            # (M, K) cumulative distribution of Eve's outcome per message
    eve_guess: np.ndarray          # (K,) message index Eve decodes, -1 = no entry
    alice_match: float             # probability the real home outcome equals Eve's assumption


def codebook_for(protocol: Protocol) -> Codebook:
    builders = {Protocol.DSQC1: build_dsqc1_codebook, Protocol.DSQC2: build_dsqc2_codebook, Protocol.QSDC: build_qsdc_codebook}
    return builders[protocol]()


def _eve_view(cb: Codebook, plan: DecodePlan, assumed_bit: int):
    """Eve's outcome distribution per message (Bob's steps only) and her lookup table"""
    sizes = [len(step.basis.outcome_labels) for step in plan.steps]
    alice_axes = tuple(i for i, step in enumerate(plan.steps) if step.party == Actor.ALICE)
    bob_steps = [step for step in plan.steps if step.party != Actor.ALICE]
    messages = list(cb.encoded_states)

    rows, alice_match = [], 0.0
    for msg in messages:
        joint = plan.distributions[msg].reshape(sizes)
        rows.append(joint.sum(axis=alice_axes).reshape(-1) if alice_axes else joint.reshape(-1))
        if alice_axes:
            index = tuple(
                step.basis.index_of(_assumed_label(step, assumed_bit)) if i in alice_axes else slice(None)
                for i, step in enumerate(plan.steps)
            )
            alice_match += float(joint[index].sum()) / len(messages)
        else:
            alice_match += 1.0 / len(messages)

    dist = np.array(rows)
    dist[dist < 1e-12] = 0.0
    dist /= dist.sum(axis=1, keepdims=True)
    cdf = np.cumsum(dist, axis=1)
    cdf[:, -1] = 1.0

    guesses = []
    for bob_key in product(*(step.basis.outcome_labels for step in bob_steps)):
        bob_iter = iter(bob_key)
        key = [
            _assumed_label(step, assumed_bit) if step.party == Actor.ALICE else next(bob_iter)
            for step in plan.steps
        ]
        guess = plan.lookup(key)
        guesses.append(messages.index(guess) if guess is not None else -1)

    bits = np.array([[int(b) for b in msg] for msg in messages], dtype=np.int8)
    return bits, cdf, np.array(guesses), alice_match


def build_leakage_setup(
    protocol: Protocol,
    eve: EveModel,
    units_per_trial: int = 1,
    reorder: bool = False,
    decoys: Optional[int] = None,
    dialogue: DecoyDialogue = DecoyDialogue.SIFT,
    threshold: float = 0.0,
    qkd_carrier: Protocol = Protocol.DSQC2,
) -> LeakageSetup:
    carrier = carrier_of(protocol, qkd_carrier)
    cb = codebook_for(carrier)
    bits, cdf, guesses, alice_match = _eve_view(cb, cb.plan, eve.assumed_home_outcome)

    travel = len(cb.travel_qubits) * units_per_trial
    if carrier == Protocol.QSDC:
        total = units_per_trial * QSDC_ROUNDS if decoys is None else decoys
        per_round = [total // QSDC_ROUNDS + (1 if r < total % QSDC_ROUNDS else 0) for r in range(QSDC_ROUNDS)]
    else:
        per_round = [travel if decoys is None else decoys]

    return LeakageSetup(
        protocol=carrier, eve=eve, units_per_trial=units_per_trial, reorder=reorder,
        decoys_per_round=per_round, dialogue=dialogue, threshold=threshold,
        message_bits=bits, eve_cdf=cdf, eve_guess=guesses, alice_match=alice_match,
    )


def _decoy_error(eve: EveModel, round_number: int) -> float:
    if not eve.attacks_round(round_number):
        return 0.0
    if eve.kind == EveKind.DECOY_MEASURE_RESEND:
        return MEASURE_RESEND_DECOY_ERROR
    return FAKE_DECOY_ERROR


def run_leakage_batch(setup: LeakageSetup, trials: int, rng: np.random.Generator) -> LeakageTally:
    """Vectorized Monte Carlo over `trials` independent sessions"""
    n = setup.units_per_trial
    num_messages = setup.message_bits.shape[0]
    eve = setup.eve

    # Decoy checks, round by round; a failed check stops later rounds
    aborted = np.zeros(trials, dtype=bool)
    passed_all = np.ones(trials, dtype=bool)
    sifted_total = 0
    for r, m in enumerate(setup.decoys_per_round, start=1):
        live = ~aborted
        if setup.dialogue == DecoyDialogue.SIFT:
            sifted = rng.binomial(m, 0.5, size=trials)
        else:
            sifted = np.full(trials, m)
        errors = rng.binomial(sifted, _decoy_error(eve, r))
        rate = np.divide(errors, sifted, out=np.zeros(trials), where=sifted > 0)
        failed = live & (rate > setup.threshold)
        sifted_total += int(sifted[live].sum())
        aborted |= failed
        passed_all &= ~failed

    tally = LeakageTally(trials=trials, detected=int(aborted.sum()), sifted=sifted_total)
    if eve.kind != EveKind.INTERCEPT_RESEND_FAKE:
        return tally

    truth = rng.integers(0, num_messages, size=(trials, n))
    if setup.reorder:
        perms = np.argsort(rng.random((trials, n)), axis=1)
        carried = np.take_along_axis(truth, perms, axis=1)
    else:
        carried = truth

    outcomes = (rng.random((trials, n))[..., None] >= setup.eve_cdf[carried]).sum(axis=-1)
    outcomes = np.minimum(outcomes, setup.eve_cdf.shape[1] - 1)
    guesses = setup.eve_guess[outcomes]
    random_guess = rng.integers(0, num_messages, size=(trials, n))
    guesses = np.where(guesses < 0, random_guess, guesses)

    if setup.protocol == Protocol.QSDC:
        # Eve holds whole triplets only if she attacked every round and no check stopped the session
        full = passed_all & all(eve.attacks_round(r) for r in range(1, QSDC_ROUNDS + 1))
        guesses = np.where(full[:, None], guesses, random_guess)

    tally.units = trials * n
    tally.unit_hits = int((guesses == truth).sum())
    tally.bits = tally.units * setup.message_bits.shape[1]
    tally.bit_hits = int((setup.message_bits[guesses] == setup.message_bits[truth]).sum())
    return tally


def uniform_guess_estimate(setup: LeakageSetup) -> Optional[float]:
    """Wrong-home-branch decodes counted as uniform guesses; chance level when Eve cannot align units"""
    if setup.eve.kind != EveKind.INTERCEPT_RESEND_FAKE:
        return None
    chance = 1.0 / setup.message_bits.shape[0]
    if setup.reorder or setup.protocol == Protocol.QSDC:
        return chance
    exact, _ = table_exact_estimates(setup)
    if setup.alice_match >= 1.0:
        return exact
    return setup.alice_match * 1.0 + (1.0 - setup.alice_match) * chance


def table_exact_estimates(setup: LeakageSetup) -> Tuple[Optional[float], Optional[float]]:
    """Per-unit and per-bit accuracy implied by the exact decode table (reorder off)"""
    if setup.eve.kind != EveKind.INTERCEPT_RESEND_FAKE or setup.reorder or setup.protocol == Protocol.QSDC:
        return None, None
    num_messages, k = setup.message_bits.shape
    dist = np.diff(setup.eve_cdf, axis=1, prepend=0.0)
    unit_acc, bit_acc = 0.0, 0.0
    for truth in range(num_messages):
        for outcome, p in enumerate(dist[truth]):
            if p <= 0:
                continue
            guess = setup.eve_guess[outcome]
            if guess < 0:
                unit_acc += p / num_messages
                bit_acc += p * 0.5 / num_messages
                continue
            unit_acc += p * (guess == truth) / num_messages
            bit_acc += p * float((setup.message_bits[guess] == setup.message_bits[truth]).mean()) / num_messages
    return round(unit_acc, 12), round(bit_acc, 12)


def _report(setup: LeakageSetup, tally: LeakageTally) -> LeakageReport:
    intercepting = setup.eve.kind == EveKind.INTERCEPT_RESEND_FAKE
    exact_unit, exact_bit = table_exact_estimates(setup)
    return LeakageReport(
        protocol=setup.protocol,
        eve_kind=setup.eve.kind,
        trials=tally.trials,
        units_per_trial=setup.units_per_trial,
        reorder_enabled=setup.reorder,
        per_message_accuracy=tally.unit_hits / tally.units if intercepting and tally.units else None,
        per_bit_accuracy=tally.bit_hits / tally.bits if intercepting and tally.bits else None,
        uniform_guess_estimate=uniform_guess_estimate(setup),
        table_exact_message_estimate=exact_unit,
        table_exact_bit_estimate=exact_bit,
        detection_probability=tally.detected / tally.trials,
        sifted_decoys_mean=tally.sifted / tally.trials,
    )


def estimate_leakage(protocol: Protocol, eve: EveModel, trials: int, rng: np.random.Generator, **options) -> LeakageReport:
    """Monte Carlo leak-before-detection study; options go to build_leakage_setup"""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    setup = build_leakage_setup(protocol, eve, **options)
    report = _report(setup, run_leakage_batch(setup, trials, rng))
    logger.info(f"📊 Leakage {protocol.value}/{eve.kind.value}: {trials} trials, detection {report.detection_probability:.3f}")
    return report


async def estimate_leakage_parallel(
    protocol: Protocol,
    eve: EveModel,
    trials: int,
    seed: int,
    workers: int = 4,
    batch_size: int = 2500,
    **options,
) -> LeakageReport:
    """Batched fan-out; batch b always draws from child stream b, so the result ignores `workers`"""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    setup = build_leakage_setup(protocol, eve, **options)
    batches = ceil(trials / batch_size)
    streams = np.random.SeedSequence(seed).spawn(batches)
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run_batch(index: int) -> LeakageTally:
        async with semaphore:
            size = min(batch_size, trials - index * batch_size)
            rng = np.random.default_rng(streams[index])
            return await asyncio.to_thread(run_leakage_batch, setup, size, rng)

    logger.info(f"🚀 Leakage fan-out: {batches} batches over {workers} workers")
    tallies = await asyncio.gather(*(run_batch(i) for i in range(batches)))

    total = LeakageTally()
    for tally in tallies:
        total = total.merge(tally)
    return _report(setup, total)
