# ============================================
# FILE: src/protocols.py
# Session state machines for DSQC1, DSQC2, three-round QSDC and QKD:
# decoy insertion, unit reordering, adversarial channel, sifting, decoding
# ============================================

import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from adversary import QSDC_ROUNDS, EveAgent, SessionContext, codebook_for
from codebook import Codebook, DecodePlan, OutcomeKey
from exceptions import InconsistentOutcome, NoSiftedDecoys
from models import (
    AbortReason,
    Actor,
    DecoyDialogue,
    DecoySlot,
    EveKind,
    EveModel,
    OrderPermutation,
    Protocol,
    SessionConfig,
    SessionResult,
    SessionTranscript,
)
from quantum_core import KET_0, KET_1, KET_MINUS, KET_PLUS, X_BASIS, Z_BASIS, QuantumMemory, make_rng

logger = logging.getLogger(__name__)

DECOY_LABELS = ("0", "1", "+", "-")
DECOY_STATES = {"0": KET_0, "1": KET_1, "+": KET_PLUS, "-": KET_MINUS}
DECOY_BASES = {"Z": Z_BASIS, "X": X_BASIS}
ALTERNATE_PLAN = "bell_and_z"


# ------------------------------------------------------------------
# Sequence operations
# ------------------------------------------------------------------

def insert_decoys(
    sequence: Sequence[Any],
    m: int,
    rng: np.random.Generator,
    prepare: Optional[Callable[[DecoySlot], Any]] = None,
) -> Tuple[List[Any], List[DecoySlot]]:
    """Insert m decoys at uniformly random positions, keeping the original relative order.

    Decoy positions hold prepare(slot) when given, else the slot itself.
    """
    if m < 0:
        raise ValueError(f"decoy count must be >= 0, got {m}")
    if m == 0:
        return list(sequence), []

    total = len(sequence) + m
    positions = sorted(int(p) for p in rng.choice(total, size=m, replace=False))
    states = rng.integers(0, 4, size=m)
    slots = [
        DecoySlot(position=p, prepared_state=DECOY_LABELS[s], preparation_basis="Z" if s < 2 else "X")
        for p, s in zip(positions, states)
    ]

    by_position = {slot.position: slot for slot in slots}
    originals = iter(sequence)
    extended = []
    for i in range(total):
        slot = by_position.get(i)
        if slot is None:
            extended.append(next(originals))
        else:
            extended.append(prepare(slot) if prepare else slot)
    return extended, slots


def remove_decoys(extended_sequence: Sequence[Any], decoy_slots: Sequence[DecoySlot]) -> List[Any]:
    positions = {slot.position for slot in decoy_slots}
    return [item for i, item in enumerate(extended_sequence) if i not in positions]


def reorder(units: Sequence[Any], rng: np.random.Generator) -> Tuple[List[Any], OrderPermutation]:
    """Uniformly random unit-level permutation"""
    if not units:
        raise ValueError("nothing to reorder")
    permutation = OrderPermutation(forward=[int(i) for i in rng.permutation(len(units))])
    return permutation.apply(list(units)), permutation


def sift_and_score(
    decoy_slots: Sequence[DecoySlot],
    bob_measurements: Sequence[Tuple[str, str]],
    alice_announcements: Optional[Sequence[str]] = None,
) -> Tuple[int, float]:
    """Keep basis-matched decoys and score them.

    bob_measurements holds (basis, outcome) per decoy; alice_announcements are
    the bases Alice reveals (her preparation bases when omitted).
    """
    if len(bob_measurements) != len(decoy_slots):
        raise ValueError("one Bob measurement per decoy slot is required")
    reference = list(alice_announcements) if alice_announcements is not None else [
        slot.preparation_basis for slot in decoy_slots
    ]

    sifted = errors = 0
    for slot, (basis, outcome), announced in zip(decoy_slots, bob_measurements, reference):
        if basis != announced:
            continue
        sifted += 1
        errors += outcome != slot.prepared_state

    if sifted == 0:
        if decoy_slots:
            raise NoSiftedDecoys(f"none of {len(decoy_slots)} decoys survived sifting")
        return 0, 0.0
    return sifted, errors / sifted


def split_decoys(total: int, rounds: int) -> List[int]:
    """Spread `total` decoys over rounds, earlier rounds taking the remainder"""
    return [total // rounds + (1 if r < total % rounds else 0) for r in range(rounds)]


# ------------------------------------------------------------------
# Sessions
# ------------------------------------------------------------------

class _Aborted(Exception):
    pass


class ProtocolSession:
    """One run of a protocol over a fresh quantum memory and one seeded generator"""

    def __init__(self, config: SessionConfig, eve: Optional[EveModel] = None, codebook: Optional[Codebook] = None):
        self.config = config
        self.eve = eve or EveModel()
        self.carrier = config.carrier
        self.codebook = codebook or codebook_for(self.carrier)
        self.rng = make_rng(config.seed)
        self.memory = QuantumMemory()
        self.transcript = SessionTranscript()
        self.logger = logging.getLogger(__name__)

        self.agent = None
        if self.eve.kind != EveKind.NONE:
            self.agent = EveAgent(self.eve, self.codebook, self.memory, self.rng, self.transcript)

        self.message = config.message
        self.alice_key: Optional[str] = None
        self.abort_reason: Optional[AbortReason] = None
        self.error_rate = 0.0
        self.sifted_total = 0
        self.rounds_completed = 0
        self.classical_bits = 0
        self.decode_paths_agree: Optional[bool] = None

    # -- entry point -------------------------------------------------

    def run(self) -> SessionResult:
        cfg = self.config
        self.transcript.record(
            Actor.ALICE, "session_start",
            protocol=cfg.protocol.value, carrier=self.carrier.value, n=cfg.n, reorder=cfg.reorder,
        )
        if cfg.protocol == Protocol.QKD:
            self.message = "".join(str(b) for b in self.rng.integers(0, 2, size=cfg.capacity))
            self.alice_key = self.message
            self.transcript.record(Actor.ALICE, "draw_key", bits=cfg.capacity)

        self.logger.info(f"🚀 {cfg.protocol.value} session: n={cfg.n}, seed={cfg.seed}, eve={self.eve.kind.value}")
        decoded = None
        try:
            if self.carrier == Protocol.QSDC:
                decoded = self._run_three_rounds()
            else:
                decoded = self._run_single_round()
        except _Aborted:
            self.logger.warning(f"🚨 {cfg.protocol.value} session aborted: {self.abort_reason.value}")
        else:
            self.logger.info(f"✅ {cfg.protocol.value} session decoded {len(decoded)} bits")
        return self._result(decoded)

    # -- protocol bodies ---------------------------------------------

    def _run_single_round(self) -> str:
        cb = self.codebook
        n = self.config.n
        units = self._prepare_and_encode()

        travel_units = [tuple(unit[q] for q in cb.travel_qubits) for unit in units]
        self.transcript.record(
            Actor.ALICE, "split", home_per_unit=len(cb.home_qubits), travel_per_unit=len(cb.travel_qubits),
        )

        order = None
        if self.config.reorder:
            travel_units, order = reorder(travel_units, self.rng)
            self.transcript.record(Actor.ALICE, "reorder", units=n)

        sequence = [h for unit in travel_units for h in unit]
        decoys = self.config.decoy_count if self.config.decoy_count is not None else len(sequence)
        received = self._transmit_round(1, sequence, cb.travel_qubits, decoys)

        width = len(cb.travel_qubits)
        bob_units = [tuple(received[u * width:(u + 1) * width]) for u in range(n)]
        if order is not None:
            bob_units = self._disclose_order(order, bob_units, bits=len(sequence))

        handles = []
        for unit, bob_unit in zip(units, bob_units):
            mapping = {q: unit[q] for q in cb.home_qubits}
            mapping.update(zip(cb.travel_qubits, bob_unit))
            handles.append(mapping)
        return self._decode_units(handles)

    def _run_three_rounds(self) -> str:
        n = self.config.n
        units = self._prepare_and_encode()
        self.transcript.record(Actor.ALICE, "split", home_per_unit=0, travel_per_unit=self.codebook.num_qubits)

        order = None
        unit_order = list(range(n))
        if self.config.reorder:
            unit_order, order = reorder(unit_order, self.rng)
            self.transcript.record(Actor.ALICE, "reorder", units=n)

        total = self.config.decoy_count if self.config.decoy_count is not None else n * QSDC_ROUNDS
        per_round = split_decoys(total, QSDC_ROUNDS)

        received: Dict[int, List[int]] = {}
        for r, qubit in enumerate(range(self.codebook.num_qubits), start=1):
            sequence = [units[u][qubit] for u in unit_order]
            received[qubit] = self._transmit_round(r, sequence, (qubit,), per_round[r - 1])

        if order is not None:
            for qubit in received:
                received[qubit] = order.restore(received[qubit])
            self.transcript.record(Actor.ALICE, "disclose_order", bits=n * QSDC_ROUNDS, order=order.forward)
            self.classical_bits += n * QSDC_ROUNDS

        handles = [{q: received[q][u] for q in received} for u in range(n)]
        return self._decode_units(handles)

    # -- steps -------------------------------------------------------

    def _prepare_and_encode(self) -> List[Tuple[int, ...]]:
        cb = self.codebook
        n = self.config.n
        units = [self.memory.allocate(cb.initial_state) for _ in range(n)]
        self.transcript.record(
            Actor.ALICE, "prepare",
            units=n, qubits_per_unit=cb.num_qubits, qubits=n * cb.num_qubits,
        )

        k = cb.message_bits
        for u, unit in enumerate(units):
            entry = cb.entries[self.message[u * k:(u + 1) * k]]
            self.memory.apply(entry.op, [unit[t] for t in entry.targets])
        self.transcript.record(Actor.ALICE, "encode", units=n, message_bits=len(self.message))
        return units

    def _prepare_decoy(self, slot: DecoySlot) -> int:
        return self.memory.allocate(DECOY_STATES[slot.prepared_state])[0]

    def _transmit_round(self, round_number: int, sequence: List[int], unit_qubits: Tuple[int, ...], decoys: int) -> List[int]:
        """Send one sequence with decoys through the channel; returns Bob's message qubits"""
        extended, slots = insert_decoys(sequence, decoys, self.rng, prepare=self._prepare_decoy)
        self.transcript.record(Actor.ALICE, "decoy_insert", round=round_number, count=len(slots))
        self.transcript.record(Actor.CHANNEL, "transmit", round=round_number, qubits=len(extended))

        delivered = extended
        if self.agent is not None:
            ctx = SessionContext(
                codebook=self.codebook, memory=self.memory, rng=self.rng, transcript=self.transcript,
                round_number=round_number, sequence=list(extended), unit_qubits=tuple(unit_qubits),
            )
            delivered = self.agent.on_transmit(ctx)

        self.transcript.record(Actor.BOB, "receipt", round=round_number, received=len(delivered), expected=len(extended))
        if len(delivered) != len(extended):
            self._abort(AbortReason.LENGTH_MISMATCH, round_number)

        positions = [slot.position for slot in slots]
        self.transcript.record(Actor.ALICE, "announce_decoy_positions", round=round_number, positions=positions)
        if self.agent is not None:
            self.agent.on_decoy_positions(round_number, positions)

        self._check_decoys(round_number, [delivered[p] for p in positions], slots)
        self.rounds_completed += 1
        return remove_decoys(delivered, slots)

    def _check_decoys(self, round_number: int, decoy_handles: List[int], slots: List[DecoySlot]) -> None:
        if self.config.decoy_dialogue == DecoyDialogue.ANNOUNCE_BASIS:
            announced = [slot.preparation_basis for slot in slots]
            self.transcript.record(Actor.ALICE, "announce_decoy_bases", round=round_number, bases=announced)
            bases = announced
        else:
            announced = None
            bases = ["X" if b else "Z" for b in self.rng.integers(0, 2, size=len(slots))]

        outcomes = [
            self.memory.measure([h], DECOY_BASES[basis], self.rng).outcome_label
            for h, basis in zip(decoy_handles, bases)
        ]
        self.transcript.record(Actor.BOB, "measure_decoys", round=round_number, bases=bases, outcomes=outcomes)

        try:
            sifted, error_rate = sift_and_score(slots, list(zip(bases, outcomes)), announced)
        except NoSiftedDecoys:
            self.logger.warning(f"⚠️ Round {round_number}: no sifted decoys, check inconclusive")
            self.transcript.record(Actor.ALICE, "decoy_check_inconclusive", round=round_number, decoys=len(slots))
            return

        self.sifted_total += sifted
        self.error_rate = max(self.error_rate, error_rate)
        self.transcript.record(Actor.ALICE, "sift", round=round_number, sifted=sifted, error_rate=error_rate)
        if error_rate > self.config.error_threshold:
            self._abort(AbortReason.ERROR_RATE_EXCEEDED, round_number, error_rate=error_rate)

    def _abort(self, reason: AbortReason, round_number: int, **details: Any) -> None:
        self.abort_reason = reason
        self.transcript.record(Actor.ALICE, "abort", round=round_number, reason=reason.value, **details)
        raise _Aborted()

    def _disclose_order(self, order: OrderPermutation, bob_units: List[Tuple[int, ...]], bits: int) -> List[Tuple[int, ...]]:
        self.transcript.record(Actor.ALICE, "disclose_order", bits=bits, order=order.forward)
        self.classical_bits += bits
        return order.restore(bob_units)

    def _decode_units(self, handles: List[Dict[int, int]]) -> str:
        cb = self.codebook
        plan = cb.plan
        alternate = cb.alternate_plans.get(ALTERNATE_PLAN)

        clones = []
        if alternate is not None:
            for mapping in handles:
                qubits = sorted(mapping)
                clones.append(dict(zip(qubits, self.memory.clone([mapping[q] for q in qubits]))))

        alice_labels = self._measure_home(handles, plan)
        keys = [self._measure_plan(mapping, plan, alice) for mapping, alice in zip(handles, alice_labels)]
        self.transcript.record(Actor.BOB, "measure_units", units=len(keys), outcomes=[list(k) for k in keys])

        decoded = [self._lookup(plan, key) for key in keys]
        if alternate is not None:
            alt_keys = [self._measure_plan(mapping, alternate, ()) for mapping in clones]
            alt_decoded = [self._lookup(alternate, key) for key in alt_keys]
            self.decode_paths_agree = alt_decoded == decoded
            self.transcript.record(Actor.BOB, "cross_check", plan=alternate.name, agree=self.decode_paths_agree)

        message = "".join(decoded)
        self.transcript.record(Actor.BOB, "decode", units=len(decoded), message=message)
        return message

    def _measure_home(self, handles: List[Dict[int, int]], plan: DecodePlan) -> List[Tuple[str, ...]]:
        alice_steps = [step for step in plan.steps if step.party == Actor.ALICE]
        if not alice_steps:
            return [() for _ in handles]

        labels = []
        for mapping in handles:
            labels.append(tuple(
                self.memory.measure([mapping[t] for t in step.targets], step.basis, self.rng).outcome_label
                for step in alice_steps
            ))
        bits = sum(len(step.targets) for step in alice_steps) * len(handles)
        self.transcript.record(Actor.ALICE, "measure_home", units=len(handles))
        self.transcript.record(Actor.ALICE, "announce_home", bits=bits, outcomes=["".join(l) for l in labels])
        self.classical_bits += bits
        return labels

    def _measure_plan(self, mapping: Dict[int, int], plan: DecodePlan, alice_labels: Sequence[str]) -> OutcomeKey:
        for op, targets in plan.rotations:
            self.memory.apply(op, [mapping[t] for t in targets])
        alice = iter(alice_labels)
        key = []
        for step in plan.steps:
            if step.party == Actor.ALICE:
                key.append(next(alice))
            else:
                key.append(self.memory.measure([mapping[t] for t in step.targets], step.basis, self.rng).outcome_label)
        return tuple(key)

    def _lookup(self, plan: DecodePlan, key: OutcomeKey) -> str:
        message = plan.lookup(key)
        if message is None:
            raise InconsistentOutcome(f"outcome {key} has zero probability under every message")
        return message

    def _result(self, decoded: Optional[str]) -> SessionResult:
        inference = self.agent.finalize(self.config.n) if self.agent is not None else None
        return SessionResult(
            protocol=self.config.protocol,
            n=self.config.n,
            decoded_message=decoded,
            aborted=self.abort_reason is not None,
            abort_reason=self.abort_reason,
            observed_error_rate=self.error_rate,
            sifted_decoy_count=self.sifted_total,
            transcript=self.transcript,
            alice_key=self.alice_key,
            eve_inference=inference.inferred_message if inference else None,
            rounds_completed=self.rounds_completed,
            decode_paths_agree=self.decode_paths_agree,
            classical_bits=self.classical_bits,
        )


# ------------------------------------------------------------------
# Entry points
# ------------------------------------------------------------------

def _run(expected: Protocol, config: SessionConfig, eve: Optional[EveModel]) -> SessionResult:
    if config.protocol != expected:
        raise ValueError(f"expected a {expected.value} session, got {config.protocol.value}")
    return ProtocolSession(config, eve).run()


def run_dsqc1(config: SessionConfig, eve: Optional[EveModel] = None) -> SessionResult:
    return _run(Protocol.DSQC1, config, eve)


def run_dsqc2(config: SessionConfig, eve: Optional[EveModel] = None) -> SessionResult:
    return _run(Protocol.DSQC2, config, eve)


def run_qsdc(config: SessionConfig, eve: Optional[EveModel] = None) -> SessionResult:
    return _run(Protocol.QSDC, config, eve)


def run_qkd(config: SessionConfig, eve: Optional[EveModel] = None) -> SessionResult:
    """Random key over the configured carrier; Bob's decoded message is his key"""
    return _run(Protocol.QKD, config, eve)


def run_session(config: SessionConfig, eve: Optional[EveModel] = None) -> SessionResult:
    return ProtocolSession(config, eve).run()
