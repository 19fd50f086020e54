# ============================================
# FILE: src/codebook.py
# Encoding codebooks: the two built-in DSQC channels, decode plans,
# decodability validation and the JSON channel-spec loader
# ============================================

import json
import logging
from dataclasses import dataclass, field, replace
from itertools import chain, combinations, product
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from exceptions import (
    BadTargets,
    CodebookMismatch,
    DimensionMismatch,
    IncompleteBasis,
    InconsistentOutcome,
    ParseError,
    ValidationFailed,
    ZeroVector,
)
from models import Actor, ChannelSpecDocument, ValidationReport
from quantum_core import (
    BELL_BASIS,
    BELL_STATES,
    CONTROLLED_Z,
    EXACT_TOL,
    GHZ_LIKE_BASIS,
    HADAMARD,
    IDENTITY,
    INPUT_TOL,
    KET_0,
    KET_1,
    PAULI_IY,
    PAULI_X,
    PAULI_Z,
    Z_BASIS,
    BasisSpec,
    MeasurementRecord,
    PureState,
    UnitaryOp,
    apply_unitary,
    bell_product,
    computational_basis,
    computational_state,
    inner_product,
    is_unitary_matrix,
    kron_ops,
    make_state,
    measure,
    nearest_unitary,
    product_basis,
    superpose,
    tensor,
)

logger = logging.getLogger(__name__)

OutcomeKey = Tuple[str, ...]

# (Alice home Z outcome, Bob Bell outcome) -> message
DSQC1_DECODE_TABLE: Dict[OutcomeKey, str] = {
    ("0", "phi+"): "01",
    ("0", "phi-"): "10",
    ("0", "psi+"): "00",
    ("0", "psi-"): "11",
    ("1", "phi+"): "00",
    ("1", "phi-"): "11",
    ("1", "psi+"): "01",
    ("1", "psi-"): "10",
}


@dataclass(frozen=True)
class CodebookEntry:
    op: UnitaryOp
    targets: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class MeasurementStep:
    """One party measuring some qubits of a unit in one basis"""

    party: Actor
    basis: BasisSpec
    targets: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class DecodePlan:
    """Pre-measurement rotations, ordered measurement steps and the derived decode table.

    The steps jointly measure every qubit of the unit exactly once. Joint
    outcomes are tuples of per-step labels, ordered as the steps are.
    """

    name: str
    steps: Tuple[MeasurementStep, ...]
    rotations: Tuple[Tuple[UnitaryOp, Tuple[int, ...]], ...] = ()
    outcome_keys: Tuple[OutcomeKey, ...] = ()
    table: Dict[OutcomeKey, str] = field(default_factory=dict)
    ambiguous: Tuple[OutcomeKey, ...] = ()
    distributions: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def joint_targets(self) -> Tuple[int, ...]:
        return tuple(chain.from_iterable(step.targets for step in self.steps))

    def parties(self) -> Tuple[Actor, ...]:
        return tuple(step.party for step in self.steps)

    def rotate(self, state: PureState) -> PureState:
        for op, targets in self.rotations:
            state = apply_unitary(op, targets, state)
        return state

    def joint_probabilities(self, state: PureState) -> np.ndarray:
        """Born distribution over outcome_keys for a unit in this state"""
        state = self.rotate(state)
        for step in self.steps:
            state = apply_unitary(step.basis.to_computational(), step.targets, state)
        n = state.num_qubits
        psi = np.moveaxis(state.amplitudes.reshape([2] * n), list(self.joint_targets), list(range(n)))
        return np.abs(psi.reshape(-1)) ** 2

    def lookup(self, key: Sequence[str]) -> Optional[str]:
        return self.table.get(tuple(key))


@dataclass(frozen=True, eq=False)
class Codebook:
    """Initial state plus a message-indexed family of local unitaries"""

    name: str
    num_qubits: int
    message_bits: int
    initial_state: PureState
    entries: Dict[str, CodebookEntry]
    encoded_states: Dict[str, PureState]
    measurement_basis: BasisSpec
    home_qubits: Tuple[int, ...]
    travel_qubits: Tuple[int, ...]
    plan: DecodePlan
    alternate_plans: Dict[str, DecodePlan] = field(default_factory=dict)
    description: str = ""

    @property
    def messages(self) -> List[str]:
        return list(self.entries)

    @property
    def operator_arity(self) -> int:
        return max(entry.op.arity for entry in self.entries.values())

    def encode(self, message: str) -> PureState:
        try:
            return self.encoded_states[message]
        except KeyError:
            raise InconsistentOutcome(f"'{message}' is not a message of codebook '{self.name}'") from None

    def __repr__(self) -> str:
        return f"Codebook({self.name}, n={self.num_qubits}, k={self.message_bits})"


# ------------------------------------------------------------------
# Construction helpers
# ------------------------------------------------------------------

def derive_plan(
    name: str,
    steps: Sequence[MeasurementStep],
    encoded_states: Mapping[str, PureState],
    rotations: Sequence[Tuple[UnitaryOp, Sequence[int]]] = (),
    tol: float = EXACT_TOL,
) -> DecodePlan:
    """Build the decode table of a measurement plan from the encoded states"""
    steps = tuple(steps)
    rotations = tuple((op, tuple(targets)) for op, targets in rotations)
    num_qubits = next(iter(encoded_states.values())).num_qubits

    covered = sorted(chain.from_iterable(step.targets for step in steps))
    if covered != list(range(num_qubits)):
        raise BadTargets(f"plan '{name}' must measure each of the {num_qubits} qubits once, got {covered}")

    keys = tuple(product(*(step.basis.outcome_labels for step in steps)))
    draft = DecodePlan(name=name, steps=steps, rotations=rotations, outcome_keys=keys)
    distributions = {msg: draft.joint_probabilities(state) for msg, state in encoded_states.items()}

    table: Dict[OutcomeKey, str] = {}
    ambiguous: List[OutcomeKey] = []
    for index, key in enumerate(keys):
        hits = [msg for msg, probs in distributions.items() if probs[index] > tol]
        if len(hits) == 1:
            table[key] = hits[0]
        elif len(hits) > 1:
            ambiguous.append(key)

    if ambiguous:
        logger.debug(f"Plan '{name}': {len(ambiguous)} ambiguous outcomes")
    return DecodePlan(
        name=name,
        steps=steps,
        rotations=rotations,
        outcome_keys=keys,
        table=table,
        ambiguous=tuple(ambiguous),
        distributions=distributions,
    )


def make_codebook(
    name: str,
    initial_state: PureState,
    entries: Mapping[str, Tuple[UnitaryOp, Sequence[int]]],
    home_qubits: Sequence[int],
    steps: Sequence[MeasurementStep],
    rotations: Sequence[Tuple[UnitaryOp, Sequence[int]]] = (),
    tol: float = EXACT_TOL,
    description: str = "",
) -> Codebook:
    """Apply every entry to the initial state and derive the primary decode plan"""
    n = initial_state.num_qubits
    message_bits = {len(bits) for bits in entries}
    if len(message_bits) != 1:
        raise DimensionMismatch(f"codebook '{name}' mixes message lengths {sorted(message_bits)}")

    home = tuple(home_qubits)
    if len(set(home)) != len(home) or any(not 0 <= q < n for q in home):
        raise BadTargets(f"home qubits {home} are not distinct qubits of a {n}-qubit state")
    travel = tuple(q for q in range(n) if q not in home)

    typed_entries = {bits: CodebookEntry(op, tuple(targets)) for bits, (op, targets) in entries.items()}
    encoded = {bits: apply_unitary(e.op, e.targets, initial_state) for bits, e in typed_entries.items()}
    plan = derive_plan("primary", steps, encoded, rotations, tol)

    return Codebook(
        name=name,
        num_qubits=n,
        message_bits=message_bits.pop(),
        initial_state=initial_state,
        entries=typed_entries,
        encoded_states=encoded,
        measurement_basis=_joint_basis(plan),
        home_qubits=home,
        travel_qubits=travel,
        plan=plan,
        description=description,
    )


def _joint_basis(plan: DecodePlan) -> BasisSpec:
    if len(plan.steps) == 1:
        return plan.steps[0].basis
    return product_basis(*(step.basis for step in plan.steps))


def _with_alternate(cb: Codebook, plan: DecodePlan) -> Codebook:
    alternates = dict(cb.alternate_plans)
    alternates[plan.name] = plan
    return replace(cb, alternate_plans=alternates)


# ------------------------------------------------------------------
# Built-in codebooks
# ------------------------------------------------------------------

def lambda_state() -> PureState:
    """½(|010⟩+|100⟩+|001⟩+|111⟩) = (|0⟩|φ+⟩ + |1⟩|ψ+⟩)/√2"""
    return superpose([
        (1, tensor(KET_0, BELL_STATES["phi+"])),
        (1, tensor(KET_1, BELL_STATES["psi+"])),
    ])


def zeta_state() -> PureState:
    """(|ψ+⟩|0⟩ + |ψ-⟩|1⟩)/√2"""
    return bell_product([(1, "psi+", "0"), (1, "psi-", "1")])


def build_dsqc1_codebook() -> Codebook:
    """Two bits per triplet; Alice keeps qubit 0 and announces its Z outcome"""
    entries = {
        "00": (kron_ops(PAULI_X, IDENTITY), (0, 1)),
        "01": (kron_ops(IDENTITY, IDENTITY), (0, 1)),
        "10": (kron_ops(IDENTITY, PAULI_Z), (0, 1)),
        "11": (kron_ops(IDENTITY, PAULI_IY), (0, 1)),
    }
    steps = [
        MeasurementStep(Actor.ALICE, Z_BASIS, (0,)),
        MeasurementStep(Actor.BOB, BELL_BASIS, (1, 2)),
    ]
    cb = make_codebook(
        "dsqc1", lambda_state(), entries, home_qubits=(0,), steps=steps,
        description="GHZ-like triplet, home qubit 0, Bell measurement on the travel pair",
    )
    if cb.plan.table != DSQC1_DECODE_TABLE:
        raise CodebookMismatch("derived DSQC-1 decode table disagrees with the stored table")
    return cb


def dsqc2_entries() -> Dict[str, Tuple[UnitaryOp, Tuple[int, int]]]:
    ops = {
        "000": (IDENTITY, IDENTITY),
        "001": (PAULI_X, PAULI_X),
        "010": (PAULI_Z, IDENTITY),
        "011": (PAULI_IY, IDENTITY),
        "100": (IDENTITY, PAULI_X),
        "101": (PAULI_X, IDENTITY),
        "110": (IDENTITY, PAULI_IY),
        "111": (PAULI_IY, PAULI_X),
    }
    return {bits: (kron_ops(*pair), (0, 1)) for bits, pair in ops.items()}


def bell_and_z_plan(encoded_states: Mapping[str, PureState]) -> DecodePlan:
    """Bell on (0,1) and Z on 2 after CZ(2,0) and H(2).

    The rotation maps each GHZ-like basis state onto a Bell state times a
    computational state, so the two decode paths discriminate the same states.
    """
    return derive_plan(
        "bell_and_z",
        [MeasurementStep(Actor.BOB, BELL_BASIS, (0, 1)), MeasurementStep(Actor.BOB, Z_BASIS, (2,))],
        encoded_states,
        rotations=[(CONTROLLED_Z, (2, 0)), (HADAMARD, (2,))],
    )


def build_dsqc2_codebook() -> Codebook:
    """Three bits per triplet by dense coding on qubits (0,1); every qubit travels"""
    cb = make_codebook(
        "dsqc2", zeta_state(), dsqc2_entries(), home_qubits=(),
        steps=[MeasurementStep(Actor.BOB, GHZ_LIKE_BASIS, (0, 1, 2))],
        description="GHZ-like dense coding, decoded in the GHZ-like basis",
    )
    return _with_alternate(cb, bell_and_z_plan(cb.encoded_states))


def build_qsdc_codebook() -> Codebook:
    """Same channel as DSQC2; the three qubits travel in separate rounds"""
    cb = build_dsqc2_codebook()
    return replace(cb, name="qsdc")


def build_example_states() -> Dict[str, PureState]:
    """Channel-candidate seeds: Ω, Q4 and Q5"""
    omega = superpose([
        (1, tensor(KET_0, tensor(BELL_STATES["phi+"], KET_0))),
        (1, tensor(KET_1, tensor(BELL_STATES["phi-"], KET_1))),
    ])
    q4 = superpose((1, computational_state(k)) for k in ("0000", "0101", "1000", "1110"))
    q5 = superpose((1, computational_state(k)) for k in ("0000", "1011", "1101", "1110"))
    return {"omega": omega, "q4": q4, "q5": q5}


# ------------------------------------------------------------------
# Decoding and validation
# ------------------------------------------------------------------

def _labels_of(outcomes: Union[MeasurementRecord, Sequence[Union[MeasurementRecord, str]]]) -> OutcomeKey:
    if isinstance(outcomes, MeasurementRecord):
        outcomes = [outcomes]
    return tuple(o.outcome_label if isinstance(o, MeasurementRecord) else str(o) for o in outcomes)


def decode(cb: Codebook, outcomes, plan: Optional[DecodePlan] = None) -> str:
    """Unique message consistent with the outcomes of the plan's measurement steps"""
    plan = plan or cb.plan
    key = _labels_of(outcomes)
    message = plan.lookup(key)
    if message is None:
        raise InconsistentOutcome(f"outcome {key} has zero probability under every message of '{cb.name}'")
    return message


def measure_with_plan(
    cb: Codebook, state: PureState, rng: np.random.Generator, plan: Optional[DecodePlan] = None
) -> List[MeasurementRecord]:
    """Run the plan's rotations and measurement steps on one unit"""
    plan = plan or cb.plan
    state = plan.rotate(state)
    records = []
    for step in plan.steps:
        record = measure(state, step.basis, step.targets, rng)
        records.append(record)
        state = record.collapsed
    return records


def validate_codebook(cb: Codebook, tol: float = EXACT_TOL) -> ValidationReport:
    """Orthogonality, unitarity, decodability and dense-coding classification"""
    problems = []

    unitaries_valid = all(is_unitary_matrix(e.op.matrix, tol) for e in cb.entries.values())
    if not unitaries_valid:
        problems.append("an entry operator is not unitary")

    states = list(cb.encoded_states.items())
    max_overlap = 0.0
    for (msg_a, a), (msg_b, b) in combinations(states, 2):
        overlap = abs(inner_product(a, b))
        if overlap > max_overlap:
            max_overlap = overlap
        if overlap >= tol:
            problems.append(f"encoded states {msg_a} and {msg_b} overlap ({overlap:.3e})")
    normalized = all(abs(s.norm() - 1.0) < tol for _, s in states)
    complete = len(states) == 2 ** cb.message_bits
    if not complete:
        problems.append(f"{len(states)} entries for {cb.message_bits}-bit messages")
    orthonormal = normalized and max_overlap < tol

    decodable = orthonormal and complete and not cb.plan.ambiguous
    if orthonormal and cb.plan.ambiguous:
        problems.append(f"measurement cannot separate the states ({len(cb.plan.ambiguous)} ambiguous outcomes)")

    m, n = cb.operator_arity, cb.num_qubits
    dense = m < n
    if not orthonormal:
        note = "encoded states are not orthonormal: no DSQC channel"
    elif dense:
        note = f"{m}-qubit operators on a {n}-qubit state: dense coding and DSQC possible"
    else:
        note = f"operators act on all {n} qubits: DSQC possible, dense coding not"

    return ValidationReport(
        name=cb.name,
        orthonormal=orthonormal,
        unitaries_valid=unitaries_valid,
        max_cross_overlap=float(max_overlap),
        operator_arity=m,
        register_size=n,
        dense_coding_capable=dense,
        decodable=decodable,
        encoded_state_count=len(states),
        classification_note=note,
        problems=problems[:20],
    )


def codebooks_equivalent(a: Codebook, b: Codebook, tol: float = INPUT_TOL) -> bool:
    """Same messages with encoded states equal up to global phase"""
    if a.num_qubits != b.num_qubits or set(a.encoded_states) != set(b.encoded_states):
        return False
    return all(abs(inner_product(a.encoded_states[m], b.encoded_states[m])) > 1.0 - tol for m in a.encoded_states)


# ------------------------------------------------------------------
# Channel-spec documents
# ------------------------------------------------------------------

def _complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def _matrix(rows: Sequence[Sequence[Any]]) -> np.ndarray:
    return np.array([[_complex(v) for v in row] for row in rows], dtype=complex)


def _location(loc: Sequence[Any]) -> str:
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts)


def _parse_document(document: Union[str, bytes, Mapping[str, Any], ChannelSpecDocument]) -> ChannelSpecDocument:
    if isinstance(document, ChannelSpecDocument):
        return document
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, f"line {e.lineno} column {e.colno}") from e
    if not isinstance(document, Mapping):
        raise ParseError("channel spec must be a JSON object", "$")
    try:
        return ChannelSpecDocument.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        raise ParseError(first["msg"], _location(first["loc"]) or "$") from e


def _spec_steps(doc: ChannelSpecDocument, home: Tuple[int, ...]) -> List[MeasurementStep]:
    n = doc.num_qubits
    travel = [q for q in range(n) if q not in home]
    basis = doc.measurement_basis

    if isinstance(basis, list):
        if home:
            raise ParseError("an inline basis is measured by Bob alone; home_qubits must be empty", "measurement_basis")
        try:
            rows = _matrix(basis)
        except ValueError as e:
            raise ParseError(f"inline basis is not rectangular ({e})", "measurement_basis") from e
        if rows.shape != (2 ** n, 2 ** n):
            raise ParseError(f"inline basis needs {2 ** n} vectors of length {2 ** n}", "measurement_basis")
        if not is_unitary_matrix(rows.conj(), INPUT_TOL):
            raise ParseError("inline basis vectors are not orthonormal within 1e-9", "measurement_basis")
        rows = nearest_unitary(rows.conj()).conj()
        labels = doc.outcome_labels or [f"v{i}" for i in range(2 ** n)]
        try:
            inline = BasisSpec(doc.name or "inline", n, tuple(make_state(n, r) for r in rows), tuple(labels))
        except (IncompleteBasis, DimensionMismatch) as e:
            raise ParseError(str(e), "outcome_labels") from e
        return [MeasurementStep(Actor.BOB, inline, tuple(range(n)))]

    if basis == "ghz_like":
        if n != 3 or home:
            raise ParseError("ghz_like needs 3 qubits, all travelling", "measurement_basis")
        return [MeasurementStep(Actor.BOB, GHZ_LIKE_BASIS, (0, 1, 2))]

    if basis == "computational":
        steps = [MeasurementStep(Actor.ALICE, computational_basis(len(home)), home)] if home else []
        return steps + [MeasurementStep(Actor.BOB, computational_basis(len(travel)), tuple(travel))]

    if basis == "bell_plus_z":
        steps = [MeasurementStep(Actor.ALICE, Z_BASIS, (q,)) for q in home]
        for i in range(0, len(travel) - 1, 2):
            steps.append(MeasurementStep(Actor.BOB, BELL_BASIS, (travel[i], travel[i + 1])))
        if len(travel) % 2:
            steps.append(MeasurementStep(Actor.BOB, Z_BASIS, (travel[-1],)))
        return steps

    raise ParseError(f"unknown measurement basis '{basis}'", "measurement_basis")


def load_channel_spec(document: Union[str, bytes, Mapping[str, Any], ChannelSpecDocument]) -> Codebook:
    """Build and validate a codebook from a channel-spec document"""
    doc = _parse_document(document)
    n, k = doc.num_qubits, doc.message_bits

    if len(doc.initial_state) != 2 ** n:
        raise ParseError(f"{n} qubits need {2 ** n} amplitudes, got {len(doc.initial_state)}", "initial_state")
    try:
        initial = make_state(n, [_complex(v) for v in doc.initial_state])
    except ZeroVector as e:
        raise ParseError(str(e), "initial_state") from e

    home = tuple(doc.home_qubits)
    if len(set(home)) != len(home) or any(not 0 <= q < n for q in home):
        raise ParseError(f"home qubits {home} are not distinct qubits of the register", "home_qubits")

    seen = set()
    entries: Dict[str, Tuple[UnitaryOp, Tuple[int, ...]]] = {}
    non_unitary: List[str] = []
    arities = []
    for i, entry in enumerate(doc.entries):
        where = f"entries[{i}]"
        if len(entry.bits) != k or set(entry.bits) - {"0", "1"}:
            raise ParseError(f"'{entry.bits}' is not a {k}-bit string", f"{where}.bits")
        if entry.bits in seen:
            raise ParseError(f"message '{entry.bits}' listed twice", f"{where}.bits")
        seen.add(entry.bits)

        targets = tuple(entry.targets)
        if len(set(targets)) != len(targets) or any(not 0 <= t < n for t in targets):
            raise ParseError(f"targets {list(targets)} are not distinct qubits of the register", f"{where}.targets")
        arity = len(targets)
        arities.append(arity)
        try:
            matrix = _matrix(entry.matrix)
        except ValueError as e:
            raise ParseError(f"matrix is not rectangular ({e})", f"{where}.matrix") from e
        if matrix.shape != (2 ** arity, 2 ** arity):
            raise ParseError(f"{arity} targets need a {2 ** arity}x{2 ** arity} matrix", f"{where}.matrix")

        if not is_unitary_matrix(matrix, INPUT_TOL):
            non_unitary.append(entry.bits)
            continue
        entries[entry.bits] = (UnitaryOp(arity, nearest_unitary(matrix), entry.name or entry.bits), targets)

    if non_unitary:
        m = max(arities)
        report = ValidationReport(
            name=doc.name,
            orthonormal=False,
            unitaries_valid=False,
            max_cross_overlap=0.0,
            operator_arity=m,
            register_size=n,
            dense_coding_capable=m < n,
            decodable=False,
            encoded_state_count=len(entries),
            classification_note="non-unitary operators: encoded states not evaluated",
            problems=[f"entry {bits} is not unitary within 1e-9" for bits in non_unitary],
        )
        logger.warning(f"❌ Channel '{doc.name}': {len(non_unitary)} non-unitary entries")
        raise ValidationFailed(f"channel '{doc.name}' has non-unitary entries {non_unitary}", report)

    steps = _spec_steps(doc, home)
    cb = make_codebook(doc.name, initial, entries, home, steps, tol=INPUT_TOL, description=doc.description)
    report = validate_codebook(cb, INPUT_TOL)
    if not report.valid:
        logger.warning(f"❌ Channel '{doc.name}' failed validation: {report.problems[:3]}")
        raise ValidationFailed(f"channel '{doc.name}' is not a decodable DSQC channel", report)

    logger.info(f"✅ Channel '{doc.name}' loaded: n={n}, k={k}, m={report.operator_arity}")
    return cb


def load_channel_spec_file(path: Union[str, Path]) -> Codebook:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(e.strerror or str(e), str(path)) from e
    return load_channel_spec(text)
