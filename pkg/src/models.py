import json
from enum import Enum
from fractions import Fraction
from typing import Annotated, Any, Dict, List, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_serializer,
    field_validator,
    model_validator,
)


class Protocol(str, Enum):
    """Protocol enumeration"""
    DSQC1 = "DSQC1"
    DSQC2 = "DSQC2"
    QSDC = "QSDC"
    QKD = "QKD"


class Actor(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"
    EVE = "Eve"
    CHANNEL = "Channel"
    SIMULATOR = "Simulator"  # report records in structured output


class EveKind(str, Enum):
    """Adversary strategies"""
    NONE = "none"
    INTERCEPT_RESEND_FAKE = "intercept"
    DECOY_MEASURE_RESEND = "decoy"


class FakeStatePolicy(str, Enum):
    RANDOM_COMPUTATIONAL = "random_computational"
    FIXED_ZERO = "fixed_zero"


class DecoyDialogue(str, Enum):
    """Who announces what during the decoy check"""
    SIFT = "sift"                      # Bob announces basis + outcome, mismatched bases discarded
    ANNOUNCE_BASIS = "announce_basis"  # Alice announces preparation bases, no sifting loss


class AbortReason(str, Enum):
    ERROR_RATE_EXCEEDED = "ErrorRateExceeded"
    LENGTH_MISMATCH = "LengthMismatch"


class OrderCost(str, Enum):
    PER_TRAVEL_QUBIT = "per_travel_qubit"
    INFORMATION_THEORETIC = "information_theoretic"


class OutputFormat(str, Enum):
    TEXT = "text"
    STRUCTURED = "structured"


# Message bits carried by one entangled unit
BITS_PER_UNIT = {Protocol.DSQC1: 2, Protocol.DSQC2: 3, Protocol.QSDC: 3}


def carrier_of(protocol: Protocol, qkd_carrier: Protocol = Protocol.DSQC2) -> Protocol:
    return qkd_carrier if protocol == Protocol.QKD else protocol


# ------------------------------------------------------------------
# Sessions
# ------------------------------------------------------------------

class SessionConfig(BaseModel):
    """Everything that determines one protocol run"""
    protocol: Protocol = Field(description="Protocol to run")
    n: int = Field(ge=1, description="Number of entangled units")
    message: Optional[str] = Field(None, description="Message bit string (ignored for QKD)")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Session seed")
    error_threshold: float = Field(default=0.0, ge=0.0, le=1.0, description="Abort when decoy error rate exceeds this")
    reorder_enabled: Optional[bool] = Field(None, description="Unit order rearrangement; None = protocol default")
    decoy_count: Optional[int] = Field(None, ge=0, description="Decoys per session; None = one per travel qubit")
    decoy_dialogue: DecoyDialogue = Field(default=DecoyDialogue.SIFT)
    qkd_carrier: Protocol = Field(default=Protocol.DSQC2, description="Protocol a QKD session runs on")

    @field_validator("message")
    @classmethod
    def _bits_only(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and set(value) - {"0", "1"}:
            raise ValueError("message must be a bit string")
        return value

    @field_validator("qkd_carrier")
    @classmethod
    def _real_carrier(cls, value: Protocol) -> Protocol:
        if value == Protocol.QKD:
            raise ValueError("QKD cannot be its own carrier")
        return value

    @model_validator(mode="after")
    def _message_matches_capacity(self) -> "SessionConfig":
        if self.protocol == Protocol.QKD:
            return self
        if self.message is None:
            raise ValueError(f"{self.protocol.value} needs a message")
        if len(self.message) != self.capacity:
            raise ValueError(
                f"{self.protocol.value} with n={self.n} carries {self.capacity} bits, message has {len(self.message)}"
            )
        return self

    @property
    def carrier(self) -> Protocol:
        return carrier_of(self.protocol, self.qkd_carrier)

    @property
    def capacity(self) -> int:
        return BITS_PER_UNIT[self.carrier] * self.n

    @property
    def reorder(self) -> bool:
        if self.reorder_enabled is not None:
            return self.reorder_enabled
        return self.carrier != Protocol.QSDC


class DecoySlot(BaseModel):
    """One decoy qubit inserted into a transmitted sequence"""
    position: int = Field(ge=0, description="Index within the transmitted sequence")
    prepared_state: str = Field(description="One of 0, 1, +, -")
    preparation_basis: str = Field(description="Z or X")

    @model_validator(mode="after")
    def _state_in_basis(self) -> "DecoySlot":
        allowed = {"Z": ("0", "1"), "X": ("+", "-")}
        if self.prepared_state not in allowed.get(self.preparation_basis, ()):
            raise ValueError(f"decoy state {self.prepared_state} is not in basis {self.preparation_basis}")
        return self


class OrderPermutation(BaseModel):
    """Unit-level permutation: shuffled[i] = units[forward[i]]"""
    forward: List[int] = Field(description="Bijection on 0..n-1")

    @field_validator("forward")
    @classmethod
    def _bijection(cls, value: List[int]) -> List[int]:
        if sorted(value) != list(range(len(value))):
            raise ValueError("forward is not a permutation")
        return value

    def inverse(self) -> "OrderPermutation":
        inverse = [0] * len(self.forward)
        for i, source in enumerate(self.forward):
            inverse[source] = i
        return OrderPermutation(forward=inverse)

    def apply(self, units: List[Any]) -> List[Any]:
        return [units[source] for source in self.forward]

    def restore(self, shuffled: List[Any]) -> List[Any]:
        return self.inverse().apply(shuffled)


class TranscriptEvent(BaseModel):
    step_index: int = Field(ge=0)
    actor: Actor
    event_kind: str
    payload: Dict[str, Any] = Field(default_factory=dict)

    def to_line(self) -> str:
        return json.dumps(self.model_dump(mode="json"), ensure_ascii=False)


class SessionTranscript(BaseModel):
    """Ordered event log of one session"""
    events: List[TranscriptEvent] = Field(default_factory=list)

    def record(self, actor: Actor, event_kind: str, **payload: Any) -> TranscriptEvent:
        event = TranscriptEvent(step_index=len(self.events), actor=actor, event_kind=event_kind, payload=payload)
        self.events.append(event)
        return event

    def of_kind(self, event_kind: str) -> List[TranscriptEvent]:
        return [e for e in self.events if e.event_kind == event_kind]

    def kinds(self) -> List[str]:
        return [e.event_kind for e in self.events]

    def to_jsonl(self) -> str:
        return "".join(event.to_line() + "\n" for event in self.events)


class SessionResult(BaseModel):
    """Outcome of one protocol session"""
    protocol: Protocol
    n: int
    decoded_message: Optional[str] = Field(None, description="Bob's decoded message; absent when aborted")
    aborted: bool = Field(default=False)
    abort_reason: Optional[AbortReason] = Field(None)
    observed_error_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    sifted_decoy_count: int = Field(default=0, ge=0)
    transcript: SessionTranscript = Field(default_factory=SessionTranscript)

    alice_key: Optional[str] = Field(None, description="Alice's random key (QKD only)")
    eve_inference: Optional[str] = Field(None, description="Message the adversary inferred, if any")
    rounds_completed: int = Field(default=0, description="Transmission rounds that passed their check")
    decode_paths_agree: Optional[bool] = Field(None, description="Dual-decode cross-check (DSQC2 carrier)")
    classical_bits: int = Field(default=0, description="Decoding-related classical bits exchanged")

    @model_validator(mode="after")
    def _aborted_has_no_message(self) -> "SessionResult":
        if self.aborted and self.decoded_message is not None:
            raise ValueError("an aborted session cannot carry a decoded message")
        return self


# ------------------------------------------------------------------
# Adversary
# ------------------------------------------------------------------

class EveModel(BaseModel):
    """Adversary strategy descriptor"""
    kind: EveKind = Field(default=EveKind.NONE)
    assumed_home_outcome: int = Field(default=1, ge=0, le=1, description="Home bit Eve assumes (DSQC1 only)")
    fake_state_policy: FakeStatePolicy = Field(default=FakeStatePolicy.RANDOM_COMPUTATIONAL)
    attack_rounds: Optional[List[int]] = Field(None, description="1-based rounds attacked; None = all")

    def attacks_round(self, round_number: int) -> bool:
        if self.kind == EveKind.NONE:
            return False
        return self.attack_rounds is None or round_number in self.attack_rounds


class EveInference(BaseModel):
    inferred_message: str = Field(description="Eve's guess, in transmitted unit order")
    measured_units: int = Field(default=0, description="Units she discriminated by measurement")
    guessed_units: int = Field(default=0, description="Units she could only guess")


_Probability = Annotated[float, Field(ge=0.0, le=1.0)]


class LeakageReport(BaseModel):
    """Leak-before-detection statistics of a Monte Carlo study"""
    protocol: Protocol
    eve_kind: EveKind
    trials: int = Field(ge=1)
    units_per_trial: int = Field(ge=1)
    reorder_enabled: bool
    per_message_accuracy: Optional[_Probability] = Field(None, description="Fraction of units Eve decoded exactly")
    per_bit_accuracy: Optional[_Probability] = Field(None, description="Fraction of message bits Eve got right")
    uniform_guess_estimate: Optional[_Probability] = Field(
        None,
        serialization_alias="paper_formula_estimate",
        description="Analytic leakage with wrong-branch decodes modelled as uniform guesses",
    )
    table_exact_message_estimate: Optional[_Probability] = Field(
        None, description="Analytic per-unit accuracy from the exact decode table"
    )
    table_exact_bit_estimate: Optional[_Probability] = Field(None)
    detection_probability: _Probability = Field(default=0.0)
    sifted_decoys_mean: float = Field(default=0.0, ge=0.0)


# ------------------------------------------------------------------
# Metrics
# ------------------------------------------------------------------

def percent(value: Fraction) -> float:
    """Percentage rounded to two decimals"""
    return round(float(value) * 100, 2)


class EfficiencyReport(BaseModel):
    """Qubit-efficiency accounting for one protocol"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    protocol: str
    n: int = Field(ge=1)
    c: int = Field(ge=0, description="Classical message bits transmitted")
    q: int = Field(gt=0, description="Qubits used: travel + home + decoy")
    b: int = Field(ge=0, description="Classical bits exchanged for decoding")
    eta1: Fraction
    eta2: Fraction
    order_cost: OrderCost = Field(default=OrderCost.PER_TRAVEL_QUBIT)
    convention_note: str = Field(default="")

    @model_validator(mode="after")
    def _eta_order(self) -> "EfficiencyReport":
        if self.eta2 > self.eta1 or (self.eta1 == self.eta2) != (self.b == 0 or self.c == 0):
            raise ValueError("eta1 >= eta2 with equality only when b = 0")
        return self

    @field_serializer("eta1", "eta2")
    def _fraction_text(self, value: Fraction) -> str:
        return str(value)

    @computed_field
    @property
    def eta1_percent(self) -> float:
        return percent(self.eta1)

    @computed_field
    @property
    def eta2_percent(self) -> float:
        return percent(self.eta2)


class ComparisonRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    protocol_label: str
    eta1: Fraction
    eta2: Fraction
    state_label: str
    computed: bool = Field(default=False, description="True for rows derived from account()")

    @field_serializer("eta1", "eta2")
    def _fraction_text(self, value: Fraction) -> str:
        return str(value)

    @computed_field
    @property
    def eta1_percent(self) -> float:
        return percent(self.eta1)

    @computed_field
    @property
    def eta2_percent(self) -> float:
        return percent(self.eta2)


# ------------------------------------------------------------------
# Channels
# ------------------------------------------------------------------

class ValidationReport(BaseModel):
    """Decodability check of a (state, unitary family) channel"""
    name: str = Field(default="")
    orthonormal: bool
    unitaries_valid: bool
    max_cross_overlap: float = Field(ge=0.0)
    operator_arity: int = Field(ge=0, description="m: largest operator arity")
    register_size: int = Field(ge=1, description="n: qubits in the shared state")
    dense_coding_capable: bool
    decodable: bool = Field(default=True, description="Decode table unambiguous over all outcomes")
    encoded_state_count: int = Field(default=0)
    classification_note: str = Field(default="")
    problems: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _dense_coding_iff_local(self) -> "ValidationReport":
        if self.dense_coding_capable != (self.operator_arity < self.register_size):
            raise ValueError("dense_coding_capable must equal m < n")
        return self

    @property
    def valid(self) -> bool:
        return self.orthonormal and self.unitaries_valid and self.decodable


# A complex number: bare real or [re, im]
ComplexValue = Union[float, Annotated[List[float], Field(min_length=2, max_length=2)]]


class ChannelEntrySpec(BaseModel):
    bits: str = Field(description="Message bit string")
    targets: List[int] = Field(min_length=1, description="Qubits the operator acts on, most significant first")
    matrix: List[List[ComplexValue]] = Field(description="2^m x 2^m operator matrix")
    name: str = Field(default="")


class ChannelSpecDocument(BaseModel):
    """Channel-spec file schema"""
    model_config = ConfigDict(extra="forbid")

    name: str
    num_qubits: int = Field(ge=1, le=16)
    message_bits: int = Field(ge=1)
    initial_state: List[ComplexValue]
    entries: List[ChannelEntrySpec] = Field(min_length=1)
    home_qubits: List[int] = Field(default_factory=list)
    measurement_basis: Union[str, List[List[ComplexValue]]] = Field(default="computational")
    outcome_labels: Optional[List[str]] = Field(None, description="Labels for an inline basis")
    description: str = Field(default="")


# ------------------------------------------------------------------
# CLI
# ------------------------------------------------------------------

class CliConfig(BaseModel):
    """Validated command line"""
    subcommand: str
    protocol: Optional[Protocol] = None
    n: Optional[int] = Field(None, ge=1)
    message: Optional[str] = None
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threshold: float = Field(default=0.0, ge=0.0, le=1.0)
    eve: EveKind = Field(default=EveKind.NONE)
    trials: int = Field(default=1000, ge=1)
    output_format: OutputFormat = Field(default=OutputFormat.TEXT)
    reorder: Optional[bool] = None
    decoys: Optional[int] = Field(None, ge=0)
    channel_spec_path: Optional[str] = None
    transcript: bool = Field(default=False, description="Print the transcript after the summary")
    order_cost: OrderCost = Field(default=OrderCost.PER_TRAVEL_QUBIT)
