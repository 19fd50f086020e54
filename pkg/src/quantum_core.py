# ============================================
# FILE: src/quantum_core.py
# Exact small-register pure-state mathematics: states, operators,
# projective measurement and the session qubit memory
# ============================================

import logging
from dataclasses import dataclass, field
from itertools import count
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import BadTargets, DimensionMismatch, IncompleteBasis, NotUnitary, ZeroVector

logger = logging.getLogger(__name__)

# Exact-math checks vs user-supplied inputs
EXACT_TOL = 1e-12
INPUT_TOL = 1e-9
MAX_QUBITS = 16

LABEL_SEPARATOR = "|"


def _read_only(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector; qubit 0 is the leftmost (most significant) ket label"""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise DimensionMismatch(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")

        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 ** self.num_qubits:
            raise DimensionMismatch(
                f"{self.num_qubits} qubits need {2 ** self.num_qubits} amplitudes, got {amps.size}"
            )
        deviation = abs(float(np.vdot(amps, amps).real) - 1.0)
        if deviation > EXACT_TOL:
            raise ZeroVector(f"state is not normalized (|norm² - 1| = {deviation:.3e})")

        object.__setattr__(self, "amplitudes", _read_only(amps))

    @property
    def dimension(self) -> int:
        return 2 ** self.num_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_pairs(self) -> List[List[float]]:
        """[[re, im], ...] in lexicographic order, the channel-spec encoding"""
        return [[float(a.real), float(a.imag)] for a in self.amplitudes]

    def ket_string(self, precision: int = 4) -> str:
        """Human-readable expansion over computational kets"""
        terms = []
        for index, amp in enumerate(self.amplitudes):
            if abs(amp) < EXACT_TOL:
                continue
            ket = format(index, f"0{self.num_qubits}b")
            value = complex(round(amp.real, precision), round(amp.imag, precision))
            coefficient = f"{value.real:g}" if value.imag == 0 else f"({value.real:g}{value.imag:+g}j)"
            terms.append(f"{coefficient}|{ket}⟩")
        return " + ".join(terms)

    def __repr__(self) -> str:
        return f"PureState({self.num_qubits}q: {self.ket_string()})"


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    """2^arity × 2^arity unitary; the first target is the most significant matrix index"""

    arity: int
    matrix: np.ndarray
    name: str = ""
    tolerance: float = EXACT_TOL

    def __post_init__(self):
        if self.arity < 1:
            raise DimensionMismatch(f"operator arity must be >= 1, got {self.arity}")
        matrix = np.array(self.matrix, dtype=complex)
        size = 2 ** self.arity
        if matrix.shape != (size, size):
            raise DimensionMismatch(f"arity {self.arity} needs a {size}x{size} matrix, got {matrix.shape}")
        if not is_unitary_matrix(matrix, self.tolerance):
            raise NotUnitary(f"operator '{self.name or '?'}' is not unitary within {self.tolerance:g}")
        object.__setattr__(self, "matrix", _read_only(matrix))

    def adjoint(self) -> "UnitaryOp":
        return UnitaryOp(self.arity, self.matrix.conj().T, f"{self.name}†", self.tolerance)

    def __matmul__(self, other: "UnitaryOp") -> "UnitaryOp":
        if other.arity != self.arity:
            raise DimensionMismatch("operator product needs equal arity")
        return UnitaryOp(self.arity, self.matrix @ other.matrix, f"{self.name}·{other.name}", self.tolerance)

    def __repr__(self) -> str:
        return f"UnitaryOp({self.name or 'anonymous'}, arity={self.arity})"


def is_unitary_matrix(matrix: np.ndarray, tol: float = EXACT_TOL) -> bool:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return False
    return bool(np.max(np.abs(matrix.conj().T @ matrix - np.eye(matrix.shape[0]))) <= tol)


def nearest_unitary(matrix: np.ndarray) -> np.ndarray:
    """Polar unitary factor of matrix (closest unitary in Frobenius norm)"""
    w, _, vh = np.linalg.svd(np.asarray(matrix, dtype=complex))
    return w @ vh


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Complete orthonormal measurement basis with one label per vector"""

    name: str
    num_qubits: int
    vectors: Tuple[PureState, ...]
    outcome_labels: Tuple[str, ...]
    tolerance: float = EXACT_TOL
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vectors = tuple(self.vectors)
        labels = tuple(self.outcome_labels)
        expected = 2 ** self.num_qubits
        if len(vectors) != expected:
            raise IncompleteBasis(f"basis '{self.name}' needs {expected} vectors, got {len(vectors)}")
        if len(labels) != len(vectors) or len(set(labels)) != len(labels):
            raise IncompleteBasis(f"basis '{self.name}' needs one distinct label per vector")
        if any(v.num_qubits != self.num_qubits for v in vectors):
            raise DimensionMismatch(f"basis '{self.name}' mixes register sizes")

        rows = np.array([v.amplitudes for v in vectors], dtype=complex)
        gram = rows.conj() @ rows.T
        overlap = float(np.max(np.abs(gram - np.eye(expected))))
        if overlap > self.tolerance:
            raise IncompleteBasis(f"basis '{self.name}' is not orthonormal (max deviation {overlap:.3e})")

        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "outcome_labels", labels)
        object.__setattr__(self, "matrix", _read_only(rows))

    def to_computational(self) -> "UnitaryOp":
        """Unitary taking basis vector k to |k⟩; measuring afterwards in Z realizes this basis"""
        return UnitaryOp(self.num_qubits, self.matrix.conj(), f"{self.name}→Z", tolerance=10 * max(self.tolerance, EXACT_TOL))

    def index_of(self, label: str) -> int:
        try:
            return self.outcome_labels.index(label)
        except ValueError:
            raise IncompleteBasis(f"'{label}' is not an outcome of basis '{self.name}'") from None

    def __repr__(self) -> str:
        return f"BasisSpec({self.name}, {self.num_qubits}q, {list(self.outcome_labels)})"


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """One projective measurement outcome and what it leaves behind"""

    basis_name: str
    outcome_index: int
    outcome_label: str
    post_state: Optional[PureState]  # unmeasured remainder; None when every qubit was measured
    probability: float
    collapsed: PureState  # full register after the projection, original qubit order
    targets: Tuple[int, ...] = ()


# ------------------------------------------------------------------
# Construction
# ------------------------------------------------------------------

def make_state(num_qubits: int, amplitude_list: Sequence[complex]) -> PureState:
    """Build a state from raw amplitudes, renormalizing to unit norm"""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise DimensionMismatch(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amps = np.asarray(amplitude_list, dtype=complex).reshape(-1)
    if amps.size != 2 ** num_qubits:
        raise DimensionMismatch(f"{num_qubits} qubits need {2 ** num_qubits} amplitudes, got {amps.size}")

    norm = float(np.linalg.norm(amps))
    if norm < INPUT_TOL:
        raise ZeroVector("amplitude list has zero norm")
    if abs(norm - 1.0) > INPUT_TOL:
        logger.debug(f"Renormalizing input state (norm {norm:.6f})")
    return PureState(num_qubits, amps / norm)


def tensor(a: PureState, b: PureState) -> PureState:
    """a ⊗ b with a as the more significant qubits"""
    return PureState(a.num_qubits + b.num_qubits, np.kron(a.amplitudes, b.amplitudes))


def superpose(terms: Iterable[Tuple[complex, PureState]]) -> PureState:
    """Normalized linear combination Σ c_i |s_i⟩"""
    terms = list(terms)
    if not terms:
        raise ZeroVector("superposition of nothing")
    num_qubits = terms[0][1].num_qubits
    total = np.zeros(2 ** num_qubits, dtype=complex)
    for coefficient, state in terms:
        if state.num_qubits != num_qubits:
            raise DimensionMismatch("superposed states must have equal qubit counts")
        total += complex(coefficient) * state.amplitudes
    return make_state(num_qubits, total)


def computational_state(bits: str) -> PureState:
    """|b_0 b_1 ... ⟩ from a bit string"""
    amps = np.zeros(2 ** len(bits), dtype=complex)
    amps[int(bits, 2)] = 1.0
    return PureState(len(bits), amps)


def kron_ops(*ops: UnitaryOp) -> UnitaryOp:
    """Tensor product of operators, first operator on the first target"""
    matrix = np.array([[1.0]], dtype=complex)
    for op in ops:
        matrix = np.kron(matrix, op.matrix)
    tolerance = max(op.tolerance for op in ops)
    return UnitaryOp(sum(op.arity for op in ops), matrix, "⊗".join(op.name for op in ops), tolerance)


# ------------------------------------------------------------------
# Operations
# ------------------------------------------------------------------

def _check_targets(targets: Sequence[int], arity: int, num_qubits: int) -> Tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(targets) != arity:
        raise BadTargets(f"expected {arity} target qubits, got {len(targets)}")
    if len(set(targets)) != len(targets):
        raise BadTargets(f"repeated target qubits {targets}")
    if any(t < 0 or t >= num_qubits for t in targets):
        raise BadTargets(f"targets {targets} out of range for {num_qubits} qubits")
    return targets


def apply_unitary(u: UnitaryOp, targets: Sequence[int], s: PureState) -> PureState:
    """U on the target qubits, identity elsewhere"""
    targets = _check_targets(targets, u.arity, s.num_qubits)
    n, m = s.num_qubits, u.arity

    psi = s.amplitudes.reshape([2] * n)
    gate = u.matrix.reshape([2] * (2 * m))
    out = np.tensordot(gate, psi, axes=(list(range(m, 2 * m)), list(targets)))
    out = np.moveaxis(out, list(range(m)), list(targets))
    return PureState(n, out.reshape(-1))


def _project(s: PureState, basis: BasisSpec, targets: Sequence[int]) -> Tuple[Tuple[int, ...], np.ndarray, np.ndarray]:
    """(targets, per-outcome remainder amplitudes, Born probabilities)"""
    targets = _check_targets(targets, basis.num_qubits, s.num_qubits)
    n, m = s.num_qubits, basis.num_qubits

    psi = np.moveaxis(s.amplitudes.reshape([2] * n), list(targets), list(range(m)))
    split = psi.reshape(2 ** m, -1)
    remainders = basis.matrix.conj() @ split
    probs = np.sum(np.abs(remainders) ** 2, axis=1)

    total = float(probs.sum())
    if abs(total - 1.0) > basis.tolerance + EXACT_TOL:
        raise IncompleteBasis(f"Born probabilities in basis '{basis.name}' sum to {total}")
    return targets, remainders, probs


def probabilities(s: PureState, basis: BasisSpec, targets: Sequence[int]) -> np.ndarray:
    """Born probability of every outcome of basis on the target qubits"""
    _, _, probs = _project(s, basis, targets)
    return probs


def measure(s: PureState, basis: BasisSpec, targets: Sequence[int], rng: np.random.Generator) -> MeasurementRecord:
    """Projective measurement of the target qubits, outcome drawn from rng"""
    targets, remainders, probs = _project(s, basis, targets)
    n, m = s.num_qubits, basis.num_qubits

    cdf = np.cumsum(probs)
    index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    index = min(index, len(probs) - 1)
    probability = float(probs[index])

    remainder = remainders[index] / np.sqrt(probability)
    post_state = PureState(n - m, remainder) if n > m else None

    collapsed = np.multiply.outer(basis.matrix[index], remainder).reshape([2] * n)
    collapsed = np.moveaxis(collapsed, list(range(m)), list(targets)).reshape(-1)

    return MeasurementRecord(
        basis_name=basis.name,
        outcome_index=index,
        outcome_label=basis.outcome_labels[index],
        post_state=post_state,
        probability=probability,
        collapsed=PureState(n, collapsed),
        targets=targets,
    )


def inner_product(a: PureState, b: PureState) -> complex:
    """⟨a|b⟩"""
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatch(f"cannot compare {a.num_qubits}- and {b.num_qubits}-qubit states")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def equal_up_to_global_phase(a: PureState, b: PureState, tol: float = EXACT_TOL) -> bool:
    return abs(inner_product(a, b)) > 1.0 - tol


# ------------------------------------------------------------------
# Randomness
# ------------------------------------------------------------------

def make_rng(seed: Optional[int]) -> np.random.Generator:
    """The one generator a session draws every random choice from"""
    return np.random.default_rng(seed)


def spawn_rngs(seed: int, count_: int) -> List[np.random.Generator]:
    """Independent child streams derived from one master seed"""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(count_)]


# ------------------------------------------------------------------
# Named states, operators and bases
# ------------------------------------------------------------------

_H = 1 / np.sqrt(2)

KET_0 = computational_state("0")
KET_1 = computational_state("1")
KET_PLUS = PureState(1, [_H, _H])
KET_MINUS = PureState(1, [_H, -_H])

# Bell states in the order ψ_0..ψ_3 with ψ± = (|00⟩ ± |11⟩)/√2 and φ± = (|01⟩ ± |10⟩)/√2
BELL_STATES: Dict[str, PureState] = {
    "psi+": PureState(2, [_H, 0, 0, _H]),
    "phi+": PureState(2, [0, _H, _H, 0]),
    "psi-": PureState(2, [_H, 0, 0, -_H]),
    "phi-": PureState(2, [0, _H, -_H, 0]),
}
BELL_ORDER = tuple(BELL_STATES)

IDENTITY = UnitaryOp(1, np.eye(2), "I")
PAULI_X = UnitaryOp(1, [[0, 1], [1, 0]], "X")
PAULI_Z = UnitaryOp(1, [[1, 0], [0, -1]], "Z")
PAULI_IY = UnitaryOp(1, [[0, 1], [-1, 0]], "iY")  # |0⟩⟨1| - |1⟩⟨0|
HADAMARD = UnitaryOp(1, np.array([[1, 1], [1, -1]]) * _H, "H")
CONTROLLED_Z = UnitaryOp(2, np.diag([1, 1, 1, -1]), "CZ")

PAULIS: Dict[str, UnitaryOp] = {op.name: op for op in (IDENTITY, PAULI_X, PAULI_Z, PAULI_IY)}


def bell_product(terms: Sequence[Tuple[complex, str, str]]) -> PureState:
    """Σ c |bell⟩|bits⟩ for (coefficient, bell label, trailing bit string) terms"""
    return superpose(
        (coefficient, tensor(BELL_STATES[bell], computational_state(bits)))
        for coefficient, bell, bits in terms
    )


def ghz_like_state(i: int, j: int, sign: int = 1) -> PureState:
    """(|ψ_i⟩|0⟩ ± |ψ_j⟩|1⟩)/√2 with distinct Bell indices i, j"""
    if i == j or not (0 <= i < 4 and 0 <= j < 4):
        raise ValueError(f"GHZ-like state needs distinct Bell indices in 0..3, got {i}, {j}")
    return bell_product([(1, BELL_ORDER[i], "0"), (sign, BELL_ORDER[j], "1")])


# Ordered as the dense-coding table rows 000..111
GHZ_LIKE_TERMS: Tuple[Tuple[str, Tuple[Tuple[int, str, str], ...]], ...] = (
    ("psi+0+psi-1", ((1, "psi+", "0"), (1, "psi-", "1"))),
    ("psi+0-psi-1", ((1, "psi+", "0"), (-1, "psi-", "1"))),
    ("psi-0+psi+1", ((1, "psi-", "0"), (1, "psi+", "1"))),
    ("phi+1-phi-0", ((1, "phi+", "1"), (-1, "phi-", "0"))),
    ("phi+0+phi-1", ((1, "phi+", "0"), (1, "phi-", "1"))),
    ("phi+0-phi-1", ((1, "phi+", "0"), (-1, "phi-", "1"))),
    ("phi-0+phi+1", ((1, "phi-", "0"), (1, "phi+", "1"))),
    ("psi+1-psi-0", ((1, "psi+", "1"), (-1, "psi-", "0"))),
)

Z_BASIS = BasisSpec("Z", 1, (KET_0, KET_1), ("0", "1"))
X_BASIS = BasisSpec("X", 1, (KET_PLUS, KET_MINUS), ("+", "-"))
BELL_BASIS = BasisSpec("bell", 2, tuple(BELL_STATES.values()), BELL_ORDER)
GHZ_LIKE_BASIS = BasisSpec(
    "ghz_like", 3,
    tuple(bell_product(terms) for _, terms in GHZ_LIKE_TERMS),
    tuple(label for label, _ in GHZ_LIKE_TERMS),
)


def computational_basis(num_qubits: int) -> BasisSpec:
    labels = tuple(format(i, f"0{num_qubits}b") for i in range(2 ** num_qubits))
    return BasisSpec("computational", num_qubits, tuple(computational_state(b) for b in labels), labels)


def product_basis(*bases: BasisSpec) -> BasisSpec:
    """Tensor-product basis; outcome labels are the component labels joined by '|'"""
    vectors, labels = [None], [()]
    for basis in bases:
        new_vectors, new_labels = [], []
        for prefix_vector, prefix_label in zip(vectors, labels):
            for vector, label in zip(basis.vectors, basis.outcome_labels):
                new_vectors.append(vector if prefix_vector is None else tensor(prefix_vector, vector))
                new_labels.append(prefix_label + (label,))
        vectors, labels = new_vectors, new_labels

    return BasisSpec(
        LABEL_SEPARATOR.join(b.name for b in bases),
        sum(b.num_qubits for b in bases),
        tuple(vectors),
        tuple(LABEL_SEPARATOR.join(parts) for parts in labels),
        tolerance=max(b.tolerance for b in bases),
    )


# ------------------------------------------------------------------
# Session memory
# ------------------------------------------------------------------

class QuantumMemory:
    """Registers addressed by global qubit handles.

    Qubits that start in separate registers are merged into one register (by
    tensor product) the first time an operator or measurement spans them.
    Measured qubits stay in their register in the collapsed state.
    """

    def __init__(self):
        self._registers: Dict[int, PureState] = {}
        self._members: Dict[int, List[int]] = {}
        self._location: Dict[int, Tuple[int, int]] = {}
        self._handles = count()
        self._register_ids = count()

    def allocate(self, state: PureState) -> Tuple[int, ...]:
        register_id = next(self._register_ids)
        handles = tuple(next(self._handles) for _ in range(state.num_qubits))
        self._registers[register_id] = state
        self._members[register_id] = list(handles)
        for position, handle in enumerate(handles):
            self._location[handle] = (register_id, position)
        return handles

    def _locate(self, handle: int) -> Tuple[int, int]:
        try:
            return self._location[handle]
        except KeyError:
            raise BadTargets(f"unknown qubit handle {handle}") from None

    def _merge(self, keep: int, other: int) -> None:
        offset = len(self._members[keep])
        self._registers[keep] = tensor(self._registers[keep], self._registers.pop(other))
        moved = self._members.pop(other)
        for position, handle in enumerate(moved):
            self._location[handle] = (keep, offset + position)
        self._members[keep].extend(moved)

    def _gather(self, handles: Sequence[int]) -> Tuple[int, Tuple[int, ...]]:
        register_ids: List[int] = []
        for handle in handles:
            register_id = self._locate(handle)[0]
            if register_id not in register_ids:
                register_ids.append(register_id)
        keep = register_ids[0]
        for other in register_ids[1:]:
            self._merge(keep, other)
        return keep, tuple(self._location[h][1] for h in handles)

    def apply(self, op: UnitaryOp, handles: Sequence[int]) -> None:
        register_id, positions = self._gather(handles)
        self._registers[register_id] = apply_unitary(op, positions, self._registers[register_id])

    def measure(self, handles: Sequence[int], basis: BasisSpec, rng: np.random.Generator) -> MeasurementRecord:
        register_id, positions = self._gather(handles)
        record = measure(self._registers[register_id], basis, positions, rng)
        self._registers[register_id] = record.collapsed
        return record

    def probabilities(self, handles: Sequence[int], basis: BasisSpec) -> np.ndarray:
        register_id, positions = self._gather(handles)
        return probabilities(self._registers[register_id], basis, positions)

    def state_of(self, handles: Sequence[int]) -> PureState:
        """State of exactly these qubits, in this order; they must form a whole register"""
        register_id, positions = self._gather(handles)
        register = self._registers[register_id]
        if len(positions) != register.num_qubits:
            raise BadTargets("handles do not cover their whole register")
        psi = np.moveaxis(register.amplitudes.reshape([2] * register.num_qubits), list(positions),
                          list(range(len(positions))))
        return PureState(register.num_qubits, psi.reshape(-1))

    def clone(self, handles: Sequence[int]) -> Tuple[int, ...]:
        """Copy the register holding these qubits; returns the copies' handles in the same order"""
        register_id, positions = self._gather(handles)
        copies = self.allocate(self._registers[register_id])
        return tuple(copies[p] for p in positions)

    def register_size(self, handle: int) -> int:
        return len(self._members[self._locate(handle)[0]])
