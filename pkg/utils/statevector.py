"""
Pure-state quantum simulator used by the protocol, the attacks and the circuit scenarios.

Kets are read left to right as qubit 0..k-1 with qubit 0 the most significant
position of the amplitude index, so |0110> has qubit 1 and qubit 2 set.
Register strings in the Qiskit convention (highest qubit leftmost) are built
by the analysis module, never here.
"""

from dataclasses import dataclass
from enum import Enum
from itertools import product
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from exceptions import (
    DimensionMismatchError,
    EntangledSubsystemError,
    InvalidPairingError,
    NonUnitaryError,
    NormalizationError,
    QubitIndexError,
)

AMPLITUDE_TOLERANCE = 1e-12
NORM_TOLERANCE = 1e-10
UNITARY_TOLERANCE = 1e-10
SCHMIDT_TOLERANCE = 1e-9
# 1 - fidelity below this is recomputed from state differences
NEAR_IDENTICAL = 1e-6

SQRT1_2 = 1 / np.sqrt(2)


class BellKind(str, Enum):
    """The four Bell states; the value is the two-bit measurement code"""
    PHI_PLUS = "00"
    PHI_MINUS = "01"
    PSI_PLUS = "10"
    PSI_MINUS = "11"

    @property
    def label(self) -> str:
        return {
            BellKind.PHI_PLUS: "phi+",
            BellKind.PHI_MINUS: "phi-",
            BellKind.PSI_PLUS: "psi+",
            BellKind.PSI_MINUS: "psi-",
        }[self]

    @classmethod
    def from_label(cls, label: str) -> "BellKind":
        """Accepts 'phi+', 'phi-plus', 'PHI_PLUS' or the code '00'"""
        key = label.strip().lower().replace("_", "-")
        key = key.replace("-plus", "+").replace("-minus", "-").replace("plus", "+").replace("minus", "-")
        for kind in cls:
            if key in (kind.label, kind.value):
                return kind
        raise ValueError(f"Unknown Bell state: {label}")


_BELL_VECTORS = {
    BellKind.PHI_PLUS: np.array([1, 0, 0, 1], dtype=complex) * SQRT1_2,
    BellKind.PHI_MINUS: np.array([1, 0, 0, -1], dtype=complex) * SQRT1_2,
    BellKind.PSI_PLUS: np.array([0, 1, 1, 0], dtype=complex) * SQRT1_2,
    BellKind.PSI_MINUS: np.array([0, 1, -1, 0], dtype=complex) * SQRT1_2,
}
BELL_ORDER = (BellKind.PHI_PLUS, BellKind.PHI_MINUS, BellKind.PSI_PLUS, BellKind.PSI_MINUS)
# columns are the Bell vectors in BELL_ORDER
_BELL_BASIS = np.stack([_BELL_VECTORS[k] for k in BELL_ORDER], axis=1)

GATES: Dict[str, np.ndarray] = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * SQRT1_2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitude vector over `num_qubits` qubits. Treat as immutable."""
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        size = amps.size
        if size < 2 or size & (size - 1):
            raise DimensionMismatchError(f"State length {size} is not a power of two")
        if not np.all(np.isfinite(amps)):
            raise NormalizationError("State contains non-finite amplitudes")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise NormalizationError(f"State norm {norm} differs from 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def tensor(self) -> np.ndarray:
        """Amplitudes as a (2,)*k array, axis i = qubit i"""
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def amplitude(self, bits: str) -> complex:
        return complex(self.amplitudes[int(bits, 2)])

    def __len__(self) -> int:
        return self.amplitudes.size


@dataclass(frozen=True)
class MeasurementRecord:
    qubit_indices: Tuple[int, ...]
    outcome: Union[str, BellKind]
    probability: float


def _from_tensor(tensor: np.ndarray, renormalize: bool = False) -> StateVector:
    amps = np.ascontiguousarray(tensor).reshape(-1)
    if renormalize:
        amps = amps / np.sqrt(np.vdot(amps, amps).real)
    return StateVector(amps)


def _check_indices(state: StateVector, indices: Sequence[int]) -> Tuple[int, ...]:
    k = state.num_qubits
    checked = tuple(int(i) for i in indices)
    for i in checked:
        if i < 0 or i >= k:
            raise QubitIndexError(f"Qubit index {i} out of range for {k} qubits")
    if len(set(checked)) != len(checked):
        raise QubitIndexError(f"Duplicate qubit indices {checked}")
    return checked


def _sample(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one outcome by the Born rule; zero-probability outcomes are never returned"""
    u = rng.random()
    cumulative = np.cumsum(probabilities)
    hits = np.nonzero(cumulative > u)[0]
    if hits.size:
        return int(hits[0])
    # u landed in the rounding gap above the total
    return int(np.nonzero(probabilities > 0)[0][-1])


# ============================================
# PREPARATION
# ============================================

def zero_state(num_qubits: int) -> StateVector:
    amps = np.zeros(2 ** num_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(amps)


def basis_state(bits: Union[str, Sequence[int]]) -> StateVector:
    """Computational basis state, e.g. basis_state("01") = |01>"""
    text = bits if isinstance(bits, str) else "".join(str(int(b)) for b in bits)
    amps = np.zeros(2 ** len(text), dtype=complex)
    amps[int(text, 2)] = 1.0
    return StateVector(amps)


def prepare_bell(kind: BellKind) -> StateVector:
    return StateVector(_BELL_VECTORS[BellKind(kind)].copy())


def compose(states: Sequence[StateVector]) -> StateVector:
    """Tensor product; qubit indices concatenate left to right"""
    if not states:
        raise DimensionMismatchError("compose() needs at least one state")
    amps = states[0].amplitudes
    for state in states[1:]:
        amps = np.kron(amps, state.amplitudes)
    return StateVector(amps)


# ============================================
# GATES
# ============================================

def check_unitary(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"Operator of shape {matrix.shape} is not square")
    if not np.allclose(matrix.conj().T @ matrix, np.eye(matrix.shape[0]), atol=UNITARY_TOLERANCE):
        raise NonUnitaryError("Operator is not unitary")
    return matrix


def apply_unitary(state: StateVector, matrix: np.ndarray, indices: Sequence[int],
                  validate: bool = True) -> StateVector:
    """Apply a 2^m x 2^m unitary to qubits `indices` (first index = most significant)"""
    indices = _check_indices(state, indices)
    m = len(indices)
    matrix = check_unitary(matrix) if validate else np.asarray(matrix, dtype=complex)
    if matrix.shape != (2 ** m, 2 ** m):
        raise DimensionMismatchError(f"Operator of shape {matrix.shape} cannot act on {m} qubits")
    return _apply(state, matrix, indices)


def _apply(state: StateVector, matrix: np.ndarray, indices: Tuple[int, ...]) -> StateVector:
    m = len(indices)
    op = matrix.reshape((2,) * (2 * m))
    psi = np.tensordot(op, state.tensor(), axes=(list(range(m, 2 * m)), list(indices)))
    psi = np.moveaxis(psi, list(range(m)), list(indices))
    return _from_tensor(psi)


def apply_gate(state: StateVector, gate: str, *indices: int) -> StateVector:
    """
    Apply a named gate: H, X, Z on one qubit; CNOT(control, target), CZ, SWAP(i, j)

    Raises:
        QubitIndexError: index out of range or repeated
    """
    name = gate.upper()
    if name not in GATES:
        raise ValueError(f"Unknown gate: {gate}")
    matrix = GATES[name]
    arity = matrix.shape[0].bit_length() - 1
    if len(indices) != arity:
        raise QubitIndexError(f"{name} acts on {arity} qubit(s), got {len(indices)} indices")
    return _apply(state, matrix, _check_indices(state, indices))


def swap_pairing(group: StateVector) -> StateVector:
    """Re-pair a 4-qubit group by swapping its middle qubits (involution)"""
    if group.num_qubits != 4:
        raise DimensionMismatchError(f"swap_pairing needs 4 qubits, got {group.num_qubits}")
    return apply_gate(group, "SWAP", 1, 2)


# ============================================
# MEASUREMENT
# ============================================

def z_probabilities(state: StateVector, index: int) -> Tuple[float, float]:
    (index,) = _check_indices(state, [index])
    psi = state.tensor()
    p1 = float(np.sum(np.abs(np.take(psi, 1, axis=index)) ** 2))
    return 1.0 - p1, p1


def measure_z(state: StateVector, index: int, rng: np.random.Generator
              ) -> Tuple[int, StateVector, MeasurementRecord]:
    """Projective Z measurement of one qubit with Born-rule sampling and collapse"""
    probabilities = np.array(z_probabilities(state, index))
    bit = _sample(probabilities, rng)
    psi = np.array(state.tensor())
    slicer = [slice(None)] * state.num_qubits
    slicer[index] = 1 - bit
    psi[tuple(slicer)] = 0
    collapsed = _from_tensor(psi, renormalize=True)
    return bit, collapsed, MeasurementRecord((index,), str(bit), float(probabilities[bit]))


def _bell_frame_slice(kind: BellKind, num_qubits: int, i: int, j: int) -> tuple:
    # CNOT(i->j) then H(i) maps the Bell state onto |a>_i |b>_j;
    # the code string is "b a" (qubit j leftmost)
    slicer = [slice(None)] * num_qubits
    slicer[i], slicer[j] = int(kind.value[1]), int(kind.value[0])
    return tuple(slicer)


def _to_bell_frame(state: StateVector, i: int, j: int) -> StateVector:
    return apply_gate(apply_gate(state, "CNOT", i, j), "H", i)


def _bell_frame_probabilities(rotated: StateVector, i: int, j: int) -> np.ndarray:
    psi = rotated.tensor()
    return np.array([
        float(np.sum(np.abs(psi[_bell_frame_slice(kind, rotated.num_qubits, i, j)]) ** 2))
        for kind in BELL_ORDER
    ])


def bell_probabilities(state: StateVector, i: int, j: int) -> Dict[BellKind, float]:
    probabilities = _bell_frame_probabilities(_to_bell_frame(state, i, j), i, j)
    return dict(zip(BELL_ORDER, probabilities.tolist()))


def measure_bell(state: StateVector, i: int, j: int, rng: np.random.Generator
                 ) -> Tuple[BellKind, StateVector, MeasurementRecord]:
    """Projective measurement of qubits (i, j) onto the four Bell states"""
    rotated = _to_bell_frame(state, i, j)
    probabilities = _bell_frame_probabilities(rotated, i, j)
    kind = BELL_ORDER[_sample(probabilities, rng)]

    psi = np.array(rotated.tensor())
    mask = np.zeros(psi.shape, dtype=bool)
    mask[_bell_frame_slice(kind, state.num_qubits, i, j)] = True
    psi[~mask] = 0
    collapsed = _from_tensor(psi, renormalize=True)
    collapsed = apply_gate(apply_gate(collapsed, "H", i), "CNOT", i, j)
    record = MeasurementRecord((i, j), kind, float(probabilities[BELL_ORDER.index(kind)]))
    return kind, collapsed, record


def probability_all_zero(state: StateVector, indices: Sequence[int]) -> float:
    indices = _check_indices(state, indices)
    slicer = [slice(None)] * state.num_qubits
    for i in indices:
        slicer[i] = 0
    return float(np.sum(np.abs(state.tensor()[tuple(slicer)]) ** 2))


# ============================================
# ANALYSIS UTILITIES
# ============================================

def bell_decomposition(group: StateVector, pairing: Tuple[Tuple[int, int], Tuple[int, int]]
                       ) -> Dict[Tuple[BellKind, BellKind], complex]:
    """Amplitudes of a 4-qubit state in the Bell x Bell basis of `pairing`"""
    if group.num_qubits != 4:
        raise DimensionMismatchError(f"bell_decomposition needs 4 qubits, got {group.num_qubits}")
    try:
        (a, b), (c, d) = pairing
    except (TypeError, ValueError):
        raise InvalidPairingError(f"Pairing must be two index pairs, got {pairing!r}")
    if sorted((a, b, c, d)) != [0, 1, 2, 3]:
        raise InvalidPairingError(f"Pairing {pairing!r} does not cover qubits 0..3 exactly once")
    psi = np.transpose(group.tensor(), (a, b, c, d)).reshape(4, 4)
    coefficients = _BELL_BASIS.conj().T @ psi @ _BELL_BASIS.conj()
    return {
        (BELL_ORDER[r], BELL_ORDER[s]): complex(coefficients[r, s])
        for r, s in product(range(4), range(4))
    }


def overlap(a: StateVector, b: StateVector) -> complex:
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatchError(f"Cannot compare {a.num_qubits}- and {b.num_qubits}-qubit states")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def _aligned_distances(row: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """
    Trace distances between `row` and every state in `rows`, from the
    difference after removing the relative global phase.

    With d2 = || a - e^{i phi} b ||^2 the distance is sqrt(d2 (1 - d2 / 4)),
    which stays exact down to the rounding of the amplitudes.
    """
    ov = rows.conj() @ row
    magnitude = np.abs(ov)
    phase = np.where(magnitude > 0, ov / np.where(magnitude > 0, magnitude, 1.0), 1.0)
    d2 = np.sum(np.abs(row[None, :] - phase[:, None] * rows) ** 2, axis=1)
    return np.sqrt(np.clip(d2 * (1.0 - d2 / 4.0), 0.0, None))


def trace_distance_pure(a: StateVector, b: StateVector) -> float:
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatchError(f"Cannot compare {a.num_qubits}- and {b.num_qubits}-qubit states")
    return float(_aligned_distances(a.amplitudes.reshape(-1), b.amplitudes.reshape(1, -1))[0])


def max_trace_distance(first: Sequence[Union[StateVector, np.ndarray]],
                       second: Sequence[Union[StateVector, np.ndarray]],
                       block: int = 256) -> float:
    """
    Largest trace_distance_pure between any state of `first` and any state of `second`.

    Duplicates are collapsed before the pairwise overlaps are formed, so
    classical records (basis kets) stay cheap however many events there are.
    When every pair is nearly identical the distances are recomputed from
    phase-aligned differences. Returns 0.0 when either side is empty.
    """
    if len(first) == 0 or len(second) == 0:
        return 0.0
    a = distinct_states(first)
    b = distinct_states(second)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError("Probe states of different sizes cannot be compared")
    lowest = 1.0
    for start in range(0, a.shape[0], block):
        fidelity = np.abs(a[start:start + block].conj() @ b.T) ** 2
        lowest = min(lowest, float(fidelity.min()))
    if 1.0 - lowest > NEAR_IDENTICAL:
        return float(np.sqrt(max(0.0, 1.0 - lowest)))
    return max(float(_aligned_distances(row, b).max()) for row in a)


def _stack(states) -> np.ndarray:
    return np.stack([np.asarray(getattr(s, "amplitudes", s), dtype=complex).reshape(-1) for s in states])


def distinct_states(states) -> np.ndarray:
    """Amplitude rows of `states` with numerical duplicates removed, first occurrence order"""
    rows = _stack(states)
    # rounding merges numerically equal probes before np.unique
    rounded = np.round(rows, 12) + 0.0
    _, keep = np.unique(rounded.view(np.float64).reshape(rows.shape[0], -1), axis=0, return_index=True)
    return rows[np.sort(keep)]


def extract_subsystem(state: StateVector, indices: Sequence[int]) -> StateVector:
    """
    Pure state of qubits `indices` when the state factorizes across (indices, rest).

    The returned vector is defined up to a global phase.

    Raises:
        EntangledSubsystemError: the second Schmidt coefficient exceeds SCHMIDT_TOLERANCE
    """
    indices = _check_indices(state, indices)
    rest = [q for q in range(state.num_qubits) if q not in indices]
    matrix = np.transpose(state.tensor(), list(indices) + rest).reshape(2 ** len(indices), -1)
    if not rest:
        return StateVector(matrix.reshape(-1))
    u, s, _ = np.linalg.svd(matrix, full_matrices=False)
    if s.size > 1 and s[1] > SCHMIDT_TOLERANCE:
        raise EntangledSubsystemError(
            f"Qubits {indices} are entangled with the rest (Schmidt coefficient {s[1]:.3e})"
        )
    vector = u[:, 0]
    # fix the global phase so equal subsystems compare equal amplitude-wise
    pivot = vector[np.argmax(np.abs(vector))]
    return StateVector(vector * (abs(pivot) / pivot))


def random_state(num_qubits: int, rng: np.random.Generator) -> StateVector:
    amps = rng.normal(size=2 ** num_qubits) + 1j * rng.normal(size=2 ** num_qubits)
    return StateVector(amps / np.linalg.norm(amps))


def states_close(a: StateVector, b: StateVector, atol: float = AMPLITUDE_TOLERANCE) -> bool:
    return a.num_qubits == b.num_qubits and bool(np.allclose(a.amplitudes, b.amplitudes, atol=atol))


def describe(state: StateVector, atol: float = AMPLITUDE_TOLERANCE) -> Dict[str, complex]:
    """Nonzero amplitudes keyed by basis string (debugging and logs)"""
    k = state.num_qubits
    return {
        format(i, f"0{k}b"): complex(a)
        for i, a in enumerate(state.amplitudes) if abs(a) > atol
    }
