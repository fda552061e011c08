import numpy as np
import pytest

from exceptions import (
    DimensionMismatchError,
    EntangledSubsystemError,
    InvalidPairingError,
    NonUnitaryError,
    NormalizationError,
    QubitIndexError,
)
from utils import statevector as sv
from utils.statevector import BELL_ORDER, BellKind, StateVector

MATCHED_PAIRS = [(kind, kind) for kind in BELL_ORDER]


def rng(seed=0):
    return np.random.default_rng(seed)


def phi_phi():
    return sv.compose([sv.prepare_bell(BellKind.PHI_PLUS), sv.prepare_bell(BellKind.PHI_PLUS)])


# ============================================
# STATES
# ============================================

def test_rejects_unnormalized_and_odd_lengths():
    with pytest.raises(NormalizationError):
        StateVector(np.array([1, 1], dtype=complex))
    with pytest.raises(DimensionMismatchError):
        StateVector(np.array([1, 0, 0], dtype=complex))


def test_basis_state_is_big_endian():
    state = sv.basis_state("0110")
    assert state.num_qubits == 4
    assert state.amplitude("0110") == 1
    assert sv.describe(state) == {"0110": 1}


def test_compose_concatenates_qubits():
    state = sv.compose([sv.basis_state("1"), sv.basis_state("0"), sv.basis_state("1")])
    assert sv.describe(state) == {"101": 1}


@pytest.mark.parametrize("kind, support", [
    (BellKind.PHI_PLUS, {"00": 1, "11": 1}),
    (BellKind.PHI_MINUS, {"00": 1, "11": -1}),
    (BellKind.PSI_PLUS, {"01": 1, "10": 1}),
    (BellKind.PSI_MINUS, {"01": 1, "10": -1}),
])
def test_bell_states(kind, support):
    amplitudes = sv.describe(sv.prepare_bell(kind))
    assert set(amplitudes) == set(support)
    for bits, sign in support.items():
        assert amplitudes[bits] == pytest.approx(sign / np.sqrt(2))


@pytest.mark.parametrize("label, kind", [
    ("phi+", BellKind.PHI_PLUS),
    ("phi-minus", BellKind.PHI_MINUS),
    ("PSI_PLUS", BellKind.PSI_PLUS),
    ("11", BellKind.PSI_MINUS),
])
def test_bell_labels(label, kind):
    assert BellKind.from_label(label) is kind


# ============================================
# GATES
# ============================================

def test_cnot_control_is_first_index():
    state = sv.apply_gate(sv.basis_state("10"), "CNOT", 0, 1)
    assert sv.describe(state) == {"11": 1}
    state = sv.apply_gate(sv.basis_state("10"), "CNOT", 1, 0)
    assert sv.describe(state) == {"10": 1}


def test_gate_index_errors():
    with pytest.raises(QubitIndexError):
        sv.apply_gate(sv.zero_state(2), "H", 2)
    with pytest.raises(QubitIndexError):
        sv.apply_gate(sv.zero_state(2), "CNOT", 1, 1)
    with pytest.raises(QubitIndexError):
        sv.apply_gate(sv.zero_state(2), "CNOT", 0)


def test_apply_unitary_rejects_non_unitary():
    with pytest.raises(NonUnitaryError):
        sv.apply_unitary(sv.zero_state(2), np.ones((4, 4)), [0, 1])
    with pytest.raises(DimensionMismatchError):
        sv.apply_unitary(sv.zero_state(2), np.eye(4), [0])


def test_swap_pairing_is_an_involution():
    state = sv.random_state(4, rng(3))
    assert sv.states_close(sv.swap_pairing(sv.swap_pairing(state)), state)


def test_swap_pairing_moves_entanglement_to_outer_pairs():
    swapped = sv.swap_pairing(phi_phi())
    decomposition = sv.bell_decomposition(swapped, ((0, 2), (1, 3)))
    assert abs(decomposition[(BellKind.PHI_PLUS, BellKind.PHI_PLUS)]) == pytest.approx(1.0)


# ============================================
# ENTANGLEMENT SWAPPING IDENTITY
# ============================================

def test_swapping_identity_has_four_matched_terms():
    decomposition = sv.bell_decomposition(phi_phi(), ((0, 2), (1, 3)))
    for pair, amplitude in decomposition.items():
        if pair in MATCHED_PAIRS:
            assert abs(amplitude) == pytest.approx(0.5, abs=1e-12)
        else:
            assert abs(amplitude) < 1e-12


def test_bell_decomposition_rejects_bad_pairings():
    with pytest.raises(InvalidPairingError):
        sv.bell_decomposition(phi_phi(), ((0, 1), (1, 3)))
    with pytest.raises(InvalidPairingError):
        sv.bell_decomposition(phi_phi(), (0, 1))


# ============================================
# MEASUREMENT
# ============================================

@pytest.mark.parametrize("kind", BELL_ORDER)
def test_bell_measurement_of_a_bell_state_is_certain(kind):
    outcome, collapsed, record = sv.measure_bell(sv.prepare_bell(kind), 0, 1, rng())
    assert outcome is kind
    assert record.probability == pytest.approx(1.0)
    assert sv.states_close(collapsed, sv.prepare_bell(kind))


def test_measure_z_collapses_the_partner():
    for seed in range(20):
        bit, collapsed, record = sv.measure_z(sv.prepare_bell(BellKind.PHI_PLUS), 0, rng(seed))
        assert record.probability == pytest.approx(0.5)
        assert sv.describe(collapsed) == {f"{bit}{bit}": pytest.approx(1.0)}


def test_z_collapse_of_phi_plus_fails_bell_check_half_the_time():
    _, collapsed, _ = sv.measure_z(sv.prepare_bell(BellKind.PHI_PLUS), 0, rng())
    probabilities = sv.bell_probabilities(collapsed, 0, 1)
    assert probabilities[BellKind.PHI_PLUS] == pytest.approx(0.5)
    assert probabilities[BellKind.PSI_PLUS] == pytest.approx(0.0)


def test_probability_all_zero():
    state = sv.compose([sv.prepare_bell(BellKind.PHI_PLUS), sv.zero_state(1)])
    assert sv.probability_all_zero(state, [2]) == pytest.approx(1.0)
    assert sv.probability_all_zero(state, [0, 2]) == pytest.approx(0.5)


# ============================================
# SUBSYSTEMS AND DISTANCES
# ============================================

def test_extract_subsystem_of_a_product():
    plus = sv.apply_gate(sv.zero_state(1), "H", 0)
    state = sv.compose([sv.basis_state("1"), plus])
    extracted = sv.extract_subsystem(state, [1])
    assert abs(sv.overlap(extracted, plus)) == pytest.approx(1.0)


def test_extract_subsystem_refuses_entangled_qubits():
    with pytest.raises(EntangledSubsystemError):
        sv.extract_subsystem(sv.prepare_bell(BellKind.PHI_PLUS), [0])


def test_trace_distance_pure():
    zero, one = sv.basis_state("0"), sv.basis_state("1")
    plus = sv.apply_gate(zero, "H", 0)
    assert sv.trace_distance_pure(zero, one) == pytest.approx(1.0)
    assert sv.trace_distance_pure(zero, zero) == pytest.approx(0.0)
    assert sv.trace_distance_pure(zero, plus) == pytest.approx(np.sqrt(0.5))


def test_trace_distance_resolves_nearly_identical_states():
    rng = np.random.default_rng(4)
    amplitudes = rng.normal(size=16) + 1j * rng.normal(size=16)
    state = sv.StateVector(amplitudes / np.linalg.norm(amplitudes))
    rephased = sv.StateVector(state.amplitudes * np.exp(0.7j))
    assert sv.trace_distance_pure(state, rephased) < 1e-12
    assert sv.max_trace_distance([state], [rephased, state]) < 1e-12

    angle = 1e-9
    tilted = sv.StateVector(np.array([np.cos(angle), np.sin(angle)]))
    assert sv.trace_distance_pure(sv.basis_state("0"), tilted) == pytest.approx(angle, rel=1e-6)
    assert sv.max_trace_distance([sv.basis_state("0")], [tilted]) == pytest.approx(angle, rel=1e-6)


def test_max_trace_distance_deduplicates_and_handles_empty_sides():
    zeros = [sv.basis_state("00")] * 50
    ones = [sv.basis_state("00")] * 10 + [sv.basis_state("01")]
    assert sv.max_trace_distance(zeros, ones) == pytest.approx(1.0)
    assert sv.max_trace_distance(zeros, zeros) == pytest.approx(0.0)
    assert sv.max_trace_distance([], ones) == 0.0
    assert len(sv.distinct_states(zeros)) == 1
