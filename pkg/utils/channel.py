"""
Channel model: one group's joint state in transit, the attack hook applied on
each leg, and the honest third party.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import DimensionMismatchError
from models import (
    GROUP_SIZE,
    ORIGINAL_PAIRS,
    ChannelLeg,
    GroupPlan,
    GroupRecord,
    Role,
    UserOp,
)
from utils import statevector as sv
from utils.statevector import BellKind, MeasurementRecord, StateVector

logger = logging.getLogger(__name__)


class TransitGroup:
    """
    Joint state of one group plus whatever extra qubits the adversary attached.

    `wires[t]` is the state index currently travelling in transit slot t.
    Attackers may rewire slots (intercept-resend) or append registers; honest
    parties only ever touch `wires`.
    """

    def __init__(self, plan: GroupPlan, state: StateVector):
        if state.num_qubits != GROUP_SIZE:
            raise DimensionMismatchError(f"A group holds {GROUP_SIZE} qubits, got {state.num_qubits}")
        self.plan = plan
        self.record = GroupRecord(plan=plan)
        self.state = state
        self.wires: List[int] = list(range(GROUP_SIZE))
        self.registers: Dict[str, List[int]] = {}

    @property
    def num_qubits(self) -> int:
        return self.state.num_qubits

    def attach(self, name: str, extra: StateVector) -> List[int]:
        """Append `extra` to the joint state as register `name`; returns its state indices"""
        start = self.state.num_qubits
        self.state = sv.compose([self.state, extra])
        indices = list(range(start, start + extra.num_qubits))
        self.registers.setdefault(name, []).extend(indices)
        return indices

    def register(self, name: str) -> List[int]:
        return list(self.registers.get(name, []))

    def attacker_indices(self) -> List[int]:
        return sorted(i for indices in self.registers.values() for i in indices)

    def apply(self, matrix: np.ndarray, indices: Sequence[int], validate: bool = True) -> None:
        self.state = sv.apply_unitary(self.state, matrix, indices, validate=validate)

    def gate(self, name: str, *indices: int) -> None:
        self.state = sv.apply_gate(self.state, name, *indices)

    def measure_z(self, index: int, rng: np.random.Generator) -> Tuple[int, MeasurementRecord]:
        bit, self.state, record = sv.measure_z(self.state, index, rng)
        return bit, record

    def measure_bell(self, i: int, j: int, rng: np.random.Generator) -> Tuple[BellKind, MeasurementRecord]:
        kind, self.state, record = sv.measure_bell(self.state, i, j, rng)
        return kind, record

    def transit_state(self) -> StateVector:
        """The four transit qubits alone, in slot order (only valid when they factorize)"""
        return sv.extract_subsystem(self.state, self.wires)


# ============================================
# ATTACK HOOK
# ============================================

class AttackStrategy:
    """
    Interception hook applied once per group on every channel leg.

    The base class is the no-op attack. Subclasses may only touch the transit
    wires and their own registers; they never read the group record.
    """

    name = "none"
    # keys whose bits the attacker is after
    targets: Tuple[str, ...] = ("k_ab", "k_ta", "k_tb")

    def begin_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        pass

    def intercept(self, leg: ChannelLeg, group: TransitGroup, rng: np.random.Generator) -> None:
        pass

    def finish_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        """Called after TP has measured every transit qubit of the group"""

    def probe(self, group: TransitGroup) -> Optional[StateVector]:
        """Attacker's whole register for the group, or None when nothing is retained"""
        return None

    def diagnostics(self) -> Dict[str, float]:
        return {}

    @property
    def is_active(self) -> bool:
        return type(self) is not AttackStrategy

    def describe(self) -> Dict[str, object]:
        return {"name": self.name}


# ============================================
# THIRD PARTY
# ============================================

class TpBehaviour:
    """Third party. The honest behaviour lives in HonestTp."""

    strategy = "honest"
    # dishonest variants skip reporting their own Step-6 checks
    reports_step6 = True

    def prepare(self, plan: GroupPlan, rng: np.random.Generator) -> StateVector:
        raise NotImplementedError

    def publish_check_group(self, group: TransitGroup, rng: np.random.Generator) -> Dict[Tuple[int, int], BellKind]:
        """Step 5: measure a restored check group and publish one Bell outcome per original pair"""
        raise NotImplementedError

    def probe(self, group: TransitGroup, original: int) -> Optional[StateVector]:
        """What TP holds about the qubit at `original`, for information accounting"""
        return None


class HonestTp(TpBehaviour):

    def prepare(self, plan: GroupPlan, rng: np.random.Generator) -> StateVector:
        group = sv.compose([sv.prepare_bell(BellKind.PHI_PLUS), sv.prepare_bell(BellKind.PHI_PLUS)])
        return sv.swap_pairing(group) if plan.swapped else group

    def publish_check_group(self, group: TransitGroup, rng: np.random.Generator) -> Dict[Tuple[int, int], BellKind]:
        publications = {}
        for pair in ORIGINAL_PAIRS:
            kind, record = group.measure_bell(group.wires[pair[0]], group.wires[pair[1]], rng)
            group.record.tp_measurements.append(MeasurementRecord(pair, kind, record.probability))
            publications[pair] = kind
        return publications


# ============================================
# HONEST PARTY ACTIONS
# ============================================

def user_act(group: TransitGroup, slot: int, role: Role, rng: np.random.Generator) -> Tuple[UserOp, Optional[int]]:
    """
    A classical user handles the qubit in transit slot `slot`.

    Reflect leaves it untouched. Measure reads it in Z and sends on a fresh
    qubit prepared in the same basis state; the collapsed qubit is exactly
    that state, so it continues on the same wire.

    Returns:
        (operation, measured bit or None)
    """
    op = UserOp.MEASURE if rng.integers(2) else UserOp.REFLECT
    bit = None
    if op is UserOp.MEASURE:
        bit, _ = group.measure_z(group.wires[slot], rng)

    if role is Role.ALICE:
        group.record.alice_ops[slot], group.record.alice_bits[slot] = op, bit
    elif role is Role.BOB:
        group.record.bob_ops[slot], group.record.bob_bits[slot] = op, bit
    else:
        raise ValueError(f"{role} is not a classical user")
    return op, bit


def tp_restore(state: StateVector, plan: GroupPlan) -> StateVector:
    """Undo the Step-1 re-pairing of a bare 4-qubit group"""
    if state.num_qubits != GROUP_SIZE:
        raise DimensionMismatchError(f"tp_restore needs {GROUP_SIZE} qubits, got {state.num_qubits}")
    return sv.swap_pairing(state) if plan.swapped else state


def restore_group(group: TransitGroup) -> None:
    """Step 4 on a group in transit: afterwards wires[o] carries original qubit o"""
    if group.plan.swapped:
        group.gate("SWAP", group.wires[1], group.wires[2])


def tp_measure_z(group: TransitGroup, original: int, rng: np.random.Generator) -> int:
    """TP's Z measurement of a restored qubit, logged against its original position"""
    bit, record = group.measure_z(group.wires[original], rng)
    group.record.tp_measurements.append(MeasurementRecord((original,), str(bit), record.probability))
    return bit
