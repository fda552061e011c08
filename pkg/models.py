"""Domain types of the comparison protocol: operations, plans, records, keys and outcomes"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from utils.statevector import BellKind, MeasurementRecord, StateVector

GROUP_SIZE = 4
# original (restored) Bell pairs inside a group
ORIGINAL_PAIRS = ((0, 1), (2, 3))


class Role(str, Enum):
    TP = "tp"
    ALICE = "alice"
    BOB = "bob"


class UserOp(str, Enum):
    MEASURE = "M"
    REFLECT = "R"


class ChannelLeg(str, Enum):
    TP_TO_ALICE = "tp->alice"
    ALICE_TO_BOB = "alice->bob"
    BOB_TO_TP = "bob->tp"


LEG_ORDER = (ChannelLeg.TP_TO_ALICE, ChannelLeg.ALICE_TO_BOB, ChannelLeg.BOB_TO_TP)


class SiftClass(str, Enum):
    KAB_BIT = "K_AB"
    KTA_BIT = "K_TA"
    KTB_BIT = "K_TB"
    EC_BELL = "EC-Bell"
    EC_Z = "EC-Z"
    DISCARD = "-"


class TpStrategy(str, Enum):
    HONEST = "honest"
    Z_MEASURE_THEN_RANDOM_PUBLISH = "z-measure-random-publish"
    FAKE_Z_BASIS_STATES = "fake-z-basis-states"


class Verdict(str, Enum):
    EQUAL = "equal"
    NOT_EQUAL = "not-equal"


class CheckKind(str, Enum):
    STEP5_BELL = "step5_bell"
    STEP6_BELL = "step6_bell"
    STEP6_Z = "step6_z"


def transit_position(original: int, swapped: bool) -> int:
    """Transit slot that carries original qubit `original` (SWAP of slots 1 and 2)"""
    if swapped and original in (1, 2):
        return 3 - original
    return original


@dataclass(frozen=True)
class Secret:
    bits: Tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("Secret bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class GroupPlan:
    group_index: int
    swapped: bool


@dataclass
class GroupRecord:
    """
    Transcript of one group. User operations and bits are indexed by transit
    position; TP's measurement records use original (restored) positions.
    """
    plan: GroupPlan
    alice_ops: List[Optional[UserOp]] = field(default_factory=lambda: [None] * GROUP_SIZE)
    alice_bits: List[Optional[int]] = field(default_factory=lambda: [None] * GROUP_SIZE)
    bob_ops: List[Optional[UserOp]] = field(default_factory=lambda: [None] * GROUP_SIZE)
    bob_bits: List[Optional[int]] = field(default_factory=lambda: [None] * GROUP_SIZE)
    tp_measurements: List[MeasurementRecord] = field(default_factory=list)
    check_group: bool = False

    @property
    def group_index(self) -> int:
        return self.plan.group_index

    def ops_at(self, original: int) -> Tuple[Optional[UserOp], Optional[UserOp]]:
        slot = transit_position(original, self.plan.swapped)
        return self.alice_ops[slot], self.bob_ops[slot]

    def bits_at(self, original: int) -> Tuple[Optional[int], Optional[int]]:
        slot = transit_position(original, self.plan.swapped)
        return self.alice_bits[slot], self.bob_bits[slot]

    def tp_z_bit(self, original: int) -> Optional[int]:
        for record in self.tp_measurements:
            if record.qubit_indices == (original,):
                return int(record.outcome)
        return None

    def tp_bell(self, pair: Tuple[int, int]) -> Optional[BellKind]:
        for record in self.tp_measurements:
            if record.qubit_indices == tuple(pair) and isinstance(record.outcome, BellKind):
                return record.outcome
        return None


@dataclass(frozen=True)
class KeyBit:
    group_index: int
    position: int
    value: int

    @property
    def provenance(self) -> Tuple[int, int]:
        return self.group_index, self.position


@dataclass(frozen=True)
class Key:
    name: str
    bits: Tuple[int, ...]
    provenance: Tuple[Tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class KeyTriple:
    k_ab: Key
    k_ta: Key
    k_tb: Key


@dataclass(frozen=True)
class Ciphertext:
    bits: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class ComparisonOutcome:
    r_bits: Tuple[int, ...]
    verdict: Verdict


@dataclass
class CheckTally:
    """Eavesdropping-check counts per check kind plus the ordered outcome log"""
    checks: Dict[CheckKind, int] = field(default_factory=lambda: {k: 0 for k in CheckKind})
    violations: Dict[CheckKind, int] = field(default_factory=lambda: {k: 0 for k in CheckKind})
    outcomes: List[Tuple[CheckKind, bool]] = field(default_factory=list)
    key_mismatches: int = 0
    key_positions: int = 0

    def record(self, kind: CheckKind, failed: bool) -> None:
        self.checks[kind] += 1
        self.violations[kind] += int(failed)
        self.outcomes.append((kind, failed))

    def merge(self, other: "CheckTally") -> None:
        for kind in CheckKind:
            self.checks[kind] += other.checks[kind]
            self.violations[kind] += other.violations[kind]
        self.outcomes.extend(other.outcomes)
        self.key_mismatches += other.key_mismatches
        self.key_positions += other.key_positions

    @property
    def total_checks(self) -> int:
        return sum(self.checks.values())

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())

    @property
    def violation_rate(self) -> float:
        return self.total_violations / self.total_checks if self.total_checks else 0.0


@dataclass
class ResourceCounter:
    """Qubits consumed and classical bits published during one run"""
    tp_qubits: int = 0
    alice_regenerations: int = 0
    bob_regenerations: int = 0
    ciphertext_bits: int = 0
    verdict_bits: int = 0

    @property
    def transmitted_qubits(self) -> int:
        return self.tp_qubits

    @property
    def classical_bits(self) -> int:
        return self.ciphertext_bits + self.verdict_bits

    def nominal_efficiency(self, n: int) -> Fraction:
        """
        c / (q + b) with each user budgeted to regenerate half of the
        transmitted qubits.
        """
        consumed = self.tp_qubits + 2 * (self.tp_qubits // 2)
        return Fraction(n, consumed + self.classical_bits)

    def observed_efficiency(self, n: int) -> Fraction:
        consumed = self.tp_qubits + self.alice_regenerations + self.bob_regenerations
        return Fraction(n, consumed + self.classical_bits)


@dataclass(frozen=True, eq=False)
class ProbeEvent:
    """What an attacker (or a dishonest TP) holds about one key bit"""
    key: str
    group_index: int
    position: int
    bit: int
    probe: StateVector
    source: str = "eve"


@dataclass
class PartyView:
    """Everything one role legitimately learned during the run"""
    role: Role
    own_ops: Dict[Tuple[int, int], str] = field(default_factory=dict)
    own_bits: Dict[Tuple[int, int], int] = field(default_factory=dict)
    announced_ops: Dict[str, Dict[Tuple[int, int], str]] = field(default_factory=dict)
    publications: Dict[Tuple[int, int], str] = field(default_factory=dict)
    swap_plan: Dict[int, bool] = field(default_factory=dict)
    keys: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    ciphertexts: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    verdict: Optional[Verdict] = None


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    seed: int
    secret_a: Secret
    secret_b: Secret
    threshold: float = 0.0
    tp_strategy: TpStrategy = TpStrategy.HONEST


@dataclass
class AttackInfo:
    name: str
    info_metric: float
    events: int
    diagnostics: Dict[str, float] = field(default_factory=dict)


@dataclass
class Transcript:
    config: ProtocolConfig
    records: List[GroupRecord]
    tally: CheckTally
    fragments: Dict[str, List[KeyBit]]
    resources: ResourceCounter
    views: Dict[Role, PartyView]
    keys: Optional[KeyTriple] = None
    ciphertexts: Dict[str, Ciphertext] = field(default_factory=dict)
    outcome: Optional[ComparisonOutcome] = None
    key_agreement: Dict[str, bool] = field(default_factory=dict)
    attack: Optional[AttackInfo] = None
    probe_events: List[ProbeEvent] = field(default_factory=list)
    check_groups: Tuple[int, ...] = ()

    @property
    def plans(self) -> List[GroupPlan]:
        return [r.plan for r in self.records]
