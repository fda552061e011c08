"""
Circuit scenarios, detection curves, the qubit-efficiency table and
statistics over honest runs.
"""

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2_contingency

from exceptions import UnknownScenarioError
from models import (
    GROUP_SIZE,
    ORIGINAL_PAIRS,
    GroupPlan,
    ResourceCounter,
    Role,
    SiftClass,
    Transcript,
    UserOp,
    transit_position,
)
from utils import statevector as sv
from utils.channel import HonestTp, TransitGroup, restore_group, tp_measure_z
from utils.protocol_engine import classify_qubit
from utils.randomness import BATCH_SEGMENT, RandomStreams
from utils.statevector import BellKind, StateVector

logger = logging.getLogger(__name__)

SCENARIOS = ("bell", "reflect-reflect", "measure-all", "mixed-ops")
DEFAULT_SHOTS = 1024
DEFAULT_BATCH = 256

# transit slots each user measures in the mixed-operations circuit
MIXED_ALICE_SLOTS = (0, 2)
MIXED_BOB_SLOTS = (0, 1)
# TP reads the first three restored qubits
MIXED_TP_QUBITS = (0, 1, 2)


def register_string(bits: Sequence[int]) -> str:
    """Register readout with the highest qubit leftmost"""
    return "".join(str(int(b)) for b in reversed(bits))


# ============================================
# SCENARIOS
# ============================================

@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    kind: BellKind = BellKind.PHI_PLUS
    swapped: bool = False
    shots: int = DEFAULT_SHOTS
    seed: int = 0
    batch_size: int = DEFAULT_BATCH

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise UnknownScenarioError(f"Unknown scenario: {self.scenario} (choose from {', '.join(SCENARIOS)})")
        if self.shots < 1:
            raise ValueError("shots must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not isinstance(self.kind, BellKind):
            object.__setattr__(self, "kind", BellKind.from_label(str(self.kind)))

    @property
    def width(self) -> int:
        return {"bell": 2, "reflect-reflect": 4, "measure-all": 4, "mixed-ops": 7}[self.scenario]


@dataclass
class Histogram:
    """Outcome counts plus, per named relation, the number of shots in which it held"""
    spec: ScenarioSpec
    counts: Dict[str, int]
    relations: Dict[str, int] = field(default_factory=dict)

    @property
    def shots(self) -> int:
        return sum(self.counts.values())

    @property
    def support(self) -> List[str]:
        return sorted(self.counts)

    def frequencies(self) -> Dict[str, float]:
        return {outcome: count / self.shots for outcome, count in self.counts.items()}


def _bell_frame_readout(group: TransitGroup, rng: np.random.Generator) -> List[int]:
    """CNOT(i->j), H(i) on each restored pair, then Z on all four qubits"""
    for i, j in ORIGINAL_PAIRS:
        group.gate("CNOT", group.wires[i], group.wires[j])
        group.gate("H", group.wires[i])
    return [group.measure_z(group.wires[o], rng)[0] for o in range(GROUP_SIZE)]


def bell_preparation(kind: BellKind) -> StateVector:
    """|00>, X on qubit 0 for a phase flip and on qubit 1 for a parity flip, then H(0), CNOT(0->1)"""
    state = sv.zero_state(2)
    if kind.value[1] == "1":
        state = sv.apply_gate(state, "X", 0)
    if kind.value[0] == "1":
        state = sv.apply_gate(state, "X", 1)
    return sv.apply_gate(sv.apply_gate(state, "H", 0), "CNOT", 0, 1)


def _bell_shot(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[str, Dict[str, bool]]:
    state = sv.apply_gate(sv.apply_gate(bell_preparation(spec.kind), "CNOT", 0, 1), "H", 0)
    bits = []
    for qubit in (0, 1):
        bit, state, _ = sv.measure_z(state, qubit, rng)
        bits.append(bit)
    return register_string(bits), {}


def _fresh_group(spec: ScenarioSpec, rng: np.random.Generator) -> TransitGroup:
    plan = GroupPlan(group_index=0, swapped=spec.swapped)
    return TransitGroup(plan, HonestTp().prepare(plan, rng))


def _reflect_reflect_shot(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[str, Dict[str, bool]]:
    group = _fresh_group(spec, rng)
    restore_group(group)
    return register_string(_bell_frame_readout(group, rng)), {}


def _measure_all_shot(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[str, Dict[str, bool]]:
    group = _fresh_group(spec, rng)
    alice = [group.measure_z(group.wires[s], rng)[0] for s in range(GROUP_SIZE)]
    bob = [group.measure_z(group.wires[s], rng)[0] for s in range(GROUP_SIZE)]
    restore_group(group)
    tp = _bell_frame_readout(group, rng)
    return register_string(tp), {"alice=bob": alice == bob}


def mixed_ops_relations(swapped: bool) -> Dict[str, int]:
    """
    Original position each agreement relation of the mixed-operations circuit
    lives on, resolved through the swap.
    """
    relation_names = {
        SiftClass.EC_Z: "tp=alice=bob",
        SiftClass.KTA_BIT: "tp=alice",
        SiftClass.KTB_BIT: "tp=bob",
    }
    relations = {}
    for original in MIXED_TP_QUBITS:
        slot = transit_position(original, swapped)
        ops = (
            UserOp.MEASURE if slot in MIXED_ALICE_SLOTS else UserOp.REFLECT,
            UserOp.MEASURE if slot in MIXED_BOB_SLOTS else UserOp.REFLECT,
        )
        sift_class = classify_qubit(False, ops)
        if sift_class in relation_names:
            relations[relation_names[sift_class]] = original
    return relations


def _mixed_ops_shot(spec: ScenarioSpec, rng: np.random.Generator) -> Tuple[str, Dict[str, bool]]:
    group = _fresh_group(spec, rng)
    alice = {s: group.measure_z(group.wires[s], rng)[0] for s in MIXED_ALICE_SLOTS}
    bob = {s: group.measure_z(group.wires[s], rng)[0] for s in MIXED_BOB_SLOTS}
    restore_group(group)
    tp = [tp_measure_z(group, o, rng) for o in MIXED_TP_QUBITS]

    held = {}
    for name, original in mixed_ops_relations(spec.swapped).items():
        slot = transit_position(original, spec.swapped)
        values = [tp[original]]
        if "alice" in name:
            values.append(alice[slot])
        if "bob" in name:
            values.append(bob[slot])
        held[name] = len(set(values)) == 1

    outcome = (
        register_string(tp)
        + register_string([bob[s] for s in MIXED_BOB_SLOTS])
        + register_string([alice[s] for s in MIXED_ALICE_SLOTS])
    )
    return outcome, held


_SHOTS = {
    "bell": _bell_shot,
    "reflect-reflect": _reflect_reflect_shot,
    "measure-all": _measure_all_shot,
    "mixed-ops": _mixed_ops_shot,
}


def _run_batch(spec: ScenarioSpec, batch: int, size: int) -> Tuple[Counter, Counter]:
    rng = RandomStreams(spec.seed).segment(BATCH_SEGMENT, batch)["shots"]
    shot = _SHOTS[spec.scenario]
    counts, relations = Counter(), Counter()
    for _ in range(size):
        outcome, held = shot(spec, rng)
        counts[outcome] += 1
        for name, ok in held.items():
            relations[name] += int(ok)
    return counts, relations


def run_scenario(spec: ScenarioSpec, workers: int = 1) -> Histogram:
    """
    Run a circuit scenario `spec.shots` times.

    Shots are cut into batches of `spec.batch_size`; batch b draws from its own
    stream, so the histogram does not depend on `workers`.
    """
    sizes = [min(spec.batch_size, spec.shots - start) for start in range(0, spec.shots, spec.batch_size)]
    batches = range(len(sizes))
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_batch, [spec] * len(sizes), batches, sizes))
    else:
        results = [_run_batch(spec, b, size) for b, size in zip(batches, sizes)]

    counts, relations = Counter(), Counter()
    for batch_counts, batch_relations in results:
        counts.update(batch_counts)
        relations.update(batch_relations)
    logger.info("scenario %s swapped=%s: %d shots, %d outcomes",
                spec.scenario, spec.swapped, spec.shots, len(counts))
    return Histogram(spec=spec, counts=dict(sorted(counts.items())), relations=dict(sorted(relations.items())))


@dataclass
class ConsistencyReport:
    shots: int
    positions: Dict[str, int]
    held: Dict[str, int]

    @property
    def all_hold(self) -> bool:
        return all(self.held.get(name, 0) == self.shots for name in self.positions)


def mixed_ops_consistency(spec: ScenarioSpec, workers: int = 1) -> ConsistencyReport:
    """Per-shot agreement of TP with Alice, TP with Bob and all three, on swap-resolved positions"""
    if spec.scenario != "mixed-ops":
        raise UnknownScenarioError(f"Consistency relations exist for mixed-ops only, got {spec.scenario}")
    histogram = run_scenario(spec, workers)
    return ConsistencyReport(
        shots=histogram.shots,
        positions=mixed_ops_relations(spec.swapped),
        held=histogram.relations,
    )


# ============================================
# QUBIT EFFICIENCY
# ============================================

@dataclass(frozen=True)
class Linear:
    """a*n + b"""
    a: int
    b: int = 0

    def __call__(self, n: int) -> int:
        return self.a * n + self.b

    def __add__(self, other: "Linear") -> "Linear":
        return Linear(self.a + other.a, self.b + other.b)

    def __str__(self) -> str:
        if not self.a:
            return str(self.b)
        head = "n" if self.a == 1 else f"{self.a}n"
        return f"{head}+{self.b}" if self.b else head


@dataclass(frozen=True)
class EfficiencyRow:
    label: str
    resource: str
    mode: str
    swapping: bool
    pre_shared_key: bool
    psk_cost: Linear
    comparison_cost: Linear
    # q + b as printed in the efficiency column
    eta_denominator: Linear
    c: Linear = Linear(1)
    q: Optional[Linear] = None
    b: Optional[Linear] = None

    def eta(self, n: int) -> Fraction:
        return Fraction(self.c(n), self.eta_denominator(n))

    @property
    def eta_formula(self) -> str:
        return f"{self.c}/({self.eta_denominator})"

    @property
    def cost_columns_consistent(self) -> bool:
        return self.psk_cost + self.comparison_cost == self.eta_denominator

    @property
    def derived(self) -> bool:
        """True when q and b are itemized, so eta = c/(q+b) holds by construction"""
        return self.q is not None and self.b is not None and self.q + self.b == self.eta_denominator


OUR_QUBITS = Linear(16)
OUR_CLASSICAL = Linear(2, 1)

EFFICIENCY_ROWS = (
    EfficiencyRow("Ref.[23]", "Bell states", "Distributed", True, False, Linear(0), Linear(162, 1), Linear(162, 1)),
    EfficiencyRow("Ref.[24]", "Two-particle product particles", "Distributed", False, True,
                  Linear(16), Linear(44, 1), Linear(60, 1)),
    EfficiencyRow("Ref.[25]", "Single particles", "Distributed", False, False, Linear(0), Linear(52, 1), Linear(52, 1)),
    EfficiencyRow("Ref.[26]", "Bell states", "Distributed", False, True, Linear(40), Linear(60, 1), Linear(102, 1)),
    EfficiencyRow("Ref.[27]", "Bell states", "Distributed", False, True, Linear(40), Linear(12, 1), Linear(52, 1)),
    EfficiencyRow("Ref.[28]", "Three-particles G-like states", "Distributed", False, True,
                  Linear(40), Linear(13, 1), Linear(53, 1)),
    EfficiencyRow("Ref.[29]", "Single particles", "Circular", False, False, Linear(0), Linear(18, 1), Linear(18, 1)),
    EfficiencyRow("Our protocol", "Bell states", "Circular", True, False, Linear(0),
                  OUR_QUBITS + OUR_CLASSICAL, OUR_QUBITS + OUR_CLASSICAL, q=OUR_QUBITS, b=OUR_CLASSICAL),
)


def efficiency_table() -> Tuple[EfficiencyRow, ...]:
    return EFFICIENCY_ROWS


def run_efficiency(transcript: Transcript) -> Dict[str, Fraction]:
    """Efficiency of a finished run from its resource counters"""
    resources: ResourceCounter = transcript.resources
    n = transcript.config.n
    return {
        "nominal": resources.nominal_efficiency(n),
        "observed": resources.observed_efficiency(n),
    }


# ============================================
# DETECTION CURVES
# ============================================

@dataclass(frozen=True)
class DetectionPoint:
    k: int
    analytic: float
    empirical: Optional[float] = None


def empirical_detection(failures: Sequence[bool], k: int) -> Optional[float]:
    """Fraction of consecutive, non-overlapping blocks of k checks with at least one failure"""
    if k < 1:
        raise ValueError("k must be at least 1")
    blocks = len(failures) // k
    if not blocks:
        return None
    grid = np.asarray(failures[: blocks * k], dtype=bool).reshape(blocks, k)
    return float(grid.any(axis=1).mean())


def detection_curve(per_check_p: float, ks: Sequence[int],
                    failures: Optional[Sequence[bool]] = None) -> List[DetectionPoint]:
    """1 - (1 - p)^k next to the empirical rate from an ordered check log"""
    if not 0.0 <= per_check_p <= 1.0:
        raise ValueError(f"per-check probability must lie in [0, 1], got {per_check_p}")
    return [
        DetectionPoint(
            k=k,
            analytic=1.0 - (1.0 - per_check_p) ** k,
            empirical=empirical_detection(failures, k) if failures is not None else None,
        )
        for k in ks
    ]


# ============================================
# HONEST-RUN STATISTICS
# ============================================

@dataclass(frozen=True)
class IndependenceTest:
    statistic: float
    p_value: float
    dof: int
    events: int
    table: Tuple[Tuple[int, ...], ...]

    def passes(self, alpha: float = 0.01) -> bool:
        return self.p_value >= alpha


def _tp_view_class(transcript: Transcript, group_index: int, position: int) -> str:
    pair_head = 0 if position < 2 else 2
    published = transcript.views[Role.TP].publications.get((group_index, pair_head), "?")
    swapped = transcript.records[group_index].plan.swapped
    return f"{published}|{'swapped' if swapped else 'plain'}"


def tp_ignorance_test(transcripts: Sequence[Transcript]) -> IndependenceTest:
    """
    Chi-square test of independence between what TP sees of a check group
    (Bell publication, swap flag) and the k_ab bit at that position.
    """
    counts: Dict[str, List[int]] = {}
    events = 0
    for transcript in transcripts:
        for bit in transcript.fragments["k_ab:alice"]:
            row = counts.setdefault(_tp_view_class(transcript, bit.group_index, bit.position), [0, 0])
            row[bit.value] += 1
            events += 1
    table = np.array([counts[name] for name in sorted(counts)], dtype=int).reshape(-1, 2)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if table.shape[0] < 2 or table.shape[1] < 2:
        return IndependenceTest(0.0, 1.0, 0, events, tuple(map(tuple, table.tolist())))
    statistic, p_value, dof, _ = chi2_contingency(table)
    return IndependenceTest(float(statistic), float(p_value), int(dof), events, tuple(map(tuple, table.tolist())))


@dataclass(frozen=True)
class YieldStatistics:
    runs: int
    n: int
    mean_lengths: Dict[str, float]

    def ratio(self, key: str) -> float:
        return self.mean_lengths[key] / self.n


YIELD_FRAGMENTS = {"k_ab": "k_ab:alice", "k_ta": "k_ta:tp", "k_tb": "k_tb:tp"}


def yield_statistics(transcripts: Sequence[Transcript]) -> YieldStatistics:
    """Mean sifted-fragment lengths before truncation to n"""
    if not transcripts:
        raise ValueError("yield_statistics needs at least one transcript")
    n = transcripts[0].config.n
    means = {
        key: float(np.mean([len(t.fragments[fragment]) for t in transcripts]))
        for key, fragment in YIELD_FRAGMENTS.items()
    }
    return YieldStatistics(runs=len(transcripts), n=n, mean_lengths=means)
