"""
Attacks on the comparison protocol and their Monte Carlo evaluation.

External attacks plug into the channel as AttackStrategy hooks; dishonest
third parties replace TP's behaviour. `evaluate` runs many seeded trials
and reports detection and information figures.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from scipy.stats import norm, unitary_group

from exceptions import ConfigError, InsufficientKey, NonUnitaryError, UnknownAttackError
from models import (
    GROUP_SIZE,
    LEG_ORDER,
    ORIGINAL_PAIRS,
    ChannelLeg,
    CheckKind,
    CheckTally,
    GroupPlan,
    ProtocolConfig,
    Role,
    TpStrategy,
    Verdict,
)
from utils import statevector as sv
from utils.channel import AttackStrategy, HonestTp, TransitGroup, tp_measure_z
from utils.protocol_engine import run_protocol
from utils.randomness import RandomStreams
from utils.statevector import BellKind, StateVector

logger = logging.getLogger(__name__)

# the three ways of pairing up four qubits
PAIRINGS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))

LEG_ALIASES = {
    "leg1": ChannelLeg.TP_TO_ALICE,
    "leg2": ChannelLeg.ALICE_TO_BOB,
    "leg3": ChannelLeg.BOB_TO_TP,
}

_IDENTITY_4 = np.eye(4, dtype=complex)
_TRANSIT_BIT_FLIP = np.kron(sv.GATES["X"], np.eye(2, dtype=complex))


def parse_legs(value: Any) -> Tuple[ChannelLeg, ...]:
    """Accepts leg names ('tp->alice'), aliases ('leg1') or a comma-separated string"""
    if value is None:
        return LEG_ORDER
    items = value.split(",") if isinstance(value, str) else list(value)
    legs = []
    for item in items:
        if isinstance(item, ChannelLeg):
            legs.append(item)
            continue
        text = str(item).strip().lower()
        try:
            legs.append(LEG_ALIASES.get(text) or ChannelLeg(text))
        except ValueError:
            raise ConfigError(f"Unknown channel leg: {item}")
    return tuple(leg for leg in LEG_ORDER if leg in legs)


# ============================================
# INTERCEPT-RESEND
# ============================================

class InterceptResend(AttackStrategy):
    """
    Eve keeps the genuine qubits, sends random Z-basis fakes onward, measures
    the fakes when they leave Bob and returns the genuine qubits to TP.
    Variant leg1 starts on TP -> Alice, leg2 on Alice -> Bob.
    """

    name = "intercept-resend"

    def __init__(self, variant: str = "leg1"):
        if variant not in ("leg1", "leg2"):
            raise ConfigError(f"intercept-resend variant must be leg1 or leg2, got {variant}")
        self.variant = variant
        self.divert_leg = LEG_ALIASES[variant]
        self._stored: Dict[int, List[int]] = {}
        self._records: Dict[int, List[int]] = {}

    def intercept(self, leg: ChannelLeg, group: TransitGroup, rng: np.random.Generator) -> None:
        g = group.plan.group_index
        if leg is self.divert_leg:
            fakes = [int(b) for b in rng.integers(2, size=GROUP_SIZE)]
            self._stored[g] = list(group.wires)
            group.wires = group.attach("fake", sv.basis_state(fakes))
            self._records[g] = fakes
        elif leg is ChannelLeg.BOB_TO_TP and g in self._stored:
            for wire in group.wires:
                bit, _ = group.measure_z(wire, rng)
                self._records[g].append(bit)
            group.wires = self._stored.pop(g)

    def probe(self, group: TransitGroup) -> Optional[StateVector]:
        return sv.basis_state(self._records[group.plan.group_index])

    def describe(self) -> Dict[str, object]:
        return {"name": self.name, "variant": self.variant}


# ============================================
# MEASURE-RESEND
# ============================================

class MeasureResend(AttackStrategy):
    """Measure every passing qubit (or pair) in a fixed basis and forward the collapsed state"""

    def __init__(self, basis: str = "z", legs: Iterable[ChannelLeg] = (ChannelLeg.TP_TO_ALICE,),
                 pairing: str = "naive"):
        basis = basis.lower()
        if basis not in ("z", "x", "bell"):
            raise ConfigError(f"measure-resend basis must be z, x or bell, got {basis}")
        if pairing not in ("naive", "random"):
            raise ConfigError(f"pairing must be naive or random, got {pairing}")
        self.basis = basis
        self.legs = parse_legs(legs)
        self.pairing = pairing
        self.name = f"measure-resend-{basis}"
        self._records: Dict[int, List[int]] = {}

    def intercept(self, leg: ChannelLeg, group: TransitGroup, rng: np.random.Generator) -> None:
        if leg not in self.legs:
            return
        record = self._records.setdefault(group.plan.group_index, [])
        if self.basis == "bell":
            pairs = PAIRINGS[0] if self.pairing == "naive" else PAIRINGS[int(rng.integers(len(PAIRINGS)))]
            for i, j in pairs:
                kind, _ = group.measure_bell(group.wires[i], group.wires[j], rng)
                record.extend(int(c) for c in kind.value)
            return
        for wire in group.wires:
            if self.basis == "x":
                group.gate("H", wire)
            bit, _ = group.measure_z(wire, rng)
            if self.basis == "x":
                group.gate("H", wire)
            record.append(bit)

    def probe(self, group: TransitGroup) -> Optional[StateVector]:
        record = self._records.get(group.plan.group_index)
        return sv.basis_state(record) if record else None

    def describe(self) -> Dict[str, object]:
        return {"name": self.name, "legs": [leg.value for leg in self.legs], "pairing": self.pairing}


# ============================================
# DOUBLE-CNOT
# ============================================

class DoubleCnot(AttackStrategy):
    """
    One |0> ancilla per transit qubit; CNOT(transit -> ancilla) on the way to
    Alice and again on the way to Bob. The ancillas end in |0> whatever the
    users did, so Eve learns nothing.
    """

    name = "double-cnot"
    legs = (ChannelLeg.TP_TO_ALICE, ChannelLeg.ALICE_TO_BOB)

    def __init__(self):
        self._ancillas: Dict[int, List[int]] = {}
        self._probes: Dict[int, StateVector] = {}
        self.max_deviation = 0.0
        self.ancilla_ones = 0

    def begin_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        self._ancillas[group.plan.group_index] = group.attach("ancilla", sv.zero_state(GROUP_SIZE))

    def intercept(self, leg: ChannelLeg, group: TransitGroup, rng: np.random.Generator) -> None:
        if leg not in self.legs:
            return
        ancillas = self._ancillas[group.plan.group_index]
        for slot, ancilla in enumerate(ancillas):
            group.gate("CNOT", group.wires[slot], ancilla)

    def finish_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        g = group.plan.group_index
        ancillas = self._ancillas[g]
        self.max_deviation = max(self.max_deviation, 1.0 - sv.probability_all_zero(group.state, ancillas))
        self._probes[g] = sv.extract_subsystem(group.state, ancillas)
        for ancilla in ancillas:
            bit, _ = group.measure_z(ancilla, rng)
            self.ancilla_ones += bit

    def probe(self, group: TransitGroup) -> Optional[StateVector]:
        return self._probes.get(group.plan.group_index)

    def diagnostics(self) -> Dict[str, float]:
        return {"max_ancilla_deviation": self.max_deviation, "ancilla_ones": float(self.ancilla_ones)}


# ============================================
# COLLECTIVE ATTACKS
# ============================================

@dataclass(frozen=True, eq=False)
class CollectiveUnitary:
    """U1, U2, U3 on (transit qubit, probe qubit), transit the most significant"""
    u1: np.ndarray = field(default_factory=lambda: _IDENTITY_4)
    u2: np.ndarray = field(default_factory=lambda: _IDENTITY_4)
    u3: np.ndarray = field(default_factory=lambda: _IDENTITY_4)

    def __post_init__(self):
        for name in ("u1", "u2", "u3"):
            matrix = sv.check_unitary(getattr(self, name))
            if matrix.shape != (4, 4):
                raise NonUnitaryError(f"{name} must be 4x4, got {matrix.shape}")
            object.__setattr__(self, name, matrix)

    def for_leg(self, leg: ChannelLeg) -> np.ndarray:
        return {
            ChannelLeg.TP_TO_ALICE: self.u1,
            ChannelLeg.ALICE_TO_BOB: self.u2,
            ChannelLeg.BOB_TO_TP: self.u3,
        }[leg]

    @classmethod
    def identity(cls) -> "CollectiveUnitary":
        return cls()

    @classmethod
    def preset(cls, name: str) -> "CollectiveUnitary":
        presets = {
            "identity": cls(),
            "bitflip-u1": cls(u1=_TRANSIT_BIT_FLIP),
            "bitflip-u2": cls(u2=_TRANSIT_BIT_FLIP),
            "bitflip-u3": cls(u3=_TRANSIT_BIT_FLIP),
        }
        if name not in presets:
            raise ConfigError(f"Unknown collective preset: {name}")
        return presets[name]


class Collective(AttackStrategy):
    """Probe qubit per transit slot, shared by the three legs, starting in |0>"""

    name = "collective"

    def __init__(self, unitary: Optional[CollectiveUnitary] = None, legs: Iterable[ChannelLeg] = LEG_ORDER):
        self.unitary = unitary
        self.legs = parse_legs(legs)
        self._probe_wires: Dict[int, List[int]] = {}
        self._probes: Dict[int, StateVector] = {}

    def begin_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        self._probe_wires[group.plan.group_index] = group.attach("probe", sv.zero_state(GROUP_SIZE))

    def intercept(self, leg: ChannelLeg, group: TransitGroup, rng: np.random.Generator) -> None:
        if leg not in self.legs:
            return
        matrix = self.unitary.for_leg(leg)
        probes = self._probe_wires[group.plan.group_index]
        for slot, probe in enumerate(probes):
            group.apply(matrix, [group.wires[slot], probe], validate=False)

    def finish_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        g = group.plan.group_index
        self._probes[g] = sv.extract_subsystem(group.state, self._probe_wires[g])

    def probe(self, group: TransitGroup) -> Optional[StateVector]:
        return self._probes.get(group.plan.group_index)

    def diagnostics(self) -> Dict[str, float]:
        return {
            "reflect_pair_failure": exact_reflect_pair_failure(self.unitary),
            "conditioned_probe_distance": conditioned_probe_distance(self.unitary),
        }


class SampledCollective(Collective):
    """Transit-diagonal collective attack whose unitaries are drawn once per run"""

    def __init__(self, enforce_probe_independence: bool = True, legs: Iterable[ChannelLeg] = LEG_ORDER):
        super().__init__(None, legs)
        self.enforce = enforce_probe_independence
        self.name = "collective-constrained" if enforce_probe_independence else "collective-diagonal"

    def begin_group(self, group: TransitGroup, rng: np.random.Generator) -> None:
        if self.unitary is None:
            self.unitary = sample_constrained_collective(rng, self.enforce)
        super().begin_group(group, rng)


def _haar_2(rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(2, random_state=rng)


def _rotation_to(vector: np.ndarray) -> np.ndarray:
    """Unitary whose first column is `vector`"""
    a, b = vector
    return np.array([[a, -np.conj(b)], [b, np.conj(a)]], dtype=complex)


def transit_diagonal(block0: np.ndarray, block1: np.ndarray) -> np.ndarray:
    """|0><0| (x) block0 + |1><1| (x) block1: the probe turns, the transit bit stays"""
    return np.kron(np.diag([1, 0]), block0) + np.kron(np.diag([0, 1]), block1)


def sample_constrained_collective(rng: np.random.Generator, enforce_probe_independence: bool = True
                                  ) -> CollectiveUnitary:
    """
    Random transit-diagonal U1, U2, U3 (Haar-random probe rotations per transit bit).

    With `enforce_probe_independence` the last rotation is chosen so that the
    probe ends in the same state for transit bit 0 and 1, which makes the
    attack both undetectable and useless.
    """
    a1 = (_haar_2(rng), _haar_2(rng))
    a2 = (_haar_2(rng), _haar_2(rng))
    a3_0 = _haar_2(rng)
    if enforce_probe_independence:
        e0 = np.array([1, 0], dtype=complex)
        target = a3_0 @ a2[0] @ a1[0] @ e0
        start = a2[1] @ a1[1] @ e0
        phase = np.exp(1j * rng.uniform(0, 2 * np.pi))
        a3_1 = _rotation_to(target) @ np.diag([1, phase]) @ _rotation_to(start).conj().T
    else:
        a3_1 = _haar_2(rng)
    return CollectiveUnitary(
        u1=transit_diagonal(*a1),
        u2=transit_diagonal(*a2),
        u3=transit_diagonal(a3_0, a3_1),
    )


def exact_reflect_pair_failure(unitary: CollectiveUnitary) -> float:
    """Probability that a both-Reflect pair fails its Bell check under `unitary` (no sampling)"""
    # qubits: transit 0, transit 1, probe 0, probe 1
    state = sv.compose([sv.prepare_bell(BellKind.PHI_PLUS), sv.zero_state(2)])
    for leg in LEG_ORDER:
        matrix = unitary.for_leg(leg)
        state = sv.apply_unitary(state, matrix, [0, 2], validate=False)
        state = sv.apply_unitary(state, matrix, [1, 3], validate=False)
    return max(0.0, 1.0 - sv.bell_probabilities(state, 0, 1)[BellKind.PHI_PLUS])


def conditioned_probe_distance(unitary: CollectiveUnitary) -> float:
    """
    Trace distance between the final probe states for transit bit 0 and 1.

    Meant for unitaries that keep the transit bit; if a bit can flip, the
    branch that keeps it is used, and 1.0 is returned when none does.
    """
    probes = []
    for bit in (0, 1):
        state = sv.basis_state([bit, 0])
        for leg in LEG_ORDER:
            state = sv.apply_unitary(state, unitary.for_leg(leg), [0, 1], validate=False)
        amplitudes = np.array(state.tensor()[bit])
        weight = np.linalg.norm(amplitudes)
        if weight < sv.AMPLITUDE_TOLERANCE:
            return 1.0
        probes.append(StateVector(amplitudes / weight))
    return sv.trace_distance_pure(*probes)


# ============================================
# DISHONEST THIRD PARTY
# ============================================

class ZMeasureRandomPublishTp(HonestTp):
    """Z-measures the returned check qubits and publishes phi+ or phi- by coin flip"""

    strategy = TpStrategy.Z_MEASURE_THEN_RANDOM_PUBLISH.value
    reports_step6 = False

    def publish_check_group(self, group: TransitGroup, rng: np.random.Generator) -> Dict[Tuple[int, int], BellKind]:
        for original in range(GROUP_SIZE):
            tp_measure_z(group, original, rng)
        return {
            pair: BellKind.PHI_PLUS if rng.integers(2) == 0 else BellKind.PHI_MINUS
            for pair in ORIGINAL_PAIRS
        }

    def probe(self, group: TransitGroup, original: int) -> Optional[StateVector]:
        bit = group.record.tp_z_bit(original)
        return sv.basis_state([bit]) if bit is not None else None


class FakeZBasisTp(ZMeasureRandomPublishTp):
    """Sends random Z-basis product states instead of Bell pairs"""

    strategy = TpStrategy.FAKE_Z_BASIS_STATES.value

    def prepare(self, plan: GroupPlan, rng: np.random.Generator) -> StateVector:
        state = sv.basis_state([int(b) for b in rng.integers(2, size=GROUP_SIZE)])
        return sv.swap_pairing(state) if plan.swapped else state


def dishonest_tp(strategy: TpStrategy) -> HonestTp:
    strategy = TpStrategy(strategy)
    if strategy is TpStrategy.Z_MEASURE_THEN_RANDOM_PUBLISH:
        return ZMeasureRandomPublishTp()
    if strategy is TpStrategy.FAKE_Z_BASIS_STATES:
        return FakeZBasisTp()
    return HonestTp()


# ============================================
# REGISTRY
# ============================================

ATTACK_NAMES = (
    "none",
    "intercept-resend",
    "measure-resend-z",
    "measure-resend-x",
    "measure-resend-bell",
    "double-cnot",
    "collective",
    "collective-constrained",
    "collective-diagonal",
)
TP_ATTACKS = {
    "tp-zmeasure": TpStrategy.Z_MEASURE_THEN_RANDOM_PUBLISH,
    "tp-fake-z": TpStrategy.FAKE_Z_BASIS_STATES,
}
# an insider reuses an external attack on the leg it does not take part in
INSIDER_LEGS = {
    Role.ALICE: (ChannelLeg.BOB_TO_TP, ("k_tb",)),
    Role.BOB: (ChannelLeg.TP_TO_ALICE, ("k_ta",)),
}
_LEG_RESTRICTABLE = ("measure-resend-z", "measure-resend-x", "measure-resend-bell",
                     "collective", "collective-constrained", "collective-diagonal")


def _matrix(value: Any, label: str) -> np.ndarray:
    """Nested lists of numbers, or of [re, im] pairs, as a complex matrix"""
    array = np.asarray(value, dtype=float)
    if array.ndim == 3 and array.shape[-1] == 2:
        array = array[..., 0] + 1j * array[..., 1]
    if array.shape != (4, 4):
        raise ConfigError(f"{label} must be a 4x4 matrix, got shape {array.shape}")
    return array.astype(complex)


def _collective_unitary(params: Mapping[str, Any]) -> CollectiveUnitary:
    if "preset" in params:
        return CollectiveUnitary.preset(str(params["preset"]))
    matrices = {name: _matrix(params[name], name) for name in ("u1", "u2", "u3") if name in params}
    try:
        return CollectiveUnitary(**matrices)
    except NonUnitaryError as exc:
        raise ConfigError(str(exc))


def build_attack(name: str, params: Optional[Mapping[str, Any]] = None,
                 insider: Optional[str] = None) -> Optional[AttackStrategy]:
    """
    Instantiate an external attack by registry name.

    Returns None for `none` and for the TP strategies, which are not channel hooks.

    Raises:
        UnknownAttackError: name not registered
        ConfigError: bad parameters or an attack that cannot run as an insider
    """
    params = dict(params or {})
    if name not in ATTACK_NAMES and name not in TP_ATTACKS:
        raise UnknownAttackError(f"Unknown attack: {name} (choose from {', '.join(ATTACK_NAMES + tuple(TP_ATTACKS))})")
    if insider:
        role = Role(insider)
        if role not in INSIDER_LEGS or name not in _LEG_RESTRICTABLE:
            raise ConfigError(f"{name} cannot be run by insider {insider}")
        leg, targets = INSIDER_LEGS[role]
        params["legs"] = [leg]

    if name in ("none",) or name in TP_ATTACKS:
        return None
    if name == "intercept-resend":
        attack: AttackStrategy = InterceptResend(variant=params.get("variant", "leg1"))
    elif name.startswith("measure-resend-"):
        attack = MeasureResend(
            basis=name.rsplit("-", 1)[1],
            legs=parse_legs(params.get("legs", [ChannelLeg.TP_TO_ALICE])),
            pairing=params.get("pairing", "naive"),
        )
    elif name == "double-cnot":
        attack = DoubleCnot()
    elif name == "collective":
        attack = Collective(_collective_unitary(params), legs=parse_legs(params.get("legs")))
    else:
        attack = SampledCollective(name == "collective-constrained", legs=parse_legs(params.get("legs")))

    if insider:
        attack.targets = targets
        attack.name = f"insider-{insider}:{attack.name}"
    return attack


@dataclass(frozen=True)
class AttackSpec:
    """Picklable description of an attack; every trial builds its own instance"""
    name: str = "none"
    params: Dict[str, Any] = field(default_factory=dict)
    insider: Optional[str] = None

    @property
    def tp_strategy(self) -> TpStrategy:
        return TP_ATTACKS.get(self.name, TpStrategy.HONEST)

    def build(self) -> Optional[AttackStrategy]:
        return build_attack(self.name, self.params, self.insider)


# ============================================
# EVALUATION
# ============================================

def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion"""
    if trials <= 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2))
    p = successes / trials
    denominator = 1 + z ** 2 / trials
    center = (p + z ** 2 / (2 * trials)) / denominator
    half = z * np.sqrt(p * (1 - p) / trials + z ** 2 / (4 * trials ** 2)) / denominator
    low = 0.0 if successes == 0 else max(0.0, float(center - half))
    high = 1.0 if successes == trials else min(1.0, float(center + half))
    return low, high


@dataclass
class TrialOutcome:
    index: int
    tally: CheckTally
    info_metric: float
    diagnostics: Dict[str, float]
    insufficient_key: bool
    verdict_correct: Optional[bool]


@dataclass
class AttackReport:
    name: str
    params: Dict[str, Any]
    insider: Optional[str]
    n: int
    seed: int
    trials: int
    detected: int
    detection_rate: float
    ci_low: float
    ci_high: float
    info_metric: float
    mean_info: float
    tally: CheckTally
    key_mismatch_rate: float
    insufficient_key_runs: int
    verdict_errors: int
    diagnostics: Dict[str, float] = field(default_factory=dict)

    def class_rate(self, kind: CheckKind) -> float:
        checks = self.tally.checks[kind]
        return self.tally.violations[kind] / checks if checks else 0.0

    def class_outcomes(self, kind: CheckKind) -> List[bool]:
        """Ordered pass/fail log of one check class across all trials"""
        return [failed for k, failed in self.tally.outcomes if k is kind]

    @property
    def check_failure_rate(self) -> float:
        return self.tally.violation_rate


def run_trial(spec: AttackSpec, config: ProtocolConfig, index: int) -> TrialOutcome:
    """One evaluation trial: threshold 1.0 so no run aborts, own trial segment of the seed"""
    trial_config = replace(config, threshold=1.0, tp_strategy=spec.tp_strategy)
    streams = RandomStreams(config.seed).trial(index)
    attack = spec.build()
    insufficient = False
    try:
        transcript = run_protocol(trial_config, attack=attack, streams=streams)
    except InsufficientKey as exc:
        transcript = exc.transcript
        insufficient = True

    verdict_correct = None
    if transcript.outcome is not None:
        expected = Verdict.EQUAL if config.secret_a == config.secret_b else Verdict.NOT_EQUAL
        verdict_correct = transcript.outcome.verdict is expected
    return TrialOutcome(
        index=index,
        tally=transcript.tally,
        info_metric=transcript.attack.info_metric if transcript.attack else 0.0,
        diagnostics=transcript.attack.diagnostics if transcript.attack else {},
        insufficient_key=insufficient,
        verdict_correct=verdict_correct,
    )


def _merge_diagnostics(total: Dict[str, float], extra: Mapping[str, float]) -> None:
    for name, value in extra.items():
        if name.startswith("max_") or name in ("reflect_pair_failure", "conditioned_probe_distance"):
            total[name] = max(total.get(name, 0.0), float(value))
        else:
            total[name] = total.get(name, 0.0) + float(value)


def evaluate(spec: AttackSpec, config: ProtocolConfig, trials: int, workers: int = 1) -> AttackReport:
    """
    Monte Carlo over `trials` independent seeded runs.

    Trial i draws from segment (1, i) of config.seed, so the report does not
    depend on `workers`; results are merged in trial order. Probe states are
    compared within a run only, and info_metric is the largest per-run value.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    indices = range(trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_trial, [spec] * trials, [config] * trials, indices,
                                     chunksize=max(1, trials // (4 * workers))))
    else:
        outcomes = [run_trial(spec, config, i) for i in indices]

    tally = CheckTally()
    diagnostics: Dict[str, float] = {}
    for outcome in outcomes:
        tally.merge(outcome.tally)
        _merge_diagnostics(diagnostics, outcome.diagnostics)

    detected = sum(o.tally.total_violations > 0 for o in outcomes)
    low, high = wilson_interval(detected, trials)
    report = AttackReport(
        name=spec.name,
        params=dict(spec.params),
        insider=spec.insider,
        n=config.n,
        seed=config.seed,
        trials=trials,
        detected=detected,
        detection_rate=detected / trials,
        ci_low=low,
        ci_high=high,
        info_metric=max(o.info_metric for o in outcomes),
        mean_info=float(np.mean([o.info_metric for o in outcomes])),
        tally=tally,
        key_mismatch_rate=tally.key_mismatches / tally.key_positions if tally.key_positions else 0.0,
        insufficient_key_runs=sum(o.insufficient_key for o in outcomes),
        verdict_errors=sum(o.verdict_correct is False for o in outcomes),
        diagnostics=diagnostics,
    )
    logger.info("%s: %d/%d trials detected, info %.3g", spec.name, detected, trials, report.info_metric)
    return report
