"""
Protocol engine: Steps 1-8 of the comparison protocol with party-view separation.

TP prepares 2n groups of two Bell pairs and re-pairs each group at random,
the qubits travel TP -> Alice -> Bob -> TP while each classical user measures
or reflects, TP restores the order, half of the groups check the channel and
produce K_AB (Step 5), the rest yield K_TA and K_TB (Step 6), and finally the
users encrypt and TP announces the comparison.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from exceptions import (
    DetectionAbort,
    IncompleteRecordError,
    InsufficientKey,
    KeyConsistencyViolation,
    LengthMismatchError,
)
from models import (
    GROUP_SIZE,
    ORIGINAL_PAIRS,
    AttackInfo,
    ChannelLeg,
    CheckKind,
    CheckTally,
    Ciphertext,
    ComparisonOutcome,
    GroupPlan,
    GroupRecord,
    Key,
    KeyBit,
    KeyTriple,
    PartyView,
    ProbeEvent,
    ProtocolConfig,
    ResourceCounter,
    Role,
    Secret,
    SiftClass,
    TpStrategy,
    Transcript,
    UserOp,
    Verdict,
)
from utils import statevector as sv
from utils.channel import (
    AttackStrategy,
    HonestTp,
    TpBehaviour,
    TransitGroup,
    restore_group,
    tp_measure_z,
    user_act,
)
from utils.randomness import RandomStreams
from utils.statevector import BellKind, MeasurementRecord, StateVector

logger = logging.getLogger(__name__)

KEY_NAMES = ("k_ab", "k_ta", "k_tb")

Bits = Union[Secret, Key, Ciphertext, Sequence[int]]

M, R = UserOp.MEASURE, UserOp.REFLECT


# ============================================
# STEP 1: PREPARATION
# ============================================

def tp_behaviour(strategy: TpStrategy) -> TpBehaviour:
    if TpStrategy(strategy) is TpStrategy.HONEST:
        return HonestTp()
    # dishonest behaviours are attacks and live with the other attacks
    from utils.adversary import dishonest_tp
    return dishonest_tp(strategy)


def tp_prepare(n: int, rng: np.random.Generator, tp: Optional[TpBehaviour] = None
               ) -> Tuple[List[StateVector], List[GroupPlan]]:
    """
    Prepare 2n four-qubit groups and the secret swap plan.

    Args:
        n: secret length
        rng: TP's preparation stream

    Returns:
        (group states in transit order, plans)
    """
    if n < 1:
        raise ValueError(f"Secret length must be at least 1, got {n}")
    tp = tp or HonestTp()
    plans = [GroupPlan(group_index=g, swapped=bool(rng.integers(2))) for g in range(2 * n)]
    states = [tp.prepare(plan, rng) for plan in plans]
    return states, plans


# ============================================
# STEP 5/6: SIFTING
# ============================================

def select_check_groups(num_groups: int, rng: np.random.Generator) -> FrozenSet[int]:
    """Alice and Bob's joint public choice of half of the groups"""
    if num_groups <= 0 or num_groups % 2:
        raise ValueError(f"Need a positive even number of groups, got {num_groups}")
    chosen = rng.choice(num_groups, size=num_groups // 2, replace=False)
    return frozenset(int(g) for g in chosen)


def classify_qubit(check_group: bool, ops: Tuple[UserOp, UserOp]) -> SiftClass:
    """Class of a qubit that is not part of a both-Reflect pair"""
    if check_group:
        return SiftClass.KAB_BIT if ops == (M, M) else SiftClass.DISCARD
    return {
        (M, M): SiftClass.EC_Z,
        (M, R): SiftClass.KTA_BIT,
        (R, M): SiftClass.KTB_BIT,
    }.get(tuple(ops), SiftClass.DISCARD)


def classify_pair(check_group: bool, first: Tuple[UserOp, UserOp], second: Tuple[UserOp, UserOp]
                  ) -> Tuple[SiftClass, SiftClass]:
    """
    Classes of the two qubits of one original Bell pair.

    Args:
        check_group: whether the group was selected in Step 5
        first, second: (alice_op, bob_op) for each qubit of the pair
    """
    if tuple(first) == (R, R) and tuple(second) == (R, R):
        return SiftClass.EC_BELL, SiftClass.EC_BELL
    return classify_qubit(check_group, first), classify_qubit(check_group, second)


def sift(record: GroupRecord) -> Tuple[SiftClass, ...]:
    """Per-qubit classes of a group, indexed by original position"""
    ops = []
    for original in range(GROUP_SIZE):
        alice, bob = record.ops_at(original)
        if alice is None or bob is None:
            raise IncompleteRecordError(
                f"Group {record.group_index} lacks the operations on qubit {original}"
            )
        ops.append((alice, bob))
    classes: List[SiftClass] = []
    for i, j in ORIGINAL_PAIRS:
        classes.extend(classify_pair(record.check_group, ops[i], ops[j]))
    return tuple(classes)


@dataclass
class Step5Result:
    k_ab_alice: List[KeyBit] = field(default_factory=list)
    k_ab_bob: List[KeyBit] = field(default_factory=list)
    publications: Dict[int, Dict[Tuple[int, int], BellKind]] = field(default_factory=dict)
    violations: int = 0


@dataclass
class Step6Result:
    k_ta_tp: List[KeyBit] = field(default_factory=list)
    k_ta_alice: List[KeyBit] = field(default_factory=list)
    k_tb_tp: List[KeyBit] = field(default_factory=list)
    k_tb_bob: List[KeyBit] = field(default_factory=list)
    violations: int = 0


def _key_pair(tally: CheckTally, first: int, second: int) -> None:
    tally.key_positions += 1
    tally.key_mismatches += int(first != second)


def step5_verify_and_extract(groups: Sequence[TransitGroup], tp: TpBehaviour, rng: np.random.Generator,
                             tally: Optional[CheckTally] = None, strict: bool = True) -> Step5Result:
    """
    Step 5 on the restored check groups.

    TP measures and publishes first; only then do Alice and Bob reveal their
    operations, so a dishonest publication cannot be tailored to them.

    Raises:
        KeyConsistencyViolation: with `strict`, when Alice and Bob disagree on a K_AB bit
    """
    tally = tally if tally is not None else CheckTally()
    result = Step5Result()
    for group in groups:
        record = group.record
        record.check_group = True
        publications = tp.publish_check_group(group, rng)
        result.publications[record.group_index] = publications

        classes = sift(record)
        for pair in ORIGINAL_PAIRS:
            if classes[pair[0]] is SiftClass.EC_BELL:
                failed = publications[pair] is not BellKind.PHI_PLUS
                tally.record(CheckKind.STEP5_BELL, failed)
                result.violations += int(failed)
                logger.debug("group %d pair %s: published %s", record.group_index, pair, publications[pair].label)

        for original, cls in enumerate(classes):
            if cls is not SiftClass.KAB_BIT:
                continue
            alice_bit, bob_bit = record.bits_at(original)
            if strict and alice_bit != bob_bit:
                raise KeyConsistencyViolation(record.group_index, original, alice_bit, bob_bit)
            _key_pair(tally, alice_bit, bob_bit)
            result.k_ab_alice.append(KeyBit(record.group_index, original, alice_bit))
            result.k_ab_bob.append(KeyBit(record.group_index, original, bob_bit))
    return result


def step6_process(groups: Sequence[TransitGroup], tp: TpBehaviour, rng: np.random.Generator,
                  tally: Optional[CheckTally] = None) -> Step6Result:
    """
    Step 6 on the remaining groups, after Alice and Bob told TP their operations.

    Both-Reflect pairs are Bell-checked, mixed qubits give TP a key bit and
    both-Measure qubits are compared three ways. Lone both-Reflect qubits are
    measured last and used for nothing.
    """
    tally = tally if tally is not None else CheckTally()
    result = Step6Result()
    for group in groups:
        record = group.record
        classes = sift(record)
        g = record.group_index
        for pair in ORIGINAL_PAIRS:
            if classes[pair[0]] is SiftClass.EC_BELL:
                kind, measured = group.measure_bell(group.wires[pair[0]], group.wires[pair[1]], rng)
                record.tp_measurements.append(MeasurementRecord(pair, kind, measured.probability))
                failed = tp.reports_step6 and kind is not BellKind.PHI_PLUS
                tally.record(CheckKind.STEP6_BELL, failed)
                result.violations += int(failed)
                continue
            for original in pair:
                cls = classes[original]
                if cls is SiftClass.DISCARD:
                    continue
                tp_bit = tp_measure_z(group, original, rng)
                alice_bit, bob_bit = record.bits_at(original)
                if cls is SiftClass.EC_Z:
                    failed = tp.reports_step6 and not (tp_bit == alice_bit == bob_bit)
                    tally.record(CheckKind.STEP6_Z, failed)
                    result.violations += int(failed)
                elif cls is SiftClass.KTA_BIT:
                    _key_pair(tally, tp_bit, alice_bit)
                    result.k_ta_tp.append(KeyBit(g, original, tp_bit))
                    result.k_ta_alice.append(KeyBit(g, original, alice_bit))
                elif cls is SiftClass.KTB_BIT:
                    _key_pair(tally, tp_bit, bob_bit)
                    result.k_tb_tp.append(KeyBit(g, original, tp_bit))
                    result.k_tb_bob.append(KeyBit(g, original, bob_bit))
        for original, cls in enumerate(classes):
            if cls is SiftClass.DISCARD:
                tp_measure_z(group, original, rng)
    return result


# ============================================
# STEP 7/8: KEYS, ENCRYPTION, COMPARISON
# ============================================

def assemble_key(name: str, fragment: Iterable[KeyBit], n: int) -> Key:
    """
    Order a key fragment by (group, original position) and keep its first n bits.

    Raises:
        InsufficientKey: fewer than n bits were sifted
    """
    ordered = sorted(fragment, key=lambda bit: bit.provenance)
    if len(ordered) < n:
        raise InsufficientKey(name, len(ordered), n)
    kept = ordered[:n]
    return Key(
        name=name,
        bits=tuple(int(b.value) for b in kept),
        provenance=tuple(b.provenance for b in kept),
    )


def assemble_keys(fragments: Mapping[str, Iterable[KeyBit]], n: int) -> KeyTriple:
    return KeyTriple(**{name: assemble_key(name, fragments[name], n) for name in KEY_NAMES})


def _as_bits(value: Bits) -> np.ndarray:
    bits = value.bits if hasattr(value, "bits") else value
    return np.asarray(tuple(bits), dtype=np.uint8)


def _xor(*operands: Bits) -> Tuple[int, ...]:
    arrays = [_as_bits(op) for op in operands]
    lengths = {a.size for a in arrays}
    if len(lengths) != 1:
        raise LengthMismatchError(f"Bit strings of lengths {sorted(lengths)} cannot be combined")
    return tuple(int(b) for b in np.bitwise_xor.reduce(arrays))


def encrypt(secret: Bits, k_ab: Bits, k_own: Bits) -> Ciphertext:
    """Q^j = k_ab^j xor k_own^j xor m^j"""
    return Ciphertext(_xor(k_ab, k_own, secret))


def compare(q_a: Bits, q_b: Bits, k_ta: Bits, k_tb: Bits) -> ComparisonOutcome:
    """R^j = Q_A^j xor Q_B^j xor k_ta^j xor k_tb^j; equal iff every R^j is 0"""
    r_bits = _xor(q_a, q_b, k_ta, k_tb)
    verdict = Verdict.EQUAL if not any(r_bits) else Verdict.NOT_EQUAL
    return ComparisonOutcome(r_bits=r_bits, verdict=verdict)


# ============================================
# ORCHESTRATION
# ============================================

def _transmit(group: TransitGroup, attack: AttackStrategy, streams: RandomStreams) -> None:
    adversary = streams["adversary"]
    attack.begin_group(group, adversary)
    attack.intercept(ChannelLeg.TP_TO_ALICE, group, adversary)
    for slot in range(GROUP_SIZE):
        user_act(group, slot, Role.ALICE, streams["alice"])
    attack.intercept(ChannelLeg.ALICE_TO_BOB, group, adversary)
    for slot in range(GROUP_SIZE):
        user_act(group, slot, Role.BOB, streams["bob"])
    attack.intercept(ChannelLeg.BOB_TO_TP, group, adversary)
    restore_group(group)


def _probe_events(groups: Sequence[TransitGroup], fragments: Mapping[str, Sequence[KeyBit]],
                  attack: AttackStrategy, tp: TpBehaviour) -> List[ProbeEvent]:
    events: List[ProbeEvent] = []
    probes: Dict[int, Optional[StateVector]] = {}
    # the honest holder's value is the one an attacker is after
    holders = {"k_ab": "k_ab:alice", "k_ta": "k_ta:alice", "k_tb": "k_tb:bob"}
    for key, holder in holders.items():
        for bit in fragments[holder]:
            if key in attack.targets:
                if bit.group_index not in probes:
                    probes[bit.group_index] = attack.probe(groups[bit.group_index])
                probe = probes[bit.group_index]
                if probe is not None:
                    events.append(ProbeEvent(key, bit.group_index, bit.position, bit.value, probe))
            if key == "k_ab":
                held = tp.probe(groups[bit.group_index], bit.position)
                if held is not None:
                    events.append(ProbeEvent(key, bit.group_index, bit.position, bit.value, held, source="tp"))
    return events


def information_metric(events: Sequence[ProbeEvent]) -> float:
    """
    Max trace distance between probes of key bit 0 and key bit 1, taken per
    probe source (0 when a class is empty).
    """
    best = 0.0
    for source in {e.source for e in events}:
        zeros = [e.probe for e in events if e.source == source and e.bit == 0]
        ones = [e.probe for e in events if e.source == source and e.bit == 1]
        best = max(best, sv.max_trace_distance(zeros, ones))
    return best


def _fmt_ops(ops: Sequence[Optional[UserOp]], g: int) -> Dict[Tuple[int, int], str]:
    return {(g, slot): op.value for slot, op in enumerate(ops) if op is not None}


def _fmt_bits(bits: Sequence[Optional[int]], g: int) -> Dict[Tuple[int, int], int]:
    return {(g, slot): int(b) for slot, b in enumerate(bits) if b is not None}


def build_views(records: Sequence[GroupRecord], publications: Mapping[int, Mapping[Tuple[int, int], BellKind]],
                keys: Mapping[Role, Mapping[str, Key]], ciphertexts: Mapping[str, Ciphertext],
                outcome: Optional[ComparisonOutcome]) -> Dict[Role, PartyView]:
    """Split the run into what each role legitimately learned"""
    views = {role: PartyView(role=role) for role in Role}
    public = {
        (g, pair[0]): kind.value
        for g, by_pair in publications.items() for pair, kind in by_pair.items()
    }
    for record in records:
        g = record.group_index
        alice_ops, bob_ops = _fmt_ops(record.alice_ops, g), _fmt_ops(record.bob_ops, g)
        views[Role.ALICE].own_ops.update(alice_ops)
        views[Role.ALICE].own_bits.update(_fmt_bits(record.alice_bits, g))
        views[Role.BOB].own_ops.update(bob_ops)
        views[Role.BOB].own_bits.update(_fmt_bits(record.bob_bits, g))
        # operations are announced on the authenticated public channel
        views[Role.ALICE].announced_ops.setdefault("bob", {}).update(bob_ops)
        views[Role.BOB].announced_ops.setdefault("alice", {}).update(alice_ops)
        views[Role.TP].announced_ops.setdefault("alice", {}).update(alice_ops)
        views[Role.TP].announced_ops.setdefault("bob", {}).update(bob_ops)
        views[Role.TP].swap_plan[g] = record.plan.swapped
        for measured in record.tp_measurements:
            if len(measured.qubit_indices) == 1:
                views[Role.TP].own_bits[(g, measured.qubit_indices[0])] = int(measured.outcome)

    holdings = {
        Role.TP: ("q_a", "q_b"),
        Role.ALICE: ("q_a",),
        Role.BOB: ("q_b",),
    }
    for role, view in views.items():
        view.publications = dict(public)
        view.keys = {name: key.bits for name, key in keys.get(role, {}).items()}
        view.ciphertexts = {name: ciphertexts[name].bits for name in holdings[role] if name in ciphertexts}
        view.verdict = outcome.verdict if outcome else None
    return views


def _check_secrets(config: ProtocolConfig) -> None:
    for label, secret in (("secret_a", config.secret_a), ("secret_b", config.secret_b)):
        if len(secret) != config.n:
            raise LengthMismatchError(f"{label} has {len(secret)} bits, n = {config.n}")


def run_protocol(config: ProtocolConfig, attack: Optional[AttackStrategy] = None,
                 streams: Optional[RandomStreams] = None) -> Transcript:
    """
    Run Steps 1-8 once.

    Args:
        config: secrets, seed, threshold and TP behaviour
        attack: interception strategy on the quantum channel (None = no eavesdropper)
        streams: random streams to draw from (defaults to the root streams of config.seed)

    Returns:
        Transcript with keys, checks, verdict and per-party views

    Raises:
        DetectionAbort: violation rate above config.threshold (transcript attached)
        InsufficientKey: a sifted key is shorter than n (transcript attached)
    """
    _check_secrets(config)
    streams = streams or RandomStreams(config.seed)
    attack = attack or AttackStrategy()
    tp = tp_behaviour(config.tp_strategy)
    n = config.n
    logger.info("run n=%d seed=%d path=%s attack=%s tp=%s",
                n, config.seed, streams.path, attack.name, tp.strategy)

    states, plans = tp_prepare(n, streams["preparation"], tp)
    resources = ResourceCounter(tp_qubits=GROUP_SIZE * len(plans))
    groups = [TransitGroup(plan, state) for plan, state in zip(plans, states)]
    for group in groups:
        _transmit(group, attack, streams)
        logger.debug("group %d swapped=%s alice=%s bob=%s", group.plan.group_index, group.plan.swapped,
                     "".join(op.value for op in group.record.alice_ops),
                     "".join(op.value for op in group.record.bob_ops))
    records = [group.record for group in groups]
    resources.alice_regenerations = sum(op is M for r in records for op in r.alice_ops)
    resources.bob_regenerations = sum(op is M for r in records for op in r.bob_ops)

    check = select_check_groups(len(groups), streams["selection"])
    honest_tp = tp.strategy == TpStrategy.HONEST.value
    strict = not attack.is_active and honest_tp
    tally = CheckTally()
    step5 = step5_verify_and_extract([g for g in groups if g.plan.group_index in check],
                                     tp, streams["tp"], tally, strict=strict)
    step6 = step6_process([g for g in groups if g.plan.group_index not in check], tp, streams["tp"], tally)

    adversary = streams["adversary"]
    for group in groups:
        attack.finish_group(group, adversary)

    fragments = {
        "k_ab:alice": step5.k_ab_alice,
        "k_ab:bob": step5.k_ab_bob,
        "k_ta:tp": step6.k_ta_tp,
        "k_ta:alice": step6.k_ta_alice,
        "k_tb:tp": step6.k_tb_tp,
        "k_tb:bob": step6.k_tb_bob,
    }
    events = _probe_events(groups, fragments, attack, tp)
    transcript = Transcript(
        config=config,
        records=records,
        tally=tally,
        fragments=fragments,
        resources=resources,
        views=build_views(records, step5.publications, {}, {}, None),
        probe_events=events,
        check_groups=tuple(sorted(check)),
    )
    if attack.is_active or not honest_tp:
        transcript.attack = AttackInfo(
            name=attack.name if attack.is_active else tp.strategy,
            info_metric=information_metric(events),
            events=len(events),
            diagnostics=attack.diagnostics(),
        )

    if tally.violation_rate > config.threshold:
        logger.info("abort: %d/%d checks failed", tally.total_violations, tally.total_checks)
        raise DetectionAbort(tally.total_violations, tally.total_checks, config.threshold, transcript=transcript)

    try:
        keys = assemble_keys({"k_ab": step5.k_ab_alice, "k_ta": step6.k_ta_tp, "k_tb": step6.k_tb_tp}, n)
    except InsufficientKey as exc:
        exc.transcript = transcript
        logger.info("insufficient key: %s", exc)
        raise

    held = {
        Role.ALICE: {"k_ab": keys.k_ab, "k_ta": assemble_key("k_ta", step6.k_ta_alice, n)},
        Role.BOB: {"k_ab": assemble_key("k_ab", step5.k_ab_bob, n), "k_tb": assemble_key("k_tb", step6.k_tb_bob, n)},
        Role.TP: {"k_ta": keys.k_ta, "k_tb": keys.k_tb},
    }
    q_a = encrypt(config.secret_a, held[Role.ALICE]["k_ab"], held[Role.ALICE]["k_ta"])
    q_b = encrypt(config.secret_b, held[Role.BOB]["k_ab"], held[Role.BOB]["k_tb"])
    outcome = compare(q_a, q_b, held[Role.TP]["k_ta"], held[Role.TP]["k_tb"])
    resources.ciphertext_bits = len(q_a) + len(q_b)
    resources.verdict_bits = 1

    transcript.keys = keys
    transcript.ciphertexts = {"q_a": q_a, "q_b": q_b}
    transcript.outcome = outcome
    transcript.key_agreement = {
        "k_ab": held[Role.ALICE]["k_ab"].bits == held[Role.BOB]["k_ab"].bits,
        "k_ta": held[Role.TP]["k_ta"].bits == held[Role.ALICE]["k_ta"].bits,
        "k_tb": held[Role.TP]["k_tb"].bits == held[Role.BOB]["k_tb"].bits,
    }
    transcript.views = build_views(records, step5.publications, held, transcript.ciphertexts, outcome)
    logger.info("verdict %s (%d checks, %d violations)", outcome.verdict.value,
                tally.total_checks, tally.total_violations)
    return transcript


def run_with_retries(config: ProtocolConfig, attempts: int = 1, attack_factory=None) -> Transcript:
    """
    Re-run on InsufficientKey with fresh quantum resources.

    Attempt 0 uses the root streams of the seed, attempt a >= 1 the retry
    segment a. `attack_factory` builds a fresh strategy per attempt.
    """
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    root = RandomStreams(config.seed)
    last: Optional[InsufficientKey] = None
    for attempt in range(attempts):
        streams = root if attempt == 0 else root.retry(attempt)
        attack = attack_factory() if attack_factory else None
        try:
            return run_protocol(config, attack=attack, streams=streams)
        except InsufficientKey as exc:
            logger.warning("attempt %d: %s; retrying with fresh resources", attempt, exc)
            last = exc
    raise last
