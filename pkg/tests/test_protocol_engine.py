import time
from fractions import Fraction

import numpy as np
import pytest

from exceptions import (
    DetectionAbort,
    InsufficientKey,
    KeyConsistencyViolation,
    LengthMismatchError,
)
from models import (
    GroupPlan,
    KeyBit,
    ProtocolConfig,
    ResourceCounter,
    Role,
    Secret,
    TpStrategy,
    UserOp,
    Verdict,
)
from utils import statevector as sv
from utils.adversary import DoubleCnot, MeasureResend
from utils.channel import AttackStrategy, HonestTp, TransitGroup
from utils.protocol_engine import (
    assemble_key,
    compare,
    encrypt,
    run_protocol,
    run_with_retries,
    select_check_groups,
    step5_verify_and_extract,
    tp_prepare,
)
from utils.randomness import RandomStreams
from utils.statevector import BellKind

SECRET = (1, 0, 1, 1, 0, 0, 1, 0)
OTHER = (1, 0, 1, 1, 0, 1, 1, 0)


def make_config(n=8, seed=0, a=None, b=None, threshold=0.0, tp=TpStrategy.HONEST):
    a = a if a is not None else tuple(int(x) for x in np.random.default_rng(seed).integers(2, size=n))
    b = b if b is not None else a
    return ProtocolConfig(n=n, seed=seed, secret_a=Secret(tuple(a)), secret_b=Secret(tuple(b)),
                          threshold=threshold, tp_strategy=tp)


def first_transcript(n=8, a=None, b=None, seeds=range(300), **kwargs):
    """First seed whose keys are long enough (short keys are an expected, retryable outcome)"""
    for seed in seeds:
        try:
            return run_protocol(make_config(n=n, seed=seed, a=a, b=b), **kwargs)
        except InsufficientKey:
            continue
    pytest.fail("no seed produced a full key")


# ============================================
# PREPARATION AND SELECTION
# ============================================

def test_tp_prepare_groups_are_bell_pairs_or_their_swap():
    states, plans = tp_prepare(5, np.random.default_rng(1))
    assert len(states) == len(plans) == 10
    phi_phi = sv.compose([sv.prepare_bell(BellKind.PHI_PLUS)] * 2)
    for state, plan in zip(states, plans):
        expected = sv.swap_pairing(phi_phi) if plan.swapped else phi_phi
        assert sv.states_close(state, expected)
    assert [p.group_index for p in plans] == list(range(10))


def test_tp_prepare_rejects_empty_secret():
    with pytest.raises(ValueError):
        tp_prepare(0, np.random.default_rng(0))


def test_select_check_groups_picks_half():
    chosen = select_check_groups(16, np.random.default_rng(7))
    assert len(chosen) == 8
    assert chosen <= set(range(16))
    assert chosen == select_check_groups(16, np.random.default_rng(7))


# ============================================
# ENCRYPTION AND COMPARISON
# ============================================

def test_encrypt_and_compare_equal_secrets():
    k_ab, k_ta, k_tb = (0, 1, 1, 0, 1, 0, 0, 1), (1, 1, 0, 0, 1, 0, 1, 0), (0, 0, 0, 1, 1, 1, 0, 1)
    q_a = encrypt(SECRET, k_ab, k_ta)
    q_b = encrypt(SECRET, k_ab, k_tb)
    outcome = compare(q_a, q_b, k_ta, k_tb)
    assert outcome.verdict is Verdict.EQUAL
    assert outcome.r_bits == (0,) * 8


def test_compare_reveals_only_the_difference_pattern():
    k_ab, k_ta, k_tb = (1,) * 8, (0, 1) * 4, (1, 0) * 4
    outcome = compare(encrypt(SECRET, k_ab, k_ta), encrypt(OTHER, k_ab, k_tb), k_ta, k_tb)
    assert outcome.verdict is Verdict.NOT_EQUAL
    assert outcome.r_bits == tuple(a ^ b for a, b in zip(SECRET, OTHER))


def test_xor_length_mismatch():
    with pytest.raises(LengthMismatchError):
        encrypt(SECRET, (0,) * 7, (0,) * 8)


# ============================================
# KEY ASSEMBLY
# ============================================

def test_assemble_key_orders_by_provenance_and_truncates():
    fragment = [KeyBit(3, 1, 1), KeyBit(0, 2, 0), KeyBit(3, 0, 1), KeyBit(1, 3, 1)]
    key = assemble_key("k_ab", fragment, 3)
    assert key.provenance == ((0, 2), (1, 3), (3, 0))
    assert key.bits == (0, 1, 1)


def test_assemble_key_too_short():
    with pytest.raises(InsufficientKey) as excinfo:
        assemble_key("k_ta", [KeyBit(0, 0, 1)], 2)
    assert (excinfo.value.have, excinfo.value.need) == (1, 2)


# ============================================
# STEP 5
# ============================================

def _measured_group(alice_bits, bob_bits):
    plan = GroupPlan(group_index=0, swapped=False)
    group = TransitGroup(plan, HonestTp().prepare(plan, np.random.default_rng(0)))
    group.record.alice_ops = [UserOp.MEASURE] * 4
    group.record.bob_ops = [UserOp.MEASURE] * 4
    group.record.alice_bits = list(alice_bits)
    group.record.bob_bits = list(bob_bits)
    return group


def test_step5_strict_mode_refuses_disagreeing_k_ab():
    group = _measured_group([0, 0, 1, 1], [0, 1, 1, 1])
    with pytest.raises(KeyConsistencyViolation) as excinfo:
        step5_verify_and_extract([group], HonestTp(), np.random.default_rng(0), strict=True)
    assert excinfo.value.position == 1


def test_step5_lenient_mode_counts_mismatches():
    group = _measured_group([0, 0, 1, 1], [0, 1, 1, 0])
    from models import CheckTally
    tally = CheckTally()
    result = step5_verify_and_extract([group], HonestTp(), np.random.default_rng(0), tally, strict=False)
    assert tally.key_positions == 4
    assert tally.key_mismatches == 2
    assert [b.value for b in result.k_ab_alice] == [0, 0, 1, 1]
    assert [b.value for b in result.k_ab_bob] == [0, 1, 1, 0]


# ============================================
# HONEST RUNS
# ============================================

def test_honest_run_equal_secrets():
    transcript = first_transcript(a=SECRET, b=SECRET)
    assert transcript.outcome.verdict is Verdict.EQUAL
    assert transcript.tally.total_violations == 0
    assert transcript.tally.key_mismatches == 0
    assert transcript.key_agreement == {"k_ab": True, "k_ta": True, "k_tb": True}
    assert transcript.attack is None


def test_honest_run_different_secrets():
    transcript = first_transcript(a=SECRET, b=OTHER)
    assert transcript.outcome.verdict is Verdict.NOT_EQUAL


@pytest.mark.parametrize("seed", range(10))
def test_verdict_matches_secret_equality(seed):
    rng = np.random.default_rng(100 + seed)
    a = tuple(int(x) for x in rng.integers(2, size=16))
    b = a if seed % 2 else tuple(int(x) for x in rng.integers(2, size=16))
    transcript = first_transcript(n=16, a=a, b=b, seeds=range(seed * 1000, seed * 1000 + 300))
    expected = Verdict.EQUAL if a == b else Verdict.NOT_EQUAL
    assert transcript.outcome.verdict is expected
    assert transcript.tally.total_violations == 0


@pytest.mark.slow
def test_thousand_honest_runs_never_give_a_wrong_verdict():
    started = time.perf_counter()
    verdicts = 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        a = tuple(int(x) for x in rng.integers(2, size=16))
        b = a if seed % 2 else tuple(int(x) for x in rng.integers(2, size=16))
        try:
            transcript = run_protocol(make_config(n=16, seed=seed, a=a, b=b))
        except InsufficientKey:
            continue
        expected = Verdict.EQUAL if a == b else Verdict.NOT_EQUAL
        assert transcript.outcome.verdict is expected, f"seed {seed}"
        verdicts += 1
    assert verdicts > 50
    assert time.perf_counter() - started < 60


def test_runs_are_reproducible():
    config = make_config(n=8, seed=11)
    first, second = [], []
    for out in (first, second):
        try:
            t = run_protocol(config)
        except InsufficientKey as exc:
            t = exc.transcript
        out.append((
            [r.plan for r in t.records],
            [(r.alice_ops, r.alice_bits, r.bob_ops, r.bob_bits) for r in t.records],
            t.check_groups,
            {name: [b.provenance for b in bits] for name, bits in t.fragments.items()},
        ))
    assert first == second


def test_secret_length_must_match_n():
    config = ProtocolConfig(n=8, seed=0, secret_a=Secret((1, 0)), secret_b=Secret((1, 0)))
    with pytest.raises(LengthMismatchError):
        run_protocol(config)


# ============================================
# PARTY VIEWS
# ============================================

def test_only_tp_sees_the_swap_plan():
    transcript = first_transcript(a=SECRET, b=SECRET)
    views = transcript.views
    assert len(views[Role.TP].swap_plan) == 16
    assert not views[Role.ALICE].swap_plan and not views[Role.BOB].swap_plan


def test_users_see_their_own_bits_and_announced_operations_only():
    transcript = first_transcript(a=SECRET, b=SECRET)
    alice, bob, tp = (transcript.views[r] for r in (Role.ALICE, Role.BOB, Role.TP))
    assert len(alice.own_ops) == len(bob.own_ops) == 64
    assert alice.announced_ops["bob"] == bob.own_ops
    assert bob.announced_ops["alice"] == alice.own_ops
    assert set(alice.keys) == {"k_ab", "k_ta"}
    assert set(bob.keys) == {"k_ab", "k_tb"}
    assert set(tp.keys) == {"k_ta", "k_tb"}
    assert set(alice.ciphertexts) == {"q_a"}
    assert set(tp.ciphertexts) == {"q_a", "q_b"}
    assert tp.verdict is Verdict.EQUAL


@pytest.mark.parametrize("start", [0, 300, 600])
def test_tp_view_holds_no_k_ab_position(start):
    transcript = first_transcript(a=SECRET, b=SECRET, seeds=range(start, start + 300))
    k_ab = {bit.provenance for name in ("k_ab:alice", "k_ab:bob") for bit in transcript.fragments[name]}
    assert k_ab
    tp = transcript.views[Role.TP]
    assert not k_ab & set(tp.own_bits)
    assert "k_ab" not in tp.keys


# ============================================
# ATTACK ISOLATION AND ABORTS
# ============================================

def _run_any(config, attack=None):
    try:
        return run_protocol(config, attack=attack)
    except (InsufficientKey, DetectionAbort) as exc:
        return exc.transcript


def test_noop_attack_equals_no_attack():
    config = make_config(n=8, seed=5, threshold=1.0)
    plain, noop = _run_any(config), _run_any(config, AttackStrategy())
    assert [r.alice_bits for r in plain.records] == [r.alice_bits for r in noop.records]
    assert plain.fragments.keys() == noop.fragments.keys()
    for name in plain.fragments:
        assert [b.value for b in plain.fragments[name]] == [b.value for b in noop.fragments[name]]


def test_attack_never_shifts_honest_choices():
    config = make_config(n=8, seed=5, threshold=1.0)
    plain, attacked = _run_any(config), _run_any(config, DoubleCnot())
    assert [r.plan for r in plain.records] == [r.plan for r in attacked.records]
    assert [r.alice_ops for r in plain.records] == [r.alice_ops for r in attacked.records]
    assert [r.bob_ops for r in plain.records] == [r.bob_ops for r in attacked.records]
    assert plain.check_groups == attacked.check_groups


def test_measure_resend_triggers_detection_abort():
    config = make_config(n=64, seed=3, threshold=0.0)
    with pytest.raises(DetectionAbort) as excinfo:
        run_protocol(config, attack=MeasureResend("z"))
    abort = excinfo.value
    assert abort.violations > 0
    assert abort.transcript is not None
    assert abort.transcript.attack.name == "measure-resend-z"


def test_dishonest_tp_runs_without_strict_key_checks():
    config = make_config(n=8, seed=0, threshold=1.0, tp=TpStrategy.Z_MEASURE_THEN_RANDOM_PUBLISH)
    transcript = _run_any(config)
    assert transcript.attack.name == TpStrategy.Z_MEASURE_THEN_RANDOM_PUBLISH.value


# ============================================
# RETRIES AND RESOURCES
# ============================================

def test_run_with_retries_eventually_produces_a_verdict():
    transcript = run_with_retries(make_config(n=8, seed=21, a=SECRET, b=SECRET), attempts=60)
    assert transcript.outcome.verdict is Verdict.EQUAL


def test_run_with_retries_needs_an_attempt():
    with pytest.raises(ValueError):
        run_with_retries(make_config(), attempts=0)


def test_retry_segments_differ_from_the_root():
    root = RandomStreams(9)
    assert root["alice"].integers(1 << 30) != root.retry(1)["alice"].integers(1 << 30)


@pytest.mark.parametrize("n", [1, 8, 64])
def test_nominal_efficiency_from_a_real_run(n):
    transcript = first_transcript(n=n, a=(1,) * n, b=(1,) * n)
    assert transcript.resources.tp_qubits == 8 * n
    assert transcript.resources.classical_bits == 2 * n + 1
    assert transcript.resources.nominal_efficiency(n) == Fraction(n, 18 * n + 1)


def test_observed_efficiency_counts_actual_regenerations():
    counter = ResourceCounter(tp_qubits=8, alice_regenerations=3, bob_regenerations=5,
                              ciphertext_bits=2, verdict_bits=1)
    assert counter.observed_efficiency(1) == Fraction(1, 19)
    counter.alice_regenerations = 4
    assert counter.observed_efficiency(1) == Fraction(1, 20)
