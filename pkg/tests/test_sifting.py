import pytest

from exceptions import IncompleteRecordError
from models import GroupPlan, GroupRecord, SiftClass, UserOp, transit_position
from utils.protocol_engine import classify_pair, classify_qubit, sift

M, R = UserOp.MEASURE, UserOp.REFLECT


@pytest.mark.parametrize("check_group, ops, expected", [
    (True, (M, M), SiftClass.KAB_BIT),
    (True, (M, R), SiftClass.DISCARD),
    (True, (R, M), SiftClass.DISCARD),
    (True, (R, R), SiftClass.DISCARD),
    (False, (M, M), SiftClass.EC_Z),
    (False, (M, R), SiftClass.KTA_BIT),
    (False, (R, M), SiftClass.KTB_BIT),
    (False, (R, R), SiftClass.DISCARD),
])
def test_classify_qubit(check_group, ops, expected):
    assert classify_qubit(check_group, ops) is expected


@pytest.mark.parametrize("check_group", [True, False])
def test_both_reflect_pair_is_a_bell_check_in_either_phase(check_group):
    assert classify_pair(check_group, (R, R), (R, R)) == (SiftClass.EC_BELL, SiftClass.EC_BELL)


def test_lone_reflect_qubit_is_discarded():
    assert classify_pair(False, (R, R), (M, R)) == (SiftClass.DISCARD, SiftClass.KTA_BIT)
    assert classify_pair(True, (R, R), (M, M)) == (SiftClass.DISCARD, SiftClass.KAB_BIT)


@pytest.mark.parametrize("original, swapped, slot", [
    (0, False, 0), (1, False, 1), (2, False, 2), (3, False, 3),
    (0, True, 0), (1, True, 2), (2, True, 1), (3, True, 3),
])
def test_transit_position(original, swapped, slot):
    assert transit_position(original, swapped) == slot


def _record(alice, bob, swapped=False, check_group=False):
    record = GroupRecord(plan=GroupPlan(0, swapped), check_group=check_group)
    record.alice_ops = list(alice)
    record.bob_ops = list(bob)
    return record


def test_sift_resolves_the_swap():
    # transit slots: Alice measures 0 and 2, Bob measures 0 and 1
    alice, bob = (M, R, M, R), (M, M, R, R)
    assert sift(_record(alice, bob)) == (
        SiftClass.EC_Z, SiftClass.KTB_BIT, SiftClass.KTA_BIT, SiftClass.DISCARD,
    )
    assert sift(_record(alice, bob, swapped=True)) == (
        SiftClass.EC_Z, SiftClass.KTA_BIT, SiftClass.KTB_BIT, SiftClass.DISCARD,
    )


def test_sift_check_group_with_restored_pairs():
    # swapped: original pair (0, 1) travels in slots 0 and 2
    alice, bob = (R, M, R, M), (R, M, R, M)
    assert sift(_record(alice, bob, swapped=True, check_group=True)) == (
        SiftClass.EC_BELL, SiftClass.EC_BELL, SiftClass.KAB_BIT, SiftClass.KAB_BIT,
    )
    assert sift(_record(alice, bob, swapped=False, check_group=True)) == (
        SiftClass.DISCARD, SiftClass.KAB_BIT, SiftClass.DISCARD, SiftClass.KAB_BIT,
    )


def test_sift_needs_every_operation():
    record = GroupRecord(plan=GroupPlan(0, False))
    with pytest.raises(IncompleteRecordError):
        sift(record)


# Every (Alice, Bob) combination on the two qubits of one original pair:
# first qubit, second qubit, classes outside a check group, classes inside one.
_B, _Z, _A, _T, _K, _D = (SiftClass.EC_BELL, SiftClass.EC_Z, SiftClass.KTA_BIT,
                          SiftClass.KTB_BIT, SiftClass.KAB_BIT, SiftClass.DISCARD)
SIFTING_TABLE = [
    ("MM", "MM", (_Z, _Z), (_K, _K)),
    ("MM", "MR", (_Z, _A), (_K, _D)),
    ("MM", "RM", (_Z, _T), (_K, _D)),
    ("MM", "RR", (_Z, _D), (_K, _D)),
    ("MR", "MM", (_A, _Z), (_D, _K)),
    ("MR", "MR", (_A, _A), (_D, _D)),
    ("MR", "RM", (_A, _T), (_D, _D)),
    ("MR", "RR", (_A, _D), (_D, _D)),
    ("RM", "MM", (_T, _Z), (_D, _K)),
    ("RM", "MR", (_T, _A), (_D, _D)),
    ("RM", "RM", (_T, _T), (_D, _D)),
    ("RM", "RR", (_T, _D), (_D, _D)),
    ("RR", "MM", (_D, _Z), (_D, _K)),
    ("RR", "MR", (_D, _A), (_D, _D)),
    ("RR", "RM", (_D, _T), (_D, _D)),
    ("RR", "RR", (_B, _B), (_B, _B)),
]


def _ops(code):
    return tuple(UserOp(c) for c in code)


@pytest.mark.parametrize("check_group", [False, True])
@pytest.mark.parametrize("first, second, outside, inside", SIFTING_TABLE)
def test_sifting_table_is_total(first, second, outside, inside, check_group):
    expected = inside if check_group else outside
    assert classify_pair(check_group, _ops(first), _ops(second)) == expected

    # the same pair through a whole group record, with the swap undone by sift
    for swapped in (False, True):
        alice, bob = [None] * 4, [None] * 4
        for original, (a, b) in enumerate([_ops(first), _ops(second), (M, M), (M, M)]):
            slot = transit_position(original, swapped)
            alice[slot], bob[slot] = a, b
        assert sift(_record(alice, bob, swapped, check_group))[:2] == expected
