from dataclasses import replace
from fractions import Fraction

import pytest

from exceptions import InsufficientKey, UnknownScenarioError
from models import ProtocolConfig, Secret
from utils import statevector as sv
from utils.analysis import (
    EFFICIENCY_ROWS,
    Linear,
    ScenarioSpec,
    bell_preparation,
    detection_curve,
    efficiency_table,
    empirical_detection,
    mixed_ops_consistency,
    mixed_ops_relations,
    register_string,
    run_efficiency,
    run_scenario,
    tp_ignorance_test,
    yield_statistics,
)
from utils.protocol_engine import run_protocol
from utils.statevector import BellKind


def test_register_string_puts_the_highest_qubit_left():
    assert register_string([1, 0, 0]) == "001"
    assert register_string([0, 1]) == "10"


# ============================================
# SCENARIOS
# ============================================

@pytest.mark.parametrize("kind, outcome", [
    (BellKind.PHI_PLUS, "00"),
    (BellKind.PHI_MINUS, "01"),
    (BellKind.PSI_PLUS, "10"),
    (BellKind.PSI_MINUS, "11"),
])
def test_bell_frame_reads_a_single_outcome(kind, outcome):
    histogram = run_scenario(ScenarioSpec("bell", kind=kind, shots=128))
    assert histogram.counts == {outcome: 128}


@pytest.mark.parametrize("kind", list(BellKind))
def test_bell_preparation_circuit_builds_each_bell_state(kind):
    assert abs(sv.overlap(bell_preparation(kind), sv.prepare_bell(kind))) == pytest.approx(1.0)


def test_scenario_kind_accepts_labels():
    assert ScenarioSpec("bell", kind="psi-").kind is BellKind.PSI_MINUS


@pytest.mark.parametrize("swapped", [False, True])
def test_reflect_reflect_restores_both_pairs(swapped):
    histogram = run_scenario(ScenarioSpec("reflect-reflect", swapped=swapped, shots=200))
    assert histogram.counts == {"0000": 200}


@pytest.mark.parametrize("swapped", [False, True])
def test_measure_all_users_agree_and_tp_sees_the_swap(swapped):
    histogram = run_scenario(ScenarioSpec("measure-all", swapped=swapped, shots=400, seed=3))
    assert histogram.relations["alice=bob"] == 400
    assert histogram.shots == 400
    # after Z collapse each original pair is phi+ or phi-: the CNOT target bit is 0
    for outcome in histogram.support:
        assert outcome[-2] == "0" and outcome[-4] == "0"
    assert len(histogram.support) > 1


@pytest.mark.parametrize("swapped", [False, True])
def test_measure_all_readout_is_uniform_over_the_phase_bits(swapped):
    histogram = run_scenario(ScenarioSpec("measure-all", swapped=swapped, shots=4096, seed=21))
    assert set(histogram.counts) == {"0000", "0001", "0100", "0101"}
    for frequency in histogram.frequencies().values():
        assert frequency == pytest.approx(0.25, abs=0.03)


def test_mixed_ops_relations_follow_the_swap():
    assert mixed_ops_relations(False) == {"tp=alice=bob": 0, "tp=bob": 1, "tp=alice": 2}
    assert mixed_ops_relations(True) == {"tp=alice=bob": 0, "tp=alice": 1, "tp=bob": 2}


@pytest.mark.parametrize("swapped", [False, True])
def test_mixed_ops_consistency_holds_every_shot(swapped):
    report = mixed_ops_consistency(ScenarioSpec("mixed-ops", swapped=swapped, shots=300, seed=5))
    assert report.shots == 300
    assert report.all_hold
    assert all(len(outcome) == 7 for outcome in run_scenario(
        ScenarioSpec("mixed-ops", swapped=swapped, shots=20)).counts)


def test_mixed_ops_consistency_needs_the_mixed_scenario():
    with pytest.raises(UnknownScenarioError):
        mixed_ops_consistency(ScenarioSpec("bell"))


def test_histogram_does_not_depend_on_workers():
    spec = ScenarioSpec("measure-all", shots=600, seed=9, batch_size=100)
    assert run_scenario(spec, workers=1).counts == run_scenario(spec, workers=3).counts


def test_scenario_validation():
    with pytest.raises(UnknownScenarioError):
        ScenarioSpec("ghz")
    with pytest.raises(ValueError):
        ScenarioSpec("bell", shots=0)


# ============================================
# QUBIT EFFICIENCY
# ============================================

def test_linear_arithmetic_and_format():
    assert Linear(16) + Linear(2, 1) == Linear(18, 1)
    assert str(Linear(18, 1)) == "18n+1"
    assert str(Linear(1)) == "n"
    assert Linear(162, 1)(2) == 325


def test_efficiency_table_has_eight_rows():
    rows = efficiency_table()
    assert len(rows) == 8
    assert rows[-1].label == "Our protocol"
    assert rows[0].eta(5) == Fraction(5, 162 * 5 + 1)


@pytest.mark.parametrize("n, expected", [(1, Fraction(1, 19)), (8, Fraction(8, 145)), (64, Fraction(64, 1153))])
def test_our_efficiency(n, expected):
    ours = EFFICIENCY_ROWS[-1]
    assert ours.eta(n) == expected
    assert ours.derived
    assert ours.eta_formula == "n/(18n+1)"


def test_our_efficiency_approaches_one_eighteenth():
    assert float(EFFICIENCY_ROWS[-1].eta(10 ** 6)) == pytest.approx(1 / 18, rel=1e-5)


def test_only_one_row_has_inconsistent_cost_columns():
    inconsistent = [row.label for row in EFFICIENCY_ROWS if not row.cost_columns_consistent]
    assert inconsistent == ["Ref.[26]"]


def test_run_efficiency_nominal_matches_the_table():
    config = ProtocolConfig(n=8, seed=0, secret_a=Secret((1,) * 8), secret_b=Secret((1,) * 8))
    for seed in range(300):
        try:
            transcript = run_protocol(replace(config, seed=seed))
            break
        except InsufficientKey:
            continue
    else:
        pytest.fail("no seed produced a full key")
    assert run_efficiency(transcript)["nominal"] == EFFICIENCY_ROWS[-1].eta(8)


# ============================================
# DETECTION CURVES
# ============================================

def test_detection_curve_analytic():
    points = detection_curve(0.5, [1, 2, 10])
    assert [p.analytic for p in points] == pytest.approx([0.5, 0.75, 1 - 0.5 ** 10])
    assert all(p.empirical is None for p in points)


def test_detection_curve_rejects_bad_probability():
    with pytest.raises(ValueError):
        detection_curve(1.5, [1])


def test_empirical_detection_uses_non_overlapping_blocks():
    failures = [False, False, True, False, False, False, False, True, False]
    assert empirical_detection(failures, 1) == pytest.approx(2 / 9)
    assert empirical_detection(failures, 3) == pytest.approx(2 / 3)
    assert empirical_detection(failures, 10) is None
    with pytest.raises(ValueError):
        empirical_detection(failures, 0)


# ============================================
# HONEST-RUN STATISTICS
# ============================================

def _honest_transcripts(runs, n=8):
    transcripts = []
    seed = 0
    while len(transcripts) < runs:
        config = ProtocolConfig(n=n, seed=seed, secret_a=Secret((0, 1) * (n // 2)), secret_b=Secret((0, 1) * (n // 2)))
        try:
            transcripts.append(run_protocol(config))
        except InsufficientKey as exc:
            transcripts.append(exc.transcript)
        seed += 1
    return transcripts


def test_yield_statistics():
    stats = yield_statistics(_honest_transcripts(20))
    assert stats.runs == 20
    assert set(stats.mean_lengths) == {"k_ab", "k_ta", "k_tb"}
    assert 0.5 < stats.ratio("k_ab") < 1.5


def test_yield_statistics_needs_runs():
    with pytest.raises(ValueError):
        yield_statistics([])


@pytest.mark.slow
def test_tp_learns_nothing_about_k_ab():
    result = tp_ignorance_test(_honest_transcripts(400))
    assert result.events > 1000
    assert result.passes(alpha=0.01)


@pytest.mark.slow
def test_fragment_yield_is_about_n():
    stats = yield_statistics(_honest_transcripts(300, n=16))
    for key in ("k_ab", "k_ta", "k_tb"):
        assert 0.85 < stats.ratio(key) < 1.15
