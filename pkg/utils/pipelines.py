"""
From validated requests to output documents. Shared by the command line and
the HTTP routers so both produce the same bytes for the same input.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from exceptions import DetectionAbort, InsufficientKey
from models import CheckKind
from schema import (
    AttackReportDocument,
    DetectionCurveDocument,
    DetectionPointDocument,
    EfficiencyDocument,
    HistogramDocument,
    RunConfig,
    ScenarioRequest,
    TranscriptDocument,
)
from utils.adversary import AttackSpec, evaluate
from utils.analysis import (
    ScenarioSpec,
    detection_curve,
    efficiency_table,
    mixed_ops_relations,
    run_scenario,
)
from utils.protocol_engine import run_with_retries

logger = logging.getLogger(__name__)

STATUS_VERDICT = "verdict"
STATUS_ABORTED = "aborted"
STATUS_INSUFFICIENT_KEY = "insufficient-key"


def attack_spec(run: RunConfig) -> AttackSpec:
    """Build once up front so unknown names and bad parameters fail before any work"""
    spec = AttackSpec(name=run.attack, params=dict(run.attack_params), insider=run.insider)
    spec.build()
    return spec


def run_outcome(run: RunConfig, default_threshold: float
                ) -> Tuple[TranscriptDocument, Optional[Union[DetectionAbort, InsufficientKey]]]:
    """
    Execute one protocol run (with retries on InsufficientKey).

    DetectionAbort and InsufficientKey do not propagate: they come back next
    to the document, whose status says which one ended the run.
    """
    spec = attack_spec(run)
    config = run.protocol_config(default_threshold)
    effective = run.effective(config.threshold)
    try:
        transcript = run_with_retries(config, attempts=run.retries, attack_factory=spec.build)
    except (DetectionAbort, InsufficientKey) as exc:
        return TranscriptDocument.from_transcript(effective, exc.transcript, error=exc), exc
    return TranscriptDocument.from_transcript(effective, transcript), None


def run_document(run: RunConfig, default_threshold: float) -> TranscriptDocument:
    return run_outcome(run, default_threshold)[0]


def attack_eval_document(run: RunConfig, default_threshold: float, default_trials: int,
                         default_workers: int) -> AttackReportDocument:
    spec = attack_spec(run)
    config = run.protocol_config(default_threshold)
    trials = run.trials or default_trials
    workers = run.workers or default_workers
    report = evaluate(spec, config, trials, workers=workers)
    return AttackReportDocument.from_report(run.effective(config.threshold, trials, workers), report)


def histogram_document(request: ScenarioRequest, default_shots: int, workers: int = 1) -> HistogramDocument:
    spec = ScenarioSpec(
        scenario=request.scenario,
        kind=request.kind,
        swapped=request.swapped,
        shots=request.shots or default_shots,
        seed=request.seed,
    )
    histogram = run_scenario(spec, workers=workers)
    return HistogramDocument(
        config=request.model_copy(update={"shots": spec.shots}),
        shots=histogram.shots,
        width=spec.width,
        counts=histogram.counts,
        relations=histogram.relations,
        relation_positions=mixed_ops_relations(spec.swapped) if spec.scenario == "mixed-ops" else {},
    )


def efficiency_document(n: Optional[int] = None) -> EfficiencyDocument:
    return EfficiencyDocument.from_rows(efficiency_table(), n=n)


def curve_document(p: float, ks: Sequence[int], failures: Optional[Sequence[bool]] = None,
                   config: Optional[Dict[str, Any]] = None) -> DetectionCurveDocument:
    points = detection_curve(p, ks, failures)
    return DetectionCurveDocument(
        config=config or {"p": p, "ks": list(ks)},
        p=p,
        points=[DetectionPointDocument(k=pt.k, analytic=pt.analytic, empirical=pt.empirical) for pt in points],
    )


def attack_curve_document(run: RunConfig, check_class: str, ks: Sequence[int], default_threshold: float,
                          default_trials: int, default_workers: int) -> DetectionCurveDocument:
    """Per-check p and the ordered check log of one class, taken from an attack evaluation"""
    kind = CheckKind(check_class)
    spec = attack_spec(run)
    config = run.protocol_config(default_threshold)
    trials = run.trials or default_trials
    report = evaluate(spec, config, trials, workers=run.workers or default_workers)
    p = report.class_rate(kind)
    logger.info("%s: per-check p=%.4f over %d %s checks", spec.name, p, report.tally.checks[kind], kind.value)
    echo = run.effective(config.threshold, trials).model_dump(mode="json")
    echo.update({"check_class": kind.value, "ks": list(ks)})
    return curve_document(p, ks, report.class_outcomes(kind), config=echo)


def parse_ks(values: Sequence[str]) -> List[int]:
    ks: List[int] = []
    for value in values:
        ks.extend(int(part) for part in str(value).split(",") if part.strip())
    return ks


EXIT_CODES = {STATUS_VERDICT: 0, STATUS_ABORTED: 2, STATUS_INSUFFICIENT_KEY: 3}


def exit_code(document: TranscriptDocument) -> int:
    return EXIT_CODES[document.status]
