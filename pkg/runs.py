from fastapi import APIRouter, Depends, HTTPException, status

from config import Settings, get_settings
from exceptions import ConfigError, DetectionAbort, InsufficientKey
from schema import AttackReportDocument, RunConfig, TranscriptDocument
from utils import pipelines

router = APIRouter(prefix="/api/runs", tags=["Runs"])

# evaluations over HTTP stay small; larger sweeps belong on the command line
MAX_HTTP_TRIALS = 2000


@router.post("", response_model=TranscriptDocument)
def create_run(run: RunConfig, settings: Settings = Depends(get_settings)):
    """
    Run the comparison protocol once

    - Returns the transcript with keys, checks, verdict and per-party views
    - 409 when the eavesdropping checks abort the run
    - 422 when a sifted key comes up short after every retry
    """
    try:
        document, error = pipelines.run_outcome(run, settings.default_threshold)
    except ConfigError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))

    if isinstance(error, DetectionAbort):
        raise HTTPException(
            status_code=status.HTTP_409_CONFLICT,
            detail={
                "message": str(error),
                "violations": error.violations,
                "checks": error.checks,
                "rate": error.rate,
                "threshold": error.threshold,
            },
        )
    if isinstance(error, InsufficientKey):
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={
                "message": str(error),
                "key": error.key_name,
                "have": error.have,
                "need": error.need,
            },
        )
    return document


@router.post("/attack-eval", response_model=AttackReportDocument)
def evaluate_attack(run: RunConfig, settings: Settings = Depends(get_settings)):
    """Monte Carlo evaluation of one attack; trials default to SQPC_DEFAULT_TRIALS"""
    trials = run.trials or settings.default_trials
    if trials > MAX_HTTP_TRIALS:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"At most {MAX_HTTP_TRIALS} trials per request",
        )
    try:
        return pipelines.attack_eval_document(run, settings.default_threshold, settings.default_trials,
                                              settings.workers)
    except ConfigError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
