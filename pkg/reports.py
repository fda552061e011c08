from typing import Optional

from fastapi import APIRouter, Depends, HTTPException, Query, status

from config import Settings, get_settings
from exceptions import ConfigError
from schema import (
    DetectionCurveDocument,
    DetectionCurveRequest,
    EfficiencyDocument,
    HistogramDocument,
    ScenarioRequest,
)
from utils import pipelines

router = APIRouter(prefix="/api/reports", tags=["Reports"])


@router.post("/histogram", response_model=HistogramDocument)
def histogram(request: ScenarioRequest, settings: Settings = Depends(get_settings)):
    """
    Shot histogram of a circuit scenario

    - bell: Bell preparation and Bell-frame readout (`kind` selects the state)
    - reflect-reflect, measure-all, mixed-ops: one group, with or without the swap
    """
    try:
        return pipelines.histogram_document(request, settings.default_shots)
    except (ConfigError, ValueError) as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.get("/efficiency", response_model=EfficiencyDocument)
def efficiency(n: Optional[int] = Query(None, ge=1, le=1_000_000)):
    """Qubit-efficiency comparison table, evaluated at `n` when given"""
    return pipelines.efficiency_document(n)


@router.post("/detection-curve", response_model=DetectionCurveDocument)
def detection_curve(request: DetectionCurveRequest):
    """1 - (1 - p)^k per k, with the empirical rate when an ordered check log is sent"""
    return pipelines.curve_document(request.p, request.ks, request.failures)
