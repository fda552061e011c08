import json
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from exceptions import ConfigError, DetectionAbort, InsufficientKey
from models import (
    GROUP_SIZE,
    CheckKind,
    ProtocolConfig,
    Role,
    Secret,
    TpStrategy,
    Transcript,
)
from utils.adversary import TP_ATTACKS
from utils.protocol_engine import sift
from utils.randomness import MAX_SEED, RandomStreams

SCHEMA_VERSION = "1.0"

# ============================================
# RUN CONFIGURATION
# ============================================

class RunConfig(BaseModel):
    """One protocol run or attack evaluation; unset fields fall back to Settings"""
    model_config = ConfigDict(extra="forbid")

    n: int = Field(8, ge=1, le=4096)
    seed: int = Field(0, ge=0, le=MAX_SEED)
    secret_a: str = "random"
    secret_b: str = "random"
    attack: str = "none"
    attack_params: Dict[str, Any] = Field(default_factory=dict)
    insider: Optional[Literal["alice", "bob"]] = None
    tp: TpStrategy = TpStrategy.HONEST
    threshold: Optional[float] = Field(None, ge=0.0, le=1.0)
    trials: Optional[int] = Field(None, ge=1)
    retries: int = Field(1, ge=1, le=100)
    workers: Optional[int] = Field(None, ge=1, le=256)

    @field_validator("secret_a", "secret_b")
    @classmethod
    def check_secret_format(cls, value: str) -> str:
        value = value.strip()
        if value != "random" and not _is_hex(value) and set(value) - {"0", "1"}:
            raise ValueError("secret must be 'random', a binary string or 0x-prefixed hex")
        return value

    def secrets(self) -> Tuple[Secret, Secret]:
        """Resolve both secrets; 'random' ones come from the seed's secrets stream"""
        rng = RandomStreams(self.seed)["secrets"]
        resolved = []
        for label, text in (("secret_a", self.secret_a), ("secret_b", self.secret_b)):
            if text == "random":
                bits = tuple(int(b) for b in rng.integers(2, size=self.n))
            else:
                bits = parse_secret(text)
            if len(bits) != self.n:
                raise ConfigError(f"{label} has {len(bits)} bits, n = {self.n}")
            resolved.append(Secret(bits))
        return resolved[0], resolved[1]

    def protocol_config(self, default_threshold: float = 0.0) -> ProtocolConfig:
        secret_a, secret_b = self.secrets()
        return ProtocolConfig(
            n=self.n,
            seed=self.seed,
            secret_a=secret_a,
            secret_b=secret_b,
            threshold=default_threshold if self.threshold is None else self.threshold,
            tp_strategy=TP_ATTACKS.get(self.attack, self.tp),
        )

    def effective(self, threshold: float, trials: Optional[int] = None, workers: Optional[int] = None) -> "RunConfig":
        """Copy with the Settings defaults filled in, for echoing into documents"""
        return self.model_copy(update={
            "threshold": threshold if self.threshold is None else self.threshold,
            "trials": self.trials if self.trials is not None else trials,
            "workers": self.workers if self.workers is not None else workers,
        })


def _is_hex(text: str) -> bool:
    if not text.lower().startswith("0x") or len(text) < 3:
        return False
    try:
        int(text, 16)
    except ValueError:
        return False
    return True


def parse_secret(text: str) -> Tuple[int, ...]:
    """Binary string, or 0x-prefixed hex giving four bits per digit"""
    text = text.strip()
    if _is_hex(text):
        digits = text[2:]
        return tuple(int(b) for b in format(int(digits, 16), f"0{4 * len(digits)}b"))
    if not text or set(text) - {"0", "1"}:
        raise ConfigError(f"Cannot parse secret {text!r}")
    return tuple(int(b) for b in text)


def bit_string(bits) -> str:
    return "".join(str(int(b)) for b in bits)


# ============================================
# TRANSCRIPT DOCUMENTS
# ============================================

class CheckClassSummary(BaseModel):
    checks: int
    violations: int
    rate: float


class TallyDocument(BaseModel):
    classes: Dict[str, CheckClassSummary]
    total_checks: int
    total_violations: int
    violation_rate: float
    key_mismatches: int
    key_positions: int

    @classmethod
    def from_tally(cls, tally) -> "TallyDocument":
        return cls(
            classes={
                kind.value: CheckClassSummary(
                    checks=tally.checks[kind],
                    violations=tally.violations[kind],
                    rate=tally.violations[kind] / tally.checks[kind] if tally.checks[kind] else 0.0,
                )
                for kind in CheckKind
            },
            total_checks=tally.total_checks,
            total_violations=tally.total_violations,
            violation_rate=tally.violation_rate,
            key_mismatches=tally.key_mismatches,
            key_positions=tally.key_positions,
        )


class GroupDocument(BaseModel):
    index: int
    swapped: bool
    check_group: bool
    alice_ops: str
    bob_ops: str
    sift: List[str]


class ResourceDocument(BaseModel):
    tp_qubits: int
    alice_regenerations: int
    bob_regenerations: int
    classical_bits: int
    nominal_efficiency: str
    observed_efficiency: str


class AttackInfoDocument(BaseModel):
    name: str
    info_metric: float
    events: int
    diagnostics: Dict[str, float] = Field(default_factory=dict)


class PartyViewDocument(BaseModel):
    role: str
    measured_qubits: int
    knows_swap_plan: bool
    keys: Dict[str, str]
    ciphertexts: Dict[str, str]
    verdict: Optional[str] = None


class TranscriptDocument(BaseModel):
    schema_version: str = SCHEMA_VERSION
    kind: Literal["transcript"] = "transcript"
    config: RunConfig
    status: Literal["verdict", "aborted", "insufficient-key"]
    detail: Optional[str] = None
    secret_a: str
    secret_b: str
    verdict: Optional[str] = None
    r_bits: Optional[str] = None
    keys: Dict[str, str] = Field(default_factory=dict)
    key_agreement: Dict[str, bool] = Field(default_factory=dict)
    ciphertexts: Dict[str, str] = Field(default_factory=dict)
    tally: TallyDocument
    check_groups: List[int]
    groups: List[GroupDocument]
    resources: ResourceDocument
    attack: Optional[AttackInfoDocument] = None
    views: Dict[str, PartyViewDocument]

    @classmethod
    def from_transcript(cls, config: RunConfig, transcript: Transcript,
                        error: Optional[Exception] = None) -> "TranscriptDocument":
        status = "verdict"
        if isinstance(error, DetectionAbort):
            status = "aborted"
        elif isinstance(error, InsufficientKey):
            status = "insufficient-key"
        check = set(transcript.check_groups)
        groups = []
        for record in transcript.records:
            groups.append(GroupDocument(
                index=record.group_index,
                swapped=record.plan.swapped,
                check_group=record.group_index in check,
                alice_ops="".join(op.value for op in record.alice_ops),
                bob_ops="".join(op.value for op in record.bob_ops),
                sift=[c.value for c in sift(record)],
            ))
        resources = transcript.resources
        n = transcript.config.n
        outcome = transcript.outcome
        return cls(
            config=config,
            status=status,
            detail=str(error) if error else None,
            secret_a=str(transcript.config.secret_a),
            secret_b=str(transcript.config.secret_b),
            verdict=outcome.verdict.value if outcome else None,
            r_bits=bit_string(outcome.r_bits) if outcome else None,
            keys={name: bit_string(getattr(transcript.keys, name).bits)
                  for name in ("k_ab", "k_ta", "k_tb")} if transcript.keys else {},
            key_agreement=dict(transcript.key_agreement),
            ciphertexts={name: bit_string(c.bits) for name, c in transcript.ciphertexts.items()},
            tally=TallyDocument.from_tally(transcript.tally),
            check_groups=list(transcript.check_groups),
            groups=groups,
            resources=ResourceDocument(
                tp_qubits=resources.tp_qubits,
                alice_regenerations=resources.alice_regenerations,
                bob_regenerations=resources.bob_regenerations,
                classical_bits=resources.classical_bits,
                nominal_efficiency=str(resources.nominal_efficiency(n)),
                observed_efficiency=str(resources.observed_efficiency(n)),
            ),
            attack=AttackInfoDocument(
                name=transcript.attack.name,
                info_metric=transcript.attack.info_metric,
                events=transcript.attack.events,
                diagnostics=transcript.attack.diagnostics,
            ) if transcript.attack else None,
            views={
                role.value: PartyViewDocument(
                    role=role.value,
                    measured_qubits=len(view.own_bits),
                    knows_swap_plan=bool(view.swap_plan),
                    keys={name: bit_string(bits) for name, bits in view.keys.items()},
                    ciphertexts={name: bit_string(bits) for name, bits in view.ciphertexts.items()},
                    verdict=view.verdict.value if view.verdict else None,
                )
                for role, view in transcript.views.items()
            },
        )

    def csv_rows(self) -> List[Dict[str, Any]]:
        return [
            {
                "group": g.index,
                "swapped": int(g.swapped),
                "check_group": int(g.check_group),
                "alice_ops": g.alice_ops,
                "bob_ops": g.bob_ops,
                "sift": " ".join(g.sift),
            }
            for g in self.groups
        ]

    def text_lines(self) -> List[str]:
        lines = [
            f"n={self.config.n} seed={self.config.seed} attack={self.config.attack} tp={self.config.tp.value}",
            f"status: {self.status}" + (f" ({self.detail})" if self.detail else ""),
            f"checks: {self.tally.total_checks} violations: {self.tally.total_violations}",
        ]
        if self.verdict:
            lines.append(f"verdict: {self.verdict}  R={self.r_bits}")
            lines.append("keys agree: " + ", ".join(f"{k}={v}" for k, v in self.key_agreement.items()))
        if self.attack:
            lines.append(f"attack {self.attack.name}: info_metric={self.attack.info_metric:.6g} events={self.attack.events}")
        lines.append(f"efficiency: nominal {self.resources.nominal_efficiency}, "
                     f"observed {self.resources.observed_efficiency}")
        return lines


# ============================================
# ATTACK REPORT DOCUMENTS
# ============================================

class AttackReportDocument(BaseModel):
    schema_version: str = SCHEMA_VERSION
    kind: Literal["attack-report"] = "attack-report"
    config: RunConfig
    attack: str
    params: Dict[str, Any]
    insider: Optional[str] = None
    trials: int
    detected: int
    detection_rate: float = Field(..., ge=0.0, le=1.0)
    ci_low: float
    ci_high: float
    info_metric: float = Field(..., ge=0.0, le=1.0)
    mean_info: float
    classes: Dict[str, CheckClassSummary]
    key_mismatch_rate: float
    insufficient_key_runs: int
    verdict_errors: int
    diagnostics: Dict[str, float] = Field(default_factory=dict)

    @classmethod
    def from_report(cls, config: RunConfig, report) -> "AttackReportDocument":
        tally = TallyDocument.from_tally(report.tally)
        return cls(
            config=config,
            attack=report.name,
            params=report.params,
            insider=report.insider,
            trials=report.trials,
            detected=report.detected,
            detection_rate=report.detection_rate,
            ci_low=report.ci_low,
            ci_high=report.ci_high,
            info_metric=min(1.0, report.info_metric),
            mean_info=report.mean_info,
            classes=tally.classes,
            key_mismatch_rate=report.key_mismatch_rate,
            insufficient_key_runs=report.insufficient_key_runs,
            verdict_errors=report.verdict_errors,
            diagnostics=report.diagnostics,
        )

    def csv_rows(self) -> List[Dict[str, Any]]:
        row = {
            "attack": self.attack,
            "params": json.dumps(self.params, sort_keys=True),
            "trials": self.trials,
            "detection_rate": self.detection_rate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "info_metric": self.info_metric,
        }
        for name, summary in self.classes.items():
            row[f"{name}_checks"] = summary.checks
            row[f"{name}_rate"] = summary.rate
        row["key_mismatch_rate"] = self.key_mismatch_rate
        return [row]

    def text_lines(self) -> List[str]:
        lines = [
            f"attack {self.attack} {json.dumps(self.params, sort_keys=True)} over {self.trials} trials (n={self.config.n})",
            f"detection: {self.detection_rate:.4f}  95% CI [{self.ci_low:.4f}, {self.ci_high:.4f}]",
            f"info_metric: {self.info_metric:.3e}  mean per run: {self.mean_info:.3e}",
        ]
        for name, summary in self.classes.items():
            lines.append(f"  {name:<11} {summary.violations:>7}/{summary.checks:<7} {summary.rate:.4f}")
        for name, value in self.diagnostics.items():
            lines.append(f"  {name}: {value:.6g}")
        return lines


# ============================================
# ANALYSIS DOCUMENTS
# ============================================

class ScenarioRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: str
    kind: str = "phi-plus"
    swapped: bool = False
    shots: Optional[int] = Field(None, ge=1, le=1_000_000)
    seed: int = Field(0, ge=0, le=MAX_SEED)


class HistogramDocument(BaseModel):
    schema_version: str = SCHEMA_VERSION
    kind: Literal["histogram"] = "histogram"
    config: ScenarioRequest
    shots: int
    width: int
    counts: Dict[str, int]
    relations: Dict[str, int] = Field(default_factory=dict)
    relation_positions: Dict[str, int] = Field(default_factory=dict)

    def csv_rows(self) -> List[Dict[str, Any]]:
        return [{"outcome": outcome, "count": count} for outcome, count in self.counts.items()]

    def text_lines(self) -> List[str]:
        lines = [f"{'outcome':<{max(self.width, 7)}}  count"]
        lines += [f"{outcome:<{max(self.width, 7)}}  {count}" for outcome, count in sorted(self.counts.items())]
        for name, held in self.relations.items():
            lines.append(f"{name}: {held}/{self.shots}")
        return lines


class EfficiencyRowDocument(BaseModel):
    protocol: str
    resource: str
    mode: str
    entanglement_swapping: bool
    pre_shared_key: bool
    psk_cost: str
    comparison_cost: str
    eta: str
    eta_at_n: Optional[str] = None
    eta_limit: str
    cost_columns_consistent: bool
    quantum_resources: Optional[str] = None
    classical_bits: Optional[str] = None


class EfficiencyDocument(BaseModel):
    schema_version: str = SCHEMA_VERSION
    kind: Literal["efficiency"] = "efficiency"
    n: Optional[int] = None
    rows: List[EfficiencyRowDocument]

    @classmethod
    def from_rows(cls, rows, n: Optional[int] = None) -> "EfficiencyDocument":
        return cls(n=n, rows=[
            EfficiencyRowDocument(
                protocol=row.label,
                resource=row.resource,
                mode=row.mode,
                entanglement_swapping=row.swapping,
                pre_shared_key=row.pre_shared_key,
                psk_cost=str(row.psk_cost),
                comparison_cost=str(row.comparison_cost),
                eta=row.eta_formula,
                eta_at_n=str(row.eta(n)) if n else None,
                eta_limit=str(Fraction(row.c.a, row.eta_denominator.a)),
                cost_columns_consistent=row.cost_columns_consistent,
                quantum_resources=str(row.q) if row.q else None,
                classical_bits=str(row.b) if row.b else None,
            )
            for row in rows
        ])

    def csv_rows(self) -> List[Dict[str, Any]]:
        return [row.model_dump() for row in self.rows]

    def text_lines(self) -> List[str]:
        header = f"{'Protocol':<14}{'Resource':<32}{'Mode':<13}{'Swap':<6}{'PSK':<5}{'PSK cost':<10}{'Cost':<10}eta"
        lines = [header]
        for row in self.rows:
            eta = row.eta + (f" = {row.eta_at_n}" if row.eta_at_n else "")
            lines.append(
                f"{row.protocol:<14}{row.resource:<32}{row.mode:<13}"
                f"{'yes' if row.entanglement_swapping else 'no':<6}{'yes' if row.pre_shared_key else 'no':<5}"
                f"{row.psk_cost:<10}{row.comparison_cost:<10}{eta}"
            )
        return lines


class DetectionCurveRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    p: float = Field(..., ge=0.0, le=1.0)
    ks: List[int] = Field(default_factory=lambda: [1, 2, 4, 8], min_length=1)
    failures: Optional[List[bool]] = None

    @field_validator("ks")
    @classmethod
    def check_ks(cls, value: List[int]) -> List[int]:
        if any(k < 1 for k in value):
            raise ValueError("every k must be at least 1")
        return value


class DetectionPointDocument(BaseModel):
    k: int
    analytic: float
    empirical: Optional[float] = None


class DetectionCurveDocument(BaseModel):
    schema_version: str = SCHEMA_VERSION
    kind: Literal["detection-curve"] = "detection-curve"
    config: Dict[str, Any]
    p: float
    points: List[DetectionPointDocument]

    def csv_rows(self) -> List[Dict[str, Any]]:
        return [point.model_dump() for point in self.points]

    def text_lines(self) -> List[str]:
        lines = [f"p = {self.p:.6g}", f"{'k':>5}  {'1-(1-p)^k':>10}  empirical"]
        for point in self.points:
            empirical = "-" if point.empirical is None else f"{point.empirical:.4f}"
            lines.append(f"{point.k:>5}  {point.analytic:>10.6f}  {empirical}")
        return lines


class HealthResponse(BaseModel):
    status: str
    version: str
    schema_version: str = SCHEMA_VERSION
    roles: List[str] = Field(default_factory=lambda: [role.value for role in Role])
    group_size: int = GROUP_SIZE
