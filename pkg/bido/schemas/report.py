from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from bido.schemas.dex import DexHeaderSchema, IndexSpanSchema


class MetricsSchema(BaseModel):
    """Confusion counts and ratios; a ratio with a zero denominator is None."""

    tp: int = Field(..., ge=0)
    tn: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)
    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None

    @classmethod
    def from_counts(cls, tp: int, tn: int, fp: int, fn: int) -> "MetricsSchema":
        total = tp + tn + fp + fn
        accuracy = (tp + tn) / total if total else None
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None
        f1 = None
        if precision is not None and recall is not None and precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        return cls(
            tp=tp,
            tn=tn,
            fp=fp,
            fn=fn,
            accuracy=accuracy,
            precision=precision,
            recall=recall,
            f1=f1,
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def f1_or_zero(self) -> float:
        """F1 for ranking runs; an undefined F1 ranks as 0."""
        return self.f1 if self.f1 is not None else 0.0


class EvalReportSchema(BaseModel):
    metrics: MetricsSchema
    correct_predictions: int
    incorrect_predictions: int
    total: int
    confusion_matrix: Dict[str, Dict[str, int]]


class EpochRecordSchema(BaseModel):
    epoch: int
    lr: float
    loss: float
    loss_xml: float
    loss_dex: float
    loss_ops: float
    loss_contrastive: float
    val: Optional[MetricsSchema] = None


class SplitSizesSchema(BaseModel):
    train: int
    val: int
    test: int


class TrainSummarySchema(BaseModel):
    epochs: int
    seed: int
    split: SplitSizesSchema
    history: List[EpochRecordSchema]
    checkpoint: Optional[str] = None
    test: Optional[MetricsSchema] = None


class SpectrumReportSchema(BaseModel):
    rank: int
    rows: int
    cols: int
    singular_values: List[float]
    numerical_rank: int


class InspectReportSchema(BaseModel):
    path: str
    header: DexHeaderSchema
    spans: List[IndexSpanSchema]
    index_length: int
    pixels_used: int
    truncated: bool
    spectrum: Optional[SpectrumReportSchema] = None


class RunResultSchema(BaseModel):
    seed: int
    metrics: MetricsSchema


class ExperimentRowSchema(BaseModel):
    """One arm of a comparison (a fusion method, a K, a variant, a drift level)."""

    name: str
    runs: List[RunResultSchema]
    mean_f1: float
    token_count: Optional[int] = None


class ExperimentReportSchema(BaseModel):
    experiment: str
    seeds: List[int]
    rows: List[ExperimentRowSchema]

    def row(self, name: str) -> ExperimentRowSchema:
        return next(row for row in self.rows if row.name == name)


class RobustnessRowSchema(BaseModel):
    variant: str
    scenario: str
    clean_f1: float
    obfuscated_f1: float
    drop: float


class RobustnessReportSchema(BaseModel):
    experiment: str = "robustness"
    seeds: List[int]
    transforms: List[str]
    rows: List[RobustnessRowSchema]

    def row(self, variant: str, scenario: str) -> RobustnessRowSchema:
        return next(
            row for row in self.rows if row.variant == variant and row.scenario == scenario
        )
