"""Request/response models for the HTTP service (and the CLI, its twin client)."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class SizeCodebookRequest(BaseModel):
    users: int = Field(ge=2)
    min_distance: int = Field(ge=1)
    confidence: float = Field(gt=0.0, lt=1.0)


class SizeCodebookResponse(BaseModel):
    embedding_length: int
    bound: float


class GenerateDataRequest(BaseModel):
    out_path: str
    participants: int = Field(ge=1)
    unseen: int = Field(default=0, ge=0)
    input_length: int = 256
    separation: float = 6.0
    noise: float = 0.5
    train_samples: int = 15
    validation_samples: int = 5
    warmup_samples: int = 5
    test_samples: int = 5
    unseen_test_samples: int = 10
    seed: int = 0


class GenerateDataResponse(BaseModel):
    features_path: str
    manifest_path: str
    participants: int
    unseen: int
    input_length: int


class TrainRequest(BaseModel):
    config: dict
    output_dir: Optional[str] = None  # overrides config.output_dir
    seed: Optional[int] = None        # overrides config.seed
    threads: int = Field(default=1, ge=1)


class TrainResponse(BaseModel):
    checkpoint_path: str
    codebook_path: str
    round_log_path: str
    population_path: str
    embedding_length: int
    participants: int
    unseen: int
    rounds: int
    final_mean_loss: Optional[float] = None


class CalibrateRequest(BaseModel):
    checkpoint_path: str
    codebook_path: str
    population_path: str
    out_path: str
    tpr: float = Field(default=0.9, gt=0.0, le=1.0)


class CalibrationRow(BaseModel):
    user_id: int
    k: int
    r: float
    tau: float


class CalibrateResponse(BaseModel):
    calibration_path: str
    rows: list[CalibrationRow]


class AuthenticateRequest(BaseModel):
    checkpoint_path: str
    codebook_path: str
    calibration_path: str
    user_id: int
    sample_path: Optional[str] = None
    sample: Optional[list[float]] = None


class AuthenticateResponse(BaseModel):
    verdict: str  # "accept" or "reject"
    score: float
    tau: float
    user_id: int


class CohortMetrics(BaseModel):
    cohort: str
    auc: float
    genuine_count: int
    imposter_count: int
    fpr_at_tpr: dict[str, float]


class EvaluateRequest(BaseModel):
    checkpoint_path: str
    codebook_path: str
    population_path: str
    output_dir: str
    tpr_targets: list[float] = [0.8, 0.9]
    log_x: bool = False


class EvaluateResponse(BaseModel):
    report_paths: dict[str, str]
    cohorts: list[CohortMetrics]


class HealthResponse(BaseModel):
    status: str
    version: str
