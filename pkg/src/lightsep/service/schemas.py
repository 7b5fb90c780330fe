"""Request and response bodies of the separation service."""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    stems: List[str]


class ParamsResponse(BaseModel):
    preset: str
    parameters: int


class DescribeRequest(BaseModel):
    preset: Optional[str] = None
    config: Optional[str] = Field(None, description="TOML config document")


class DescribeResponse(BaseModel):
    summary: str


class SeparateRequest(BaseModel):
    audio: str = Field(..., description="base64-encoded stereo 44.1 kHz WAV")
    chunk_seconds: Optional[float] = Field(None, gt=0)
    overlap: float = Field(0.5, ge=0, lt=1)


class SeparateResponse(BaseModel):
    sample_rate: int
    num_samples: int
    stems: Dict[str, str] = Field(..., description="stem -> base64 32-bit float WAV")
    provenance: Dict[str, Any] = {}


class EvaluateRequest(BaseModel):
    data_dir: str = Field(..., description="corpus root on the server's filesystem")
    chunk_seconds: Optional[float] = Field(None, gt=0)
    overlap: float = Field(0.5, ge=0, lt=1)


class EvaluateResponse(BaseModel):
    per_song: Dict[str, Dict[str, Optional[float]]]
    per_stem: Dict[str, Optional[float]]
    average: Optional[float]
    metadata: Dict[str, Any] = {}
    skipped: List[Dict[str, str]] = []
