"""
Schemas
=======
Defines the structure of everything that is written to or read from disk.

Schemas:
- GapSpec: one missing segment of a record
- DatasetManifest: records, gaps and the train/val split of a dataset
- XiNetConfig: network geometry and variant
- TrainConfig: optimizer, schedule and loss settings
- EpochRecord: one row of the loss history
- SampleMetrics / EvalReport: gap-restricted evaluation results
"""

import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from xinet.errors import ConfigError


class GapSpec(BaseModel):
    """A contiguous zero-filled segment [start_index, start_index + length_samples)."""

    start_index: int = Field(ge=0)
    length_samples: int = Field(ge=1)
    sample_rate_hz: Optional[float] = Field(default=None, gt=0)

    @property
    def end_index(self):
        return self.start_index + self.length_samples

    @property
    def start_s(self):
        return self.start_index / self.sample_rate_hz if self.sample_rate_hz else None

    @property
    def end_s(self):
        return self.end_index / self.sample_rate_hz if self.sample_rate_hz else None

    def mirrored(self, length):
        """The same gap after time-reversing a record of `length` samples."""
        return GapSpec(start_index=length - self.end_index, length_samples=self.length_samples,
                       sample_rate_hz=self.sample_rate_hz)


class DatasetManifest(BaseModel):
    """Sidecar JSON describing a generated dataset directory."""

    sample_rate_hz: float = Field(gt=0)
    length: int = Field(ge=2)
    files: List[str]
    gaps: List[GapSpec]
    seed: int
    split: Dict[str, List[str]]

    @model_validator(mode='after')
    def check_consistency(self):
        if len(self.files) != len(self.gaps):
            raise ValueError(f"{len(self.files)} files but {len(self.gaps)} gaps")
        train = set(self.split.get('train', []))
        val = set(self.split.get('val', []))
        overlap = train & val
        if overlap:
            raise ValueError(f"train and val splits overlap: {sorted(overlap)[:3]}")
        unknown = (train | val) - set(self.files)
        if unknown:
            raise ValueError(f"split names files not in the manifest: {sorted(unknown)[:3]}")
        return self


class XiNetConfig(BaseModel):
    """
    Architecture hyperparameters.

    Constraint: (input_length / patch) must be divisible by window * 2^stages,
    so every stage down to the bottleneck tiles into whole windows.
    """

    input_length: int = Field(default=1024, ge=4)
    patch: int = Field(default=4, ge=1)
    embed_dim: int = Field(default=32, ge=2)
    stage_depths: List[int] = Field(default_factory=lambda: [2, 2, 2])
    bottleneck_depth: int = Field(default=2, ge=0)
    window: int = Field(default=8, ge=1)
    heads: Optional[List[int]] = None
    variant: Literal['full', 'time_only', 'single_encoder'] = 'full'
    seed: int = 0
    dtype: Literal['float32', 'float64'] = 'float32'
    spectrum_scale: Optional[float] = None

    @field_validator('stage_depths')
    @classmethod
    def check_depths(cls, depths):
        if not depths or any(d < 1 for d in depths):
            raise ValueError(f"stage_depths must be a nonempty list of positive ints, got {depths}")
        return depths

    @model_validator(mode='after')
    def check_geometry(self):
        if self.input_length % self.patch:
            raise ValueError(f"input_length {self.input_length} not divisible by patch {self.patch}")
        tokens = self.input_length // self.patch
        unit = self.window * 2 ** len(self.stage_depths)
        if tokens % unit:
            raise ValueError(f"input_length/patch = {tokens} not divisible by "
                             f"window * 2^stages = {unit}")
        if self.heads is not None and len(self.heads) != len(self.stage_depths):
            raise ValueError(f"heads {self.heads} must give one count per stage {self.stage_depths}")
        return self

    @property
    def num_stages(self):
        return len(self.stage_depths)

    @property
    def num_tokens(self):
        return self.input_length // self.patch


class TrainConfig(BaseModel):
    """Optimizer, schedule and loss settings (AdamW, 80 epochs, 1e-3 / 1e-4 by default)."""

    epochs: int = Field(default=80, ge=1)
    base_lr: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=8, ge=1)
    seed: int = 0
    schedule: Literal['constant_then_cosine', 'constant', 'constant_then_step'] = 'constant_then_cosine'
    final_lr_ratio: float = Field(default=0.01, gt=0, le=1)
    loss_scope: Literal['full_waveform', 'gap_weighted'] = 'full_waveform'
    gap_loss_lambda: float = Field(default=1.0, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    mirror_augment: bool = True


class EpochRecord(BaseModel):
    """One row of the loss history CSV."""

    epoch: int
    lr: float
    train_loss: float
    val_gap_mae: Optional[float] = None


class SampleMetrics(BaseModel):
    """Gap-restricted metrics of one sample."""

    index: int
    dfd: float = Field(ge=0)
    mae: float = Field(ge=0)
    rmse: float = Field(ge=0)
    range_pred: float = Field(ge=0)
    range_target: float = Field(ge=0)


class EvalReport(BaseModel):
    """Dataset-level DFD / MRD / MAE / RMSE of one reconstructor."""

    reconstructor: str
    margin: int = Field(ge=0)
    dfd_metric: str = 'amplitude'
    dfd_mean: float = Field(ge=0)
    mrd: float = Field(ge=0)
    mae_mean: float = Field(ge=0)
    rmse_mean: float = Field(ge=0)
    samples: List[SampleMetrics]

    @model_validator(mode='after')
    def check_finite(self):
        for name in ('dfd_mean', 'mrd', 'mae_mean', 'rmse_mean'):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")
        return self


def parse_config(schema, payload):
    """Validating a dict against a schema, raising ConfigError on failure."""
    try:
        return schema.model_validate(payload or {})
    except ValidationError as e:
        raise ConfigError(f"invalid {schema.__name__}: {e.errors()[0]['msg']}")
