from .schedule import DiffusionSchedule, TimestepSampler, SamplerKind
from .denoiser import (
    Condition, ConditionKind, NULL_CONDITION, NoisePrediction,
    GmmComponent, GmmCondition, DenoiserBackend,
)
from .estimator import Estimator, EstimatorInputs, PREDICTION_FIELDS
from .edit import Generator, EditState, EditLog
