"""Desk-scale task bindings standing in for the NLP task formulations."""

from .base import TaskBinding
from .data import (
    FeatureSet,
    SyntheticTCConfig,
    TaggingConfig,
    TaggingData,
    TextClassificationData,
    generate_tagging_dataset,
    generate_tc_dataset,
    load_manifest,
    save_manifest,
)
from .metrics import accuracy, bio_decode, bio_encode, span_f1, token_f1
from .tagging import TaggingTask
from .tc import TextClassificationTask, majority_baseline

__all__ = [
    "FeatureSet",
    "SyntheticTCConfig",
    "TaggingConfig",
    "TaggingData",
    "TaggingTask",
    "TaskBinding",
    "TextClassificationData",
    "TextClassificationTask",
    "accuracy",
    "bio_decode",
    "bio_encode",
    "generate_tagging_dataset",
    "generate_tc_dataset",
    "load_manifest",
    "majority_baseline",
    "save_manifest",
    "span_f1",
    "token_f1",
]
