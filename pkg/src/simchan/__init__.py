"""Similarity-based channel prediction: a top-k Nadaraya-Watson estimator
recast as a trainable two-layer network, with a synthetic multipath channel
generator, positioning baselines and an experiment runner."""

from .chanscene import LabeledDataset, Scene, generate_dataset, indoor_room, outdoor_area, synth_channel
from .simnet import ForwardTrace, SimilarityModel, backward, forward, hard_threshold, init_from_dataset, predict_batch
from .train import TrainConfig, fine_tune

__all__ = [
    "ForwardTrace", "LabeledDataset", "Scene", "SimilarityModel", "TrainConfig",
    "backward", "fine_tune", "forward", "generate_dataset", "hard_threshold",
    "indoor_room", "init_from_dataset", "outdoor_area", "predict_batch", "synth_channel",
]
