"""Autoregressive next-node models: attention backbone and count-based oracle."""

from walkgen.models.base import ModelConfig, TrainParams, TrainReport
from walkgen.models.transformer import TransformerModel
from walkgen.models.markov import MarkovModel, fit_markov
from walkgen.models.training import train
from walkgen.models.sampling import sample_walks, generate_schedule
from walkgen.models.checkpoint import save_model, load_model

__all__ = [
    "ModelConfig",
    "TrainParams",
    "TrainReport",
    "TransformerModel",
    "MarkovModel",
    "fit_markov",
    "train",
    "sample_walks",
    "generate_schedule",
    "save_model",
    "load_model",
]
