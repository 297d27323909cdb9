"""Synthetic data, training, evaluation, ablation and the command-line front end."""

from .config import RunConfig, load_config, standard_config
from .synth import SynthSpec, synth_dataset
from .train import ablate, evaluate, train

__all__ = ["RunConfig", "SynthSpec", "ablate", "evaluate", "load_config", "standard_config", "synth_dataset", "train"]
