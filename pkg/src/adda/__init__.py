"""Contrastive pretraining with accuracy-driven scheduling of augmentation compositions."""

from .augment import AugOpSpec, Composition, CropSpec, apply_composition, two_views
from .contrastive import Queue, infonce, pretext_accuracy, weighted_epoch_loss
from .data import Dataset, easy_scenario, generate_synthetic, load_dataset, save_dataset
from .encoder import EncoderPair, EncoderParams
from .evaluation import extract_features, linear_probe, top1_accuracy
from .numerics import RngStream
from .scheduler import SamplerState, init_uniform, probabilities, subbatch_sizes
from .trainer import TrainConfig, fixed_baseline, pretrain

__version__ = "0.1.0"
