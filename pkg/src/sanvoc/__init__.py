"""sanvoc: desk-scale adversarial vocoder training with sliced
discriminators and soft-monotonized least-squares objectives, plus
objective speech metrics."""

from .autodiff import Tensor, gradient_check, stop_gradient
from .config import TrainConfig
from .dsp import MelParams, MelSpec, Waveform, hann_window, log_mel, mel_filterbank, stft_magnitude
from .nets import DiscriminatorBank, Generator, SlicedDiscriminator, snake, snakebeta
from .objectives import LossWeights, RFamily, get_family
from .trainer import TrainState, build_state, load_state, save_state, train

__all__ = [
    "Tensor", "gradient_check", "stop_gradient",
    "TrainConfig", "MelParams", "MelSpec", "Waveform",
    "hann_window", "log_mel", "mel_filterbank", "stft_magnitude",
    "DiscriminatorBank", "Generator", "SlicedDiscriminator", "snake", "snakebeta",
    "LossWeights", "RFamily", "get_family",
    "TrainState", "build_state", "load_state", "save_state", "train",
]

__version__ = "0.1.0"
