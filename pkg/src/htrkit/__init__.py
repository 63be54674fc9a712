"""Line-level handwriting recognition: CNN tokens, masked transformer, CTC."""

from .config import TrainConfig, load_config, parse_config
from .ctc import ctc_loss, ctc_loss_batch, greedy_decode
from .data import Charset, Manifest, build_charset, load_manifest, prepare
from .encoder import Encoder, EncoderConfig, sinusoidal_positions
from .extractor import Extractor, ExtractorConfig, count_parameters
from .gradcheck import gradient_check, primitive_battery, run_battery
from .metrics import cer, corpus_rates, levenshtein, wer
from .model import Model
from .optim import AdamWState, EmaState, Schedule, adamw_step, ema_update, lr_at, sam_step
from .spanmask import apply as apply_mask
from .spanmask import sample as sample_mask
from .tensor import Parameter, Tape, Tensor, backward
from .trainer import Trainer, evaluate_manifest, model_from_checkpoint, predict_image

__version__ = "0.1.0"

__all__ = [
    "AdamWState", "Charset", "EmaState", "Encoder", "EncoderConfig",
    "Extractor", "ExtractorConfig", "Manifest", "Model", "Parameter",
    "Schedule", "Tape", "Tensor", "TrainConfig", "Trainer", "adamw_step",
    "apply_mask", "backward", "build_charset", "cer", "corpus_rates",
    "count_parameters", "ctc_loss", "ctc_loss_batch", "ema_update",
    "evaluate_manifest", "gradient_check", "greedy_decode", "levenshtein",
    "load_config", "load_manifest", "lr_at", "model_from_checkpoint",
    "parse_config", "predict_image", "prepare", "primitive_battery",
    "run_battery", "sam_step", "sample_mask", "sinusoidal_positions",
    "wer",
]
