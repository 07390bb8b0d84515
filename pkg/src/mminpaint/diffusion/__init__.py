from .objective import DEFAULT_CFG_SCALE, cfg_predict, training_loss
from .sampler import plms_sample, sample
from .schedule import NoiseSchedule, add_noise
from .unet import DiffusionUNet

__all__ = [
    "DEFAULT_CFG_SCALE",
    "DiffusionUNet",
    "NoiseSchedule",
    "add_noise",
    "cfg_predict",
    "plms_sample",
    "sample",
    "training_loss",
]
