from .tensor import Tensor
from .params import Model, ParamGroup, set_trainable, save_checkpoint, load_checkpoint
from .optim import AdaDeltaState, adadelta_step, clip_global_norm

__all__ = [
    "Tensor", "Model", "ParamGroup", "set_trainable",
    "save_checkpoint", "load_checkpoint",
    "AdaDeltaState", "adadelta_step", "clip_global_norm",
]
