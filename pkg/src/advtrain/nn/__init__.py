from advtrain.nn.checkpoint import load, load_metadata, save
from advtrain.nn.mlp import (
    GradientTape,
    Gradients,
    MlpNet,
    adam_step,
    backward,
    checksum,
    forward,
    hidden,
    init,
    predict,
)
