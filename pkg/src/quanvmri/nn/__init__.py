from .gradcheck import GradCheckReport, gradient_check
from .layers import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    MaxPool2,
    Param,
    ReLU,
    concat_channels,
    mse_loss,
    split_channels,
)
from .network import (
    AsymmetricUNet,
    ClassicalFrontEnd,
    ConvBNRelu,
    HybridNetwork,
    QuantumFrontEnd,
    build_hybrid_network,
)
from .optim import Adam

__all__ = [
    "Adam",
    "AsymmetricUNet",
    "BatchNorm2d",
    "ClassicalFrontEnd",
    "Conv2d",
    "ConvBNRelu",
    "ConvTranspose2d",
    "GradCheckReport",
    "HybridNetwork",
    "MaxPool2",
    "Param",
    "QuantumFrontEnd",
    "ReLU",
    "build_hybrid_network",
    "concat_channels",
    "gradient_check",
    "mse_loss",
    "split_channels",
]
