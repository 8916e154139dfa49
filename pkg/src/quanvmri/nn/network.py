"""The hybrid reconstruction network: pluggable half-resolution front end
(fixed quantum convolution or trainable classical 2x2 stride-2 conv) feeding
an asymmetric U-net.

The U-net follows the channel sequence 1-16-32-64-128-256-128-64-32-16 with
two max-pool downsamplings, three transposed-conv upsamplings (the last one
restores the resolution lost by the front end), 3x3 convolutions with
batchnorm + ReLU throughout, skip connections from both encoder stages, and
a linear 1x1 output conv. The computation graph is fixed; forward/backward
are written out explicitly rather than through a general autodiff.
"""

from __future__ import annotations

import numpy as np

from .. import quanv
from ..qsim import CircuitConfig
from .layers import (
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    MaxPool2,
    Param,
    ReLU,
    concat_channels,
    split_channels,
)

FRONT_ENDS = ("quantum", "classical")


class ConvBNRelu:
    """conv3x3 (pad 1) + batchnorm + ReLU, the network's standard block."""

    def __init__(self, in_channels, out_channels, *, rng, name, dtype=np.float64):
        self.conv = Conv2d(in_channels, out_channels, 3, stride=1, padding=1,
                           rng=rng, name=f"{name}.conv", dtype=dtype)
        self.bn = BatchNorm2d(out_channels, name=f"{name}.bn", dtype=dtype)
        self.relu = ReLU()

    def forward(self, x, train=True):
        return self.relu.forward(self.bn.forward(self.conv.forward(x, train), train), train)

    def backward(self, grad):
        return self.conv.backward(self.bn.backward(self.relu.backward(grad)))

    def parameters(self):
        return self.conv.parameters() + self.bn.parameters()

    def state_arrays(self):
        return self.bn.state_arrays()


def _scaled(width: int, scale: float) -> int:
    return max(1, round(width * scale))


class AsymmetricUNet:
    """Two encoder stages, three-conv bottleneck, three upsampling stages."""

    def __init__(self, in_channels=1, width_scale=1.0, *, rng, name="unet", dtype=np.float64):
        if not (np.isfinite(width_scale) and width_scale > 0):
            raise ValueError(f"width scale must be positive and finite, got {width_scale}")
        w16, w32, w64 = (_scaled(w, width_scale) for w in (16, 32, 64))
        w128, w256 = _scaled(128, width_scale), _scaled(256, width_scale)
        self.in_channels = in_channels
        self.widths = (in_channels, w16, w32, w64, w128, w256, w128, w64, w32, w16)

        blk = lambda cin, cout, tag: ConvBNRelu(cin, cout, rng=rng, name=f"{name}.{tag}", dtype=dtype)
        self.e1a = blk(in_channels, w16, "e1a")
        self.e1b = blk(w16, w16, "e1b")
        self.pool1 = MaxPool2()
        self.e2a = blk(w16, w32, "e2a")
        self.e2b = blk(w32, w32, "e2b")
        self.pool2 = MaxPool2()
        self.b1 = blk(w32, w64, "b1")
        self.b2 = blk(w64, w128, "b2")
        self.b3 = blk(w128, w256, "b3")
        self.up1 = ConvTranspose2d(w256, w128, rng=rng, name=f"{name}.up1", dtype=dtype)
        self.d1a = blk(w128 + w32, w128, "d1a")
        self.d1b = blk(w128, w64, "d1b")
        self.up2 = ConvTranspose2d(w64, w32, rng=rng, name=f"{name}.up2", dtype=dtype)
        self.d2a = blk(w32 + w16, w32, "d2a")
        self.d2b = blk(w32, w16, "d2b")
        self.up3 = ConvTranspose2d(w16, w16, rng=rng, name=f"{name}.up3", dtype=dtype)
        self.d3 = blk(w16, w16, "d3")
        self.out_conv = Conv2d(w16, 1, 1, stride=1, padding=0,
                               rng=rng, name=f"{name}.out", dtype=dtype)

        self._blocks = [self.e1a, self.e1b, self.e2a, self.e2b, self.b1, self.b2,
                        self.b3, self.d1a, self.d1b, self.d2a, self.d2b, self.d3]
        self._skip_widths = None

    def forward(self, x, train=True):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W) input, got {x.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ValueError(f"U-net input dims must be divisible by 4, got {x.shape[2:]}")
        skip1 = self.e1b.forward(self.e1a.forward(x, train), train)
        h = self.pool1.forward(skip1, train)
        skip2 = self.e2b.forward(self.e2a.forward(h, train), train)
        h = self.pool2.forward(skip2, train)
        h = self.b3.forward(self.b2.forward(self.b1.forward(h, train), train), train)
        h = concat_channels(self.up1.forward(h, train), skip2)
        h = self.d1b.forward(self.d1a.forward(h, train), train)
        h = concat_channels(self.up2.forward(h, train), skip1)
        h = self.d2b.forward(self.d2a.forward(h, train), train)
        h = self.d3.forward(self.up3.forward(h, train), train)
        self._skip_widths = (skip1.shape[1], skip2.shape[1])
        return self.out_conv.forward(h, train)

    def backward(self, grad):
        if self._skip_widths is None:
            raise RuntimeError("AsymmetricUNet.backward called before forward")
        w_skip1, w_skip2 = self._skip_widths
        self._skip_widths = None
        g = self.out_conv.backward(grad)
        g = self.up3.backward(self.d3.backward(g))
        g = self.d2a.backward(self.d2b.backward(g))
        g_up2, g_skip1 = split_channels(g, g.shape[1] - w_skip1)
        g = self.d1a.backward(self.d1b.backward(self.up2.backward(g_up2)))
        g_up1, g_skip2 = split_channels(g, g.shape[1] - w_skip2)
        g = self.b1.backward(self.b2.backward(self.b3.backward(self.up1.backward(g_up1))))
        g = self.pool2.backward(g) + g_skip2
        g = self.e2a.backward(self.e2b.backward(g))
        g = self.pool1.backward(g) + g_skip1
        return self.e1a.backward(self.e1b.backward(g))

    def parameters(self):
        params = []
        for part in [self.e1a, self.e1b, self.e2a, self.e2b, self.b1, self.b2, self.b3,
                     self.up1, self.d1a, self.d1b, self.up2, self.d2a, self.d2b,
                     self.up3, self.d3, self.out_conv]:
            params.extend(part.parameters())
        return params

    def state_arrays(self):
        state = {}
        for block in self._blocks:
            state.update(block.state_arrays())
        return state


class QuantumFrontEnd:
    """Fixed quanvolution front end; no parameters, no gradient."""

    def __init__(self, config: CircuitConfig):
        self.config = config
        self.out_channels = config.n_channels

    def forward(self, x, train=True):
        feats = [quanv.quanvolve(img[0], self.config) for img in x]
        out = np.stack(feats).astype(x.dtype)
        if self.config.readout == "mean-z":
            out = out[:, None]
        return out

    def backward(self, grad):
        return None

    def parameters(self):
        return []

    def state_arrays(self):
        return {}


class ClassicalFrontEnd:
    """Trainable 2x2 stride-2 convolution, the control arm's front end."""

    def __init__(self, out_channels, *, rng, dtype=np.float64):
        self.conv = Conv2d(1, out_channels, 2, stride=2, padding=0,
                           rng=rng, name="front.conv", dtype=dtype)
        self.out_channels = out_channels

    def forward(self, x, train=True):
        return self.conv.forward(x, train)

    def backward(self, grad):
        return self.conv.backward(grad)

    def parameters(self):
        return self.conv.parameters()

    def state_arrays(self):
        return {}


class HybridNetwork:
    """Front end + asymmetric U-net with matched shapes.

    For a full-resolution (N, 1, H, W) input (H, W divisible by 8, >= 16) the
    output is (N, 1, H, W). With the quantum front end the trainable
    parameter set is exactly the U-net's. Given one seed, both front-end
    choices build bit-identical U-net weights, which keeps the comparison
    arms matched.
    """

    def __init__(self, front_end="quantum", circuit_config: CircuitConfig | None = None,
                 width_scale=1.0, seed=0, dtype=np.float64):
        if front_end not in FRONT_ENDS:
            raise ValueError(f"front_end must be one of {FRONT_ENDS}, got {front_end!r}")
        self.front_end = front_end
        self.circuit_config = circuit_config or CircuitConfig()
        self.width_scale = width_scale
        self.seed = seed
        self.dtype = np.dtype(dtype).type

        unet_rng = np.random.default_rng([seed, 1])
        front_rng = np.random.default_rng([seed, 2])
        channels = self.circuit_config.n_channels
        if front_end == "quantum":
            self.front = QuantumFrontEnd(self.circuit_config)
        else:
            self.front = ClassicalFrontEnd(channels, rng=front_rng, dtype=self.dtype)
        self.unet = AsymmetricUNet(channels, width_scale, rng=unet_rng, dtype=self.dtype)

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W) input, got {x.shape}")
        if x.shape[2] % 8 or x.shape[3] % 8 or min(x.shape[2], x.shape[3]) < 16:
            raise ValueError(f"input dims must be >= 16 and divisible by 8, got {x.shape[2:]}")

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=self.dtype)
        self._check_input(x)
        return self.unet.forward(self.front.forward(x, train), train)

    def forward_features(self, features: np.ndarray, train: bool = True) -> np.ndarray:
        """Run the U-net on precomputed front-end features (quantum arm only)."""
        features = np.ascontiguousarray(features, dtype=self.dtype)
        return self.unet.forward(features, train)

    def backward(self, grad: np.ndarray):
        """Propagate loss gradient into every trainable parameter.

        Returns the input gradient for the classical arm, None for the fixed
        quantum front end.
        """
        return self.front.backward(self.unet.backward(grad))

    def backward_features(self, grad: np.ndarray) -> np.ndarray:
        return self.unet.backward(grad)

    def parameters(self) -> list[Param]:
        return self.front.parameters() + self.unet.parameters()

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {p.name: p.value for p in self.parameters()}
        state.update(self.front.state_arrays())
        state.update(self.unet.state_arrays())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = self.state_dict()
        missing = set(own) - set(state)
        if missing:
            raise ValueError(f"checkpoint is missing arrays: {sorted(missing)}")
        for name, value in own.items():
            incoming = np.asarray(state[name], dtype=value.dtype)
            if incoming.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: {incoming.shape} vs {value.shape}")
            value[...] = incoming


def build_hybrid_network(front_end="quantum", circuit_config=None, width_scale=1.0,
                         seed=0, dtype=np.float64) -> HybridNetwork:
    """Construct the fixed architecture; see HybridNetwork."""
    return HybridNetwork(front_end, circuit_config, width_scale, seed, dtype)
