"""Hybrid quantum-classical MRI reconstruction toolkit.

A simulated 4-qubit quanvolution front end feeding an asymmetric U-net
trained to map zero-filled undersampled MR images to fully sampled ground
truth, with a classical-convolution control arm, MRI undersampling physics,
a synthetic multicoil phantom source, and a PSNR/SSIM evaluation harness.
"""

__version__ = "0.1.0"

from .qsim import CircuitConfig  # noqa: E402 (re-export)

__all__ = ["CircuitConfig", "__version__"]
