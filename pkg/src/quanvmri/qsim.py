"""Exact statevector simulation of the 4-qubit quanvolution kernel circuit.

A register of n qubits is a dense complex vector of length 2**n. Qubit 0 is
the most significant bit of the basis index, so reshaping a state to
``(2,) * n`` puts qubit q on axis q. All gate functions are pure: the input
state is never mutated. Readouts are exact Pauli-Z expectations (the
infinite-shot, noise-free limit); nothing here is sampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 8

_TOPOLOGIES = ("chain", "ring")
_READOUTS = ("mean-z", "per-qubit-z")


@dataclass(frozen=True)
class CircuitConfig:
    """Choices the kernel circuit leaves open: CNOT wiring, readout, angle units.

    ``mean-z`` averages the four per-qubit Z expectations into one output
    channel; ``per-qubit-z`` keeps all four. ``angle_scale`` multiplies every
    encoded angle (pixels in [0, 1] are used as radians by default).
    """

    entanglement: str = "chain"
    readout: str = "mean-z"
    angle_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.entanglement not in _TOPOLOGIES:
            raise ValueError(f"unknown entanglement topology {self.entanglement!r}")
        if self.readout not in _READOUTS:
            raise ValueError(f"unknown readout {self.readout!r}")
        if not (np.isfinite(self.angle_scale) and self.angle_scale > 0):
            raise ValueError("angle_scale must be positive and finite")

    def cnot_pairs(self, n_qubits: int) -> tuple[tuple[int, int], ...]:
        """(control, target) pairs in application order."""
        pairs = tuple((q, q + 1) for q in range(n_qubits - 1))
        if self.entanglement == "ring" and n_qubits > 1:
            pairs += ((n_qubits - 1, 0),)
        return pairs

    @property
    def n_channels(self) -> int:
        return 1 if self.readout == "mean-z" else 4


def state_init(n: int = 4) -> np.ndarray:
    """Ground state |0...0> of an n-qubit register."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise ValueError(f"qubit count must be an integer in [1, {MAX_QUBITS}], got {n!r}")
    state = np.zeros(2**n, dtype=np.complex128)
    state[0] = 1.0
    return state


def _num_qubits(state: np.ndarray) -> int:
    n = int(state.size).bit_length() - 1
    if state.ndim != 1 or state.size != 2**n:
        raise ValueError(f"state must be a 1-D vector of length 2**n, got shape {state.shape}")
    return n


def _check_qubit(n: int, qubit: int) -> None:
    if not 0 <= qubit < n:
        raise ValueError(f"qubit index {qubit} out of range for {n} qubits")


# Batched kernels. `states` has shape (B, 2, ..., 2); qubit q lives on axis
# q + 1. Per-row angles broadcast over the remaining qubit axes. Every public
# single-state gate goes through these with B = 1, so the batched quanvolution
# path is bit-identical to gate-by-gate application.

def _ry_batch(states: np.ndarray, qubit: int, theta: np.ndarray) -> np.ndarray:
    half = np.asarray(theta, dtype=np.float64) / 2.0
    c = np.cos(half).reshape((-1,) + (1,) * (states.ndim - 2))
    s = np.sin(half).reshape((-1,) + (1,) * (states.ndim - 2))
    sw = np.moveaxis(states, 1 + qubit, 1)
    a0, a1 = sw[:, 0], sw[:, 1]
    out = np.stack([c * a0 - s * a1, s * a0 + c * a1], axis=1)
    return np.moveaxis(out, 1, 1 + qubit)


def _rz_batch(states: np.ndarray, qubit: int, phi: np.ndarray) -> np.ndarray:
    half = np.asarray(phi, dtype=np.float64) / 2.0
    shape = (-1,) + (1,) * (states.ndim - 2)
    p0 = np.exp(-1j * half).reshape(shape)
    p1 = np.exp(1j * half).reshape(shape)
    sw = np.moveaxis(states, 1 + qubit, 1)
    out = np.stack([p0 * sw[:, 0], p1 * sw[:, 1]], axis=1)
    return np.moveaxis(out, 1, 1 + qubit)


def _cnot_batch(states: np.ndarray, control: int, target: int) -> np.ndarray:
    sw = np.moveaxis(states, (1 + control, 1 + target), (1, 2))
    out = sw.copy()
    out[:, 1, 0] = sw[:, 1, 1]
    out[:, 1, 1] = sw[:, 1, 0]
    return np.moveaxis(out, (1, 2), (1 + control, 1 + target))


def _expect_z_batch(states: np.ndarray, qubit: int) -> np.ndarray:
    probs = np.moveaxis(np.abs(states) ** 2, 1 + qubit, 1)
    probs = probs.reshape(probs.shape[0], 2, -1).sum(axis=2)
    return probs[:, 0] - probs[:, 1]


def _as_batch(state: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(state, dtype=np.complex128).reshape((1,) + (2,) * n)


def apply_ry(state: np.ndarray, qubit: int, theta: float) -> np.ndarray:
    """Rotate `qubit` by RY(theta) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]."""
    n = _num_qubits(state)
    _check_qubit(n, qubit)
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    return _ry_batch(_as_batch(state, n), qubit, np.array([theta])).reshape(-1)


def apply_rz(state: np.ndarray, qubit: int, phi: float) -> np.ndarray:
    """Phase `qubit` by RZ(phi) = diag(e^{-i phi/2}, e^{+i phi/2})."""
    n = _num_qubits(state)
    _check_qubit(n, qubit)
    if not np.isfinite(phi):
        raise ValueError("phi must be finite")
    return _rz_batch(_as_batch(state, n), qubit, np.array([phi])).reshape(-1)


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    """Flip `target` on basis states where `control` is 1."""
    n = _num_qubits(state)
    _check_qubit(n, control)
    _check_qubit(n, target)
    if control == target:
        raise ValueError("control and target must differ")
    return _cnot_batch(_as_batch(state, n), control, target).reshape(-1)


def expect_z(state: np.ndarray, qubit: int) -> float:
    """Pauli-Z expectation of `qubit`: sum of (+/-1)-signed basis probabilities."""
    n = _num_qubits(state)
    _check_qubit(n, qubit)
    return float(_expect_z_batch(_as_batch(state, n), qubit)[0])


def run_patch_batch(angles: np.ndarray, config: CircuitConfig | None = None) -> np.ndarray:
    """Run the fixed 4-qubit kernel circuit on a batch of angle sets.

    `angles` has shape (B, 4, 2): per qubit q an (RY, RZ) angle pair. Each
    circuit starts from |0000>, encodes via RY then RZ on every qubit (angles
    multiplied by ``config.angle_scale``), entangles with CNOTs per the
    topology, and reads out Z expectations. Returns shape (B,) for ``mean-z``
    readout, (B, 4) for ``per-qubit-z``; values clipped to [-1, 1] against
    float round-off.
    """
    if config is None:
        config = CircuitConfig()
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 3 or angles.shape[1:] != (4, 2):
        raise ValueError(f"angles must have shape (B, 4, 2), got {angles.shape}")
    if not np.all(np.isfinite(angles)):
        raise ValueError("angles must be finite")

    n = 4
    batch = angles.shape[0]
    states = np.zeros((batch,) + (2,) * n, dtype=np.complex128)
    states[(slice(None),) + (0,) * n] = 1.0
    for q in range(n):
        states = _ry_batch(states, q, angles[:, q, 0] * config.angle_scale)
        states = _rz_batch(states, q, angles[:, q, 1] * config.angle_scale)
    for control, target in config.cnot_pairs(n):
        states = _cnot_batch(states, control, target)

    z = np.stack([_expect_z_batch(states, q) for q in range(n)], axis=1)
    z = np.clip(z, -1.0, 1.0)
    if config.readout == "mean-z":
        return z.mean(axis=1)
    return z


def run_patch_circuit(angles: np.ndarray, config: CircuitConfig | None = None) -> np.ndarray:
    """Single-patch variant of :func:`run_patch_batch`.

    `angles` has shape (4, 2). Returns a length-1 vector for ``mean-z``
    readout, length-4 for ``per-qubit-z``.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (4, 2):
        raise ValueError(f"expected 4 (RY, RZ) angle pairs, got shape {angles.shape}")
    out = run_patch_batch(angles[np.newaxis], config)
    return np.atleast_1d(out[0])
