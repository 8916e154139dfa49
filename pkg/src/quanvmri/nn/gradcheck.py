"""Central finite-difference verification of analytic gradients.

Works on anything with forward(x, train) / backward(grad) / parameters():
individual layers, composite blocks, or a whole network. The loss is the MSE
against a fixed random target, which exercises every output element. Double
precision only; the element loop makes this strictly a small-shape tool.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import mse_loss


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_block: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        lines = [f"{'PASS' if self.passed else 'FAIL'} "
                 f"(max rel error {self.max_rel_error:.3e}, tolerance {self.tolerance:.1e})"]
        for name, err in sorted(self.per_block.items()):
            lines.append(f"  {name}: {err:.3e}")
        return "\n".join(lines)


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    return float((np.abs(analytic - numeric) / denom).max())


def gradient_check(component, x: np.ndarray, *, eps: float = 1e-5,
                   tolerance: float = 1e-4, seed: int = 0,
                   check_input: bool = True) -> GradCheckReport:
    """Compare analytic parameter (and input) gradients with central differences."""
    x = np.array(x, dtype=np.float64)
    params = component.parameters()
    rng = np.random.default_rng(seed)
    target = rng.standard_normal(component.forward(x, train=True).shape)

    def loss_only() -> float:
        return mse_loss(component.forward(x, train=True), target)[0]

    def loss_and_grads() -> tuple[float, np.ndarray]:
        for p in params:
            p.grad[...] = 0
        loss, grad = mse_loss(component.forward(x, train=True), target)
        grad_x = component.backward(grad)
        return loss, grad_x

    _, analytic_x = loss_and_grads()
    analytic_params = {p.name: p.grad.copy() for p in params}

    def numeric_into(arr: np.ndarray) -> np.ndarray:
        out = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up = loss_only()
            arr[idx] = orig - eps
            down = loss_only()
            arr[idx] = orig
            out[idx] = (up - down) / (2 * eps)
        return out

    per_block = {}
    for p in params:
        per_block[p.name] = _rel_error(analytic_params[p.name], numeric_into(p.value))
    if check_input and analytic_x is not None:
        per_block["input"] = _rel_error(analytic_x, numeric_into(x))

    max_err = max(per_block.values()) if per_block else 0.0
    return GradCheckReport(max_rel_error=max_err, tolerance=tolerance, per_block=per_block)
