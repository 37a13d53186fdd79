"""Central finite-difference verification of analytic gradients.

For each parameter element the analytic gradient from one backward pass is
compared against (L(p+eps) - L(p-eps)) / (2 eps). Elements whose perturbation
flips the network's discrete state (a relu sign or a pooling argmax) sit on a
nondifferentiable kink and are excluded; everything else must agree within
the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative error when either side is meaningful, absolute when both are tiny.
_TINY = 1e-6


def _rel_err(a: float, n: float) -> float:
    scale = max(abs(a), abs(n))
    return abs(a - n) if scale < _TINY else abs(a - n) / scale


@dataclass
class GradCheckReport:
    max_rel_err: float
    n_checked: int
    n_skipped: int
    tolerance: float
    failures: list[tuple[str, int, float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def grad_check(net, loss_of_output, forward, epsilon: float = 1e-5,
               tolerance: float = 1e-4) -> GradCheckReport:
    """Check net's analytic gradients against central differences.

    forward() runs the model on the fixed sample and returns its output;
    loss_of_output(out) returns (scalar loss, gradient wrt out). The sample
    is baked into the closures so this function only perturbs parameters.
    """
    out = forward()
    _, grad_out = loss_of_output(out)
    net.backward(grad_out)
    analytic = {name: g.copy() for name, g in net.grads().items()}
    params = net.params()

    def loss_and_signature():
        value, _ = loss_of_output(forward())
        sig = net.kink_signature()
        return value, sig

    max_rel = 0.0
    n_checked = 0
    n_skipped = 0
    failures = []
    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            loss_plus, sig_plus = loss_and_signature()
            flat[j] = orig - epsilon
            loss_minus, sig_minus = loss_and_signature()
            flat[j] = orig
            if sig_plus is not None and (
                sig_plus.shape != sig_minus.shape or not np.array_equal(sig_plus, sig_minus)
            ):
                n_skipped += 1
                continue
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            rel = _rel_err(float(a_flat[j]), float(numeric))
            max_rel = max(max_rel, rel)
            n_checked += 1
            if rel > tolerance:
                failures.append((name, j, float(a_flat[j]), float(numeric), rel))
    return GradCheckReport(
        max_rel_err=max_rel,
        n_checked=n_checked,
        n_skipped=n_skipped,
        tolerance=tolerance,
        failures=failures,
    )
