"""Central finite-difference validation of analytic gradients."""

import numpy as np

from .errors import GradCheckError
from .tensor import Tensor


def grad_check(fn, inputs, eps=1e-4, seed=0, kink_safe=False):
    """Return the max relative error between analytic and numeric gradients.

    ``fn(*inputs)`` must return a Tensor.  Non-scalar outputs are reduced with
    a fixed random projection so every output element contributes.  Relative
    error per element is ``|a - n| / max(|a|, |n|, 1e-8)``; the maximum over
    every element of every input is returned.  Inputs must be float64.

    With ``kink_safe`` an element whose central difference disagrees also gets
    second-order one-sided differences (``x, x±eps, x±2eps``) and keeps the
    best of the three.  Away from kinks all three agree to O(eps^2), so a wrong
    analytic gradient is still caught; when the central stencil straddles a
    PReLU kink the one-sided stencil on the clean side is exact.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("grad_check needs float64 inputs")
        t.requires_grad = True
        t.grad = None

    out = fn(*inputs)
    proj = np.random.default_rng(seed).standard_normal(out.shape)

    def scalar():
        return float((fn(*inputs).data * proj).sum())

    out.backward(proj.astype(out.dtype))
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    for k, (t, a) in enumerate(zip(inputs, analytic)):
        bad = ~np.isfinite(a)
        if bad.any():
            loc = tuple(int(i) for i in np.argwhere(bad)[0])
            raise GradCheckError(f"non-finite analytic gradient in input {k} at {loc}")

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), 1e-8)

    f0 = scalar() if kink_safe else None
    worst = 0.0
    for k, (t, a) in enumerate(zip(inputs, analytic)):
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            fp = scalar()
            flat[idx] = orig - eps
            fm = scalar()
            flat[idx] = orig
            num = (fp - fm) / (2 * eps)
            if not np.isfinite(num):
                raise GradCheckError(f"non-finite numeric gradient in input {k} at flat index {idx}")
            err = rel(aflat[idx], num)
            if kink_safe and err > 1e-6:
                flat[idx] = orig + 2 * eps
                fpp = scalar()
                flat[idx] = orig - 2 * eps
                fmm = scalar()
                flat[idx] = orig
                right = (-3 * f0 + 4 * fp - fpp) / (2 * eps)
                left = (3 * f0 - 4 * fm + fmm) / (2 * eps)
                err = min(err, rel(aflat[idx], right), rel(aflat[idx], left))
            worst = max(worst, err)
    for t in inputs:
        t.grad = None
    return worst


def module_grad_check(module, x, eps=1e-4, seed=0):
    """Grad-check a module w.r.t. its input and all its parameters."""
    params = [p for _, p in module.named_parameters()]
    x = x if isinstance(x, Tensor) else Tensor(x, dtype=np.float64)

    def fn(inp, *_):
        return module(inp)

    return grad_check(fn, [x] + params, eps=eps, seed=seed)
