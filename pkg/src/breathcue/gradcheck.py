"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class GradcheckReport:
    kernel: str
    seed: int | None
    max_rel_error: float
    passed: bool
    message: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.message})" if self.message else ""
        return f"{status} {self.kernel} seed={self.seed} rel_err={self.max_rel_error:.3e}{extra}"


def _scalar_head(out, seed):
    """Reduce a non-scalar output with fixed random weights so every element matters."""
    if out.size == 1:
        return dc.reshape(out, ())
    rng = np.random.default_rng(None if seed is None else seed + 7919)
    weights = rng.standard_normal(out.shape)
    return dc.sum_(dc.mul(out, weights))


def relative_error(analytic, numeric):
    """Elementwise relative error floored at 1e-3 of the gradient's overall scale.

    The floor keeps round-off in near-zero components from dominating while
    still checking every component against the largest one.
    """
    scale = max(np.max(np.abs(numeric), initial=0.0), np.max(np.abs(analytic), initial=0.0))
    floor = max(1e-3 * scale, 1e-10)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom, initial=0.0))


def gradcheck(kernel, inputs, seed=None, name=None, wrt=None, step=STEP, tol=TOLERANCE):
    """Compare tape gradients of ``kernel(*tensors)`` with central differences.

    ``inputs`` are arrays; those selected by ``wrt`` (default: all) become
    tensors requiring gradients. Non-scalar outputs get a seeded random
    reduction head.
    """
    name = name or getattr(kernel, "__name__", "kernel")
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    wrt = list(range(len(arrays))) if wrt is None else list(wrt)

    def evaluate(arrs, record):
        tensors = [dc.Tensor(a, requires_grad=(i in wrt)) for i, a in enumerate(arrs)]
        if record:
            with dc.Tape() as tape:
                loss = _scalar_head(dc.as_tensor(kernel(*tensors)), seed)
            return loss, tape, tensors
        return _scalar_head(dc.as_tensor(kernel(*tensors)), seed), None, tensors

    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            loss, tape, tensors = evaluate(arrays, True)
            if not np.isfinite(loss.data).all():
                raise FloatingPointError("non-finite loss")
            tape.backward(loss)
            worst = 0.0
            for i in wrt:
                analytic = tape.grad(tensors[i])
                numeric = np.zeros_like(arrays[i])
                flat = arrays[i].reshape(-1)
                num_flat = numeric.reshape(-1)
                for k in range(flat.size):
                    orig = flat[k]
                    flat[k] = orig + step
                    fp = evaluate(arrays, False)[0].item()
                    flat[k] = orig - step
                    fm = evaluate(arrays, False)[0].item()
                    flat[k] = orig
                    num_flat[k] = (fp - fm) / (2 * step)
                if not (np.isfinite(analytic).all() and np.isfinite(numeric).all()):
                    raise FloatingPointError("non-finite gradient")
                worst = max(worst, relative_error(analytic, numeric))
    except FloatingPointError as exc:
        return GradcheckReport(name, seed, float("inf"), False, f"non-finite intermediate: {exc}")
    return GradcheckReport(name, seed, worst, worst < tol)
