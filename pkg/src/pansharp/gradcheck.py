"""Finite-difference verification of tape gradients.

Compares reverse-mode gradients of a random scalar projection of `fn`'s
output against central differences, coordinate by coordinate. Checks run in
float64; callers hand in float64 tensors and a pure `fn`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, backward, mul, no_grad, tensor_sum
from .optim import Parameter


@dataclass
class GradCheckResult:
    max_rel_error: float
    tolerance: float
    passed: bool
    coords_checked: int
    per_input: list = field(default_factory=list)

    def __str__(self):
        status = "ok" if self.passed else "FAIL"
        return (
            f"grad_check {status}: max rel error {self.max_rel_error:.3e} "
            f"(tol {self.tolerance:.1e}, {self.coords_checked} coords)"
        )


def _projected_sum(fn, inputs, proj):
    out = fn(*inputs)
    return float((out.data * proj).sum())


def grad_check(fn, inputs, tolerance=1e-4, seed=0, max_coords_per_input=None):
    """Check d(sum(fn(*inputs) * r)) / d(input) for every (or a sampled) coordinate.

    Central differences with step 1e-5 * max(1, |x|). Piecewise-linear
    activations (relu, abs) make that stencil unreliable when a kink falls
    inside it, so a coordinate that disagrees is re-estimated with two finer
    steps (h/10, h/100); the finer estimate replaces the first only when the
    two agree with each other. The analytic value never feeds the numeric
    estimate, so a wrong backward pass still fails.

    :param fn: pure function Tensor... -> Tensor; re-evaluated per perturbation.
    :param inputs: float64 tensors with requires_grad set (Parameters qualify).
    :param tolerance: max allowed relative error |a - n| / max(1, |a|, |n|).
    :param seed: seeds both the output projection and coordinate subsampling.
    :param max_coords_per_input: cap on checked coordinates per input
        (None checks every coordinate).
    :returns: GradCheckResult; `per_input` holds one max error per input.
    """
    inputs = list(inputs)
    for i, t in enumerate(inputs):
        if t.data.dtype != np.float64:
            raise TypeError(f"grad_check: input {i} must be float64, got {t.data.dtype}")
        if not t.requires_grad:
            raise ValueError(f"grad_check: input {i} does not require gradients")

    rng = np.random.default_rng(seed)
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)
    loss = tensor_sum(mul(out, Tensor(proj)))
    backward(loss)

    analytic = []
    for t in inputs:
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        analytic.append(np.array(g, dtype=np.float64, copy=True))
        if isinstance(t, Parameter):
            t.grad[...] = 0.0
        else:
            t.grad = None

    max_err = 0.0
    per_input = []
    checked = 0
    with no_grad():
        for t, a in zip(inputs, analytic):
            if not t.data.flags.c_contiguous:
                t.data = np.ascontiguousarray(t.data)
            flat = t.data.reshape(-1)
            n_coords = flat.size
            if max_coords_per_input is not None and n_coords > max_coords_per_input:
                coords = rng.choice(n_coords, size=max_coords_per_input, replace=False)
                coords = np.sort(coords)
            else:
                coords = np.arange(n_coords)
            a_flat = a.reshape(-1)
            worst = 0.0
            for idx in coords:
                orig = flat[idx]
                h = 1e-5 * max(1.0, abs(orig))

                def central(step):
                    flat[idx] = orig + step
                    s_plus = _projected_sum(fn, inputs, proj)
                    flat[idx] = orig - step
                    s_minus = _projected_sum(fn, inputs, proj)
                    flat[idx] = orig
                    return (s_plus - s_minus) / (2.0 * step)

                numeric = central(h)
                a_val = a_flat[idx]
                err = abs(a_val - numeric) / max(1.0, abs(a_val), abs(numeric))
                if err > tolerance:
                    # walk the step down until two successive estimates agree;
                    # only inter-numeric agreement promotes an estimate
                    previous = numeric
                    step = h
                    for _ in range(4):
                        step /= 10.0
                        estimate = central(step)
                        agree = abs(previous - estimate) / max(1.0, abs(previous), abs(estimate))
                        if agree <= max(tolerance / 10.0, 1e-9):
                            numeric = estimate
                            err = abs(a_val - numeric) / max(1.0, abs(a_val), abs(numeric))
                            break
                        previous = estimate
                if err > worst:
                    worst = err
                checked += 1
            per_input.append(worst)
            if worst > max_err:
                max_err = worst

    return GradCheckResult(
        max_rel_error=max_err,
        tolerance=tolerance,
        passed=max_err <= tolerance,
        coords_checked=checked,
        per_input=per_input,
    )
