"""
Autograd basics
===============

The package ships a small reverse-mode autograd engine built on numpy.
This script builds a few expressions, checks their gradients against
central finite differences, and fits a toy convolution by gradient
descent, printing what happens at each step.
"""

import numpy as np

from pansharp.autograd import (
    ConvSpec,
    Tensor,
    backward,
    conv2d,
    l1_loss,
    relu,
    tanh,
)
from pansharp.gradcheck import grad_check
from pansharp.optim import Parameter, adam_step

rng = np.random.default_rng(0)

# --- tensors and the tape ----------------------------------------------------
# A Tensor wraps a numpy array. Setting requires_grad=True puts it on the
# tape; backward() then fills .grad for every such leaf.

x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
y = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
loss = l1_loss(tanh(x), y)
backward(loss)
print("l1(tanh(x), y) =", f"{loss.item():.4f}")
print("dloss/dx has shape", x.grad.shape, "and mean abs", f"{np.abs(x.grad).mean():.4f}")

# --- checking a gradient numerically ----------------------------------------
# grad_check perturbs each input coordinate and compares the analytic
# gradient with a central difference. f64 inputs keep the comparison sharp.

x64 = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
y64 = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
result = grad_check(lambda a, b: l1_loss(tanh(a), b), [x64, y64])
print("grad check passed:", result.passed, "max rel err", f"{result.max_rel_error:.2e}")

# --- fitting a convolution ---------------------------------------------------
# Recover a known 3x3 blur kernel from input/output pairs. Parameters are
# Tensors with Adam state; adam_step applies one update and clears grads.

true_kernel = np.zeros((1, 1, 3, 3))
true_kernel[0, 0] = [[0.05, 0.1, 0.05], [0.1, 0.4, 0.1], [0.05, 0.1, 0.05]]
spec = ConvSpec(1, 1, 3, 3, stride=1, pad_h=1, pad_w=1, has_bias=False)

images = Tensor(rng.standard_normal((8, 1, 12, 12)))
target = conv2d(images, spec, Tensor(true_kernel), None)

weight = Parameter(rng.standard_normal((1, 1, 3, 3)) * 0.1)
for step in range(300):
    pred = conv2d(images, spec, weight, None)
    fit = l1_loss(pred, target)
    backward(fit)
    adam_step([weight], lr=3e-3)
    if step % 60 == 0 or step == 299:
        print(f"step {step:3d}  l1 {fit.item():.5f}")

err = np.abs(weight.data - true_kernel).max()
print("recovered kernel, max abs error", f"{err:.4f}")

# relu is here too; its kink is exactly why grad_check refines suspicious
# coordinates with smaller steps before declaring a failure
z = Tensor(np.linspace(-1, 1, 5), requires_grad=True)
backward(l1_loss(relu(z), Tensor(np.zeros(5))))
print("d l1(relu(z), 0) / dz =", z.grad)
