"""Check the hand-derived gradients against central differences.

Every layer returns (output, backward closure) and accumulates parameter
gradients in place. grad_check perturbs a few coordinates of each tensor
and compares the analytic gradient with a central difference of the loss.
"""

import numpy as np

from dpno import DPNOConfig, grad_check, model_init
from dpno.layers import (
    ParamTensor,
    SpectralConvLayer,
    conv3x3,
    gelu,
    mse_loss,
    spectral_conv,
)


def main():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((2, 3, 8, 8))

    print("== single layers ==")
    k = ParamTensor(rng.standard_normal((4, 3, 3, 3)) / 9.0, "k")
    b = ParamTensor(rng.standard_normal(4), "b")
    t = rng.standard_normal((2, 4, 8, 8))

    def conv_loss():
        for p in (k, b):
            p.grad[...] = 0
        y, back = conv3x3(x, k, b)
        loss, lb = mse_loss(y, t)
        gx = back(lb())
        return loss, [gx, k.grad.copy(), b.grad.copy()]

    dev = grad_check(conv_loss, [x, k.value, b.value], rng=rng)
    print(f"conv3x3        worst relative deviation {dev:.2e}")

    tg = rng.standard_normal(x.shape)

    def act_loss():
        y, back = gelu(x.copy())
        loss, lb = mse_loss(y, tg)
        return loss, [back(lb())]

    dev = grad_check(act_loss, [x], rng=rng)
    print(f"gelu           worst relative deviation {dev:.2e}")

    sc = SpectralConvLayer.init(3, 3, 2, 2, rng, "sc")
    ts = rng.standard_normal(x.shape)

    def spec_loss():
        sc.weights.grad[...] = 0
        y, back = spectral_conv(x, sc)
        loss, lb = mse_loss(y, ts)
        gx = back(lb())
        return loss, [gx, sc.weights.grad.copy()]

    # complex weights are perturbed component-wise through a float view
    dev = grad_check(spec_loss, [x, sc.weights.value], rng=rng)
    print(f"spectral_conv  worst relative deviation {dev:.2e}")

    print("\n== full model, both block variants ==")
    for variant in ("parallel", "serial"):
        cfg = DPNOConfig(in_channels=2, out_channels=1, width=8, levels=1,
                         blocks_per_level=1, modes_a=(4, 4), modes_b=(2, 2))
        model = model_init(cfg, variant)
        xm = rng.standard_normal((1, 2, 16, 16))
        tm = rng.standard_normal((1, 1, 16, 16))
        picked = rng.choice(len(model.params), size=6, replace=False)

        def full_loss():
            model.zero_grads()
            y, back = model.forward(xm)
            loss, lb = mse_loss(y, tm)
            back(lb())
            return loss, [model.params[i].grad.copy() for i in picked]

        dev = grad_check(full_loss, [model.params[i].value for i in picked],
                         rng=rng, samples_per_tensor=3)
        print(f"{variant:9s} end-to-end worst relative deviation {dev:.2e}")


if __name__ == "__main__":
    main()
