"""Shared synthetic fixtures for the test-suite."""

import numpy as np


def blobs(seed, n_blobs=8, per_blob=50, radius=5.0, sigma=0.3):
    """2-D Gaussian blobs with centres spread evenly on a circle."""
    rng = np.random.default_rng(seed)
    ang = 2 * np.pi * np.arange(n_blobs) / n_blobs
    centres = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    labels = np.repeat(np.arange(n_blobs), per_blob)
    X = centres[labels] + sigma * rng.normal(size=(len(labels), 2))
    return X, labels, centres


def noisy_prior(labels, n_classes, accuracy, seed, peak=0.5):
    """Softmax-like rows whose argmax is correct with the given probability."""
    rng = np.random.default_rng(seed)
    n = len(labels)
    guess = labels.copy()
    wrong = rng.random(n) >= accuracy
    shift = rng.integers(1, n_classes, size=n)
    guess[wrong] = (labels[wrong] + shift[wrong]) % n_classes
    P = np.full((n, n_classes), (1 - peak) / (n_classes - 1))
    P[np.arange(n), guess] = peak
    return P


def bayes_accuracy(X, labels, centres):
    d = ((X[:, None, :] - centres[None]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d, axis=1) == labels))


def loss_objectives(seed=0, n=16, d=10, k=8):
    """Every training loss as ``loss_fn(model) -> (loss, grads)`` on one seeded instance.

    Returns ``(model, {name: loss_fn})`` for an 8-class, 16-sample problem.
    """
    from bba.dmg import dmg_objective, kd_loss, sl_loss
    from bba.nn import Model, softmax, softmax_backward
    from bba.polarity import PolarityMap
    from bba.tma import align_loss, polarized_im_loss, polarized_sl_loss, tma_objective

    rng = np.random.default_rng(seed)
    model = Model([d, 12, 9, k], seed=seed)
    x = rng.normal(size=(n, d))
    xm = x * (rng.random(size=(n, d)) > 0.3)
    hard = rng.integers(0, k, n)
    soft = rng.dirichlet(np.ones(k), size=n)
    bank = rng.dirichlet(np.ones(k) * 0.5, size=n)
    pmap = PolarityMap.halves(k)
    pol = rng.integers(0, 2, n)

    def two_view(loss):
        def fn(m):
            _, zx, ax = m.forward(x, cache=True)
            _, zm, am = m.forward(xm, cache=True)
            px, pm = softmax(zx), softmax(zm)
            value, (gx, gm) = loss(px, pm)
            gx_ = m.backward(ax, softmax_backward(px, gx))
            gm_ = m.backward(am, softmax_backward(pm, gm))
            return value, {key: gx_[key] + gm_[key] for key in gx_}
        return fn

    def one_view(loss):
        def fn(m):
            _, z, acts = m.forward(x, cache=True)
            p = softmax(z)
            value, g = loss(p)
            return value, m.backward(acts, softmax_backward(p, g))
        return fn

    fns = {
        "L_sl": two_view(lambda px, pm: sl_loss(px, pm, hard, with_grad=True)),
        "L_kd": two_view(lambda px, pm: kd_loss(px, pm, soft, with_grad=True)),
        "L_dmg": lambda m: dmg_objective(m, x, xm, hard, soft, 0.9)[:2],
        "L_align": one_view(lambda p: align_loss(bank, p, with_grad=True)),
        "L_align_reverse": one_view(lambda p: align_loss(bank, p, with_grad=True, reverse=True)),
        "L_im_pol": one_view(lambda p: polarized_im_loss(p, pmap, with_grad=True)),
        "L_sl_pol": one_view(lambda p: polarized_sl_loss(p, hard, pmap, pol, with_grad=True)),
        "L_tma": lambda m: tma_objective(m, x, bank, pmap, 1.0, 0.3)[:2],
    }
    return model, fns
