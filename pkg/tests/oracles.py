"""Independent reference computations the package is checked against."""

import itertools
import math

import numpy as np

from nblend.models.mlp import init_params, loss_and_grads


def gradient_check(seed: int = 0, sizes=(3, 4, 3), eps: float = 1e-6) -> float:
    """Largest relative error between analytic and central-difference MLP gradients
    on a fixed 3-sample toy problem."""
    rng = np.random.default_rng(seed)
    params = init_params(list(sizes), rng)
    X = rng.normal(size=(3, sizes[0]))
    Y = np.eye(sizes[-1])[[0, 1, 2]]
    _, grads = loss_and_grads(params, X, Y, l2=0.01)
    worst = 0.0
    for li, (W, b) in enumerate(params):
        for arr, g in ((W, grads[li][0]), (b, grads[li][1])):
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + eps
                up, _ = loss_and_grads(params, X, Y, l2=0.01)
                arr[idx] = old - eps
                down, _ = loss_and_grads(params, X, Y, l2=0.01)
                arr[idx] = old
                num = (up - down) / (2 * eps)
                denom = max(abs(num), abs(g[idx]), 1e-8)
                worst = max(worst, abs(num - g[idx]) / denom)
    return worst


def brute_em_probs(u, m, epsilon, delta_u=2.0):
    """Exponential mechanism over m-subsets by direct summation, in plain Python."""
    subsets = list(itertools.combinations(range(len(u)), m))
    w = [math.exp(epsilon * sum(u[i] for i in s) / (2 * delta_u)) for s in subsets]
    z = sum(w)
    return {s: wi / z for s, wi in zip(subsets, w)}


def brute_plackett_luce(u, m, epsilon, delta_u=2.0):
    """Set marginal of sequential softmax draws without replacement, summed over orders."""
    phi = [epsilon * x / (2 * delta_u) for x in u]
    out = {}
    for order in itertools.permutations(range(len(u)), m):
        p, left = 1.0, list(range(len(u)))
        for i in order:
            p *= math.exp(phi[i]) / sum(math.exp(phi[j]) for j in left)
            left.remove(i)
        key = tuple(sorted(order))
        out[key] = out.get(key, 0.0) + p
    return out


def multinomial_3sigma(counts, probs, n):
    """True when every cell's count sits within 3 binomial standard deviations."""
    counts = np.asarray(counts, float)
    probs = np.asarray(probs, float)
    sd = np.sqrt(n * probs * (1 - probs))
    return bool(np.all(np.abs(counts - n * probs) <= 3 * sd + 1e-12))
