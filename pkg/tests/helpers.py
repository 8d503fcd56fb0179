"""Shared test oracles: central finite differences and gradient comparison."""

from __future__ import annotations

import numpy as np


def finite_difference(f, arrays, which, h=1e-5):
    """Central-difference gradient of scalar f(arrays) w.r.t. arrays[which].

    Independent of the autograd tape: evaluates f twice per entry on
    perturbed copies.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    target = arrays[which]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = target[idx]
        target[idx] = orig + h
        f_plus = float(f(*arrays))
        target[idx] = orig - h
        f_minus = float(f(*arrays))
        target[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
        it.iternext()
    return grad


def max_rel_error(analytic, numeric, floor=1e-6):
    """max over entries of |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def assert_grads_close(analytic, numeric, rtol=1e-4, msg=""):
    err = max_rel_error(analytic, numeric)
    assert err < rtol, f"gradient mismatch ({msg}): max rel error {err:.3e} >= {rtol}"
