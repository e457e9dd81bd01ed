"""Central finite-difference verification of analytic gradients.

Checks run in double precision with h = 1e-4 and compare by normwise
relative error; anything above 1e-4 is a failure.
"""

import numpy as np

DEFAULT_H = 1e-4
DEFAULT_TOL = 1e-4

# Below this norm a gradient is indistinguishable from central-difference
# noise (~eps * |loss| / h). If both sides sit under it, they agree on "zero"
# and the relative error is taken as 0 rather than 0/0.
ZERO_NORM = 1e-7


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Normwise relative error between two gradient tensors."""
    na = np.linalg.norm(analytic)
    nn = np.linalg.norm(numeric)
    if na < ZERO_NORM and nn < ZERO_NORM:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / max(na, nn))


def numeric_grad(loss_fn, array: np.ndarray, h: float = DEFAULT_H) -> np.ndarray:
    """Central differences of loss_fn with respect to `array` (perturbed in place)."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_fn()
        flat[i] = orig - h
        lm = loss_fn()
        flat[i] = orig
        gflat[i] = (lp - lm) / (2.0 * h)
    return grad


def check_gradients(loss_and_backward, loss_fn, arrays: dict,
                    h: float = DEFAULT_H) -> dict:
    """Compare analytic and numeric gradients for a set of named arrays.

    Args:
        loss_and_backward: callable running forward + backward once and
            returning {name: analytic_grad} for the same names as `arrays`.
        loss_fn: callable returning the scalar loss from a plain forward pass.
        arrays: {name: ndarray} checked by in-place perturbation.

    Returns:
        {name: relative error}.
    """
    analytic = loss_and_backward()
    errors = {}
    for name, arr in arrays.items():
        numeric = numeric_grad(loss_fn, arr, h=h)
        errors[name] = rel_error(np.asarray(analytic[name], dtype=np.float64), numeric)
    return errors
