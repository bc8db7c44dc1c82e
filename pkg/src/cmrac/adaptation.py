"""Adaptation laws for the controller gains.

Two laws are provided. :func:`gradient_law` is the classical Lyapunov-based
update driven by the tracking error only; it guarantees tracking but not
parameter convergence. :func:`combined_law` adds a memory term built from the
extracted plant parameters, switched on by ``eta`` once the memory is
complete, which makes the gain errors decay exponentially.

All array arguments may carry leading batch dimensions.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class AdaptationInputs:
    e: np.ndarray
    x: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    P: np.ndarray
    b: np.ndarray
    sign_kp: float
    eta: np.ndarray = 0.0
    E1: np.ndarray = None
    E2: np.ndarray = None
    E3: np.ndarray = None
    gain: float = 1.0
    Pb: np.ndarray = None

    def __post_init__(self):
        if self.Pb is None:
            self.Pb = np.asarray(self.P, dtype=float) @ np.asarray(self.b, dtype=float)


def _selectors(Y_m, n):
    Y_m = np.asarray(Y_m, dtype=float)
    return Y_m[..., :, :n], Y_m[..., :, n], Y_m[..., :, n + 1:]


def mismatch_errors(Y_m, A_r, b_r, k_x, k_r, theta):
    """Matching-condition residuals of the current gains under ``Y_m``.

    ``E1 = A_r - A_hat - bkp_hat k_x^T``, ``E2 = b_r - bkp_hat k_r`` and
    ``E3 = bkp_theta_hat - bkp_hat theta^T``, where the hatted blocks are
    column slices of ``Y_m``.
    """
    k_x = np.asarray(k_x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    k_r = np.asarray(k_r, dtype=float)
    Y_A, Y_b, Y_th = _selectors(Y_m, k_x.shape[-1])
    E1 = A_r - Y_A - Y_b[..., :, None] * k_x[..., None, :]
    E2 = b_r - Y_b * k_r[..., None]
    E3 = Y_th - Y_b[..., :, None] * theta[..., None, :]
    return E1, E2, E3


def gradient_law(inp):
    """Returns ``(k_x_dot, k_r_dot, theta_dot)`` of the gradient update."""
    w = np.add.reduce(np.asarray(inp.e) * inp.Pb, axis=-1) * (inp.sign_kp * inp.gain)
    wc = np.expand_dims(w, -1)
    return -np.asarray(inp.x) * wc, -np.asarray(inp.r, dtype=float) * w, np.asarray(inp.phi) * wc


def combined_law(inp):
    """Gradient update plus ``eta``-switched memory terms ``eta E^T b k_p'``.

    With ``eta == 0`` everywhere the gradient result is returned unchanged.
    """
    kx_dot, kr_dot, th_dot = gradient_law(inp)
    eta = np.asarray(inp.eta, dtype=float)
    if not eta.any():
        return kx_dot, kr_dot, th_dot
    s = inp.sign_kp * inp.gain
    b = inp.b
    m1 = (inp.E1 * b[:, None]).sum(axis=-2)
    m2 = (inp.E2 * b).sum(axis=-1)
    m3 = (inp.E3 * b[:, None]).sum(axis=-2)
    # rows with eta == 0 keep the exact gradient value
    on = eta != 0
    kx_dot = np.where(on[..., None], kx_dot + eta[..., None] * m1 * s, kx_dot)
    kr_dot = np.where(on, kr_dot + eta * m2 * s, kr_dot)
    th_dot = np.where(on[..., None], th_dot + eta[..., None] * m3 * s, th_dot)
    return kx_dot, kr_dot, th_dot


LAWS = {"gradient": gradient_law, "combined": combined_law}
