"""Online parameter extraction from finitely exciting data.

The plant is linear in its parameters, ``xdot = W^T varphi`` with
``W^T = [A | b k_p | b k_p theta^T]``. Filtering both sides with
``f / (s + f)`` removes the unmeasured derivative: ``y_f = W^T varphi_f``.
:class:`MemoryBuilder` streams ``(varphi_f, y_f)`` pairs through modified
Gram-Schmidt, keeping an orthonormal basis ``Phi_b`` and the matching
``Y_b = W^T Phi_b``. Once ``q`` independent directions have been seen,
``Y_m = Y_b Phi_b^T`` equals ``W^T`` regardless of how weak the excitation was.
"""

from dataclasses import dataclass
import enum
import math

import numpy as np

from . import linalg

ORTHO_TOL = 1e-9
ETA_TOL = 1e-6
EFFECTIVENESS_TOL = 1e-9
REORTH_FACTOR = 1e3 * np.finfo(float).eps


class DegenerateEffectiveness(ValueError):
    pass


class AlreadyComplete(RuntimeError):
    pass


class Outcome(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_LOW_NORM = "rejected_low_norm"
    REJECTED_DEPENDENT = "rejected_dependent"


@dataclass
class FilterState:
    f: float
    x_f: np.ndarray
    phi_f: np.ndarray
    x0: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError("f must be positive")

    @classmethod
    def start(cls, f, x0, q, t0=0.0):
        x0 = np.asarray(x0, dtype=float)
        return cls(f, np.zeros_like(x0), np.zeros(q), x0.copy(), t0)


def filter_derivs(fs, x, phi):
    """Derivatives of the first-order filters driven by ``x`` and ``varphi``."""
    return fs.f * (np.asarray(x) - fs.x_f), fs.f * (np.asarray(phi) - fs.phi_f)


def filtered_output(fs, x, t):
    """Filtered state derivative ``y_f``, reconstructed without differentiating ``x``."""
    f = fs.f
    return f * np.asarray(x) - math.exp(-f * (t - fs.t0)) * f * fs.x0 - f * fs.x_f


class MemoryBuilder:
    """Streaming modified Gram-Schmidt memory.

    Parameters
    ----------
    n : int
        State dimension (rows of ``Y_b``).
    q : int
        Regressor dimension ``n + 1 + p``.
    eps1 : float
        Minimum ``||varphi_f||`` for a sample to be considered.
    eps2 : float
        Minimum MGS residual, relative to ``||varphi_f||``, for acceptance.
    """

    def __init__(self, n, q, eps1=1.0, eps2=0.01):
        if eps1 < 0 or eps2 <= 0:
            raise ValueError("eps1 must be >= 0 and eps2 > 0")
        self.n = n
        self.q = q
        self.eps1 = eps1
        self.eps2 = eps2
        self.Phi_b = np.zeros((q, q))
        self.Y_b = np.zeros((n, q))
        self.i = 0
        self.t_q = None

    @property
    def complete(self):
        return self.i == self.q

    def _project_out(self, v, y):
        for l in range(self.i):
            c = self.Phi_b[:, l] @ v
            v = v - c * self.Phi_b[:, l]
            y = y - c * self.Y_b[:, l]
        return v, y

    def try_insert(self, phi_f, y_f, t=None):
        """Offer one filtered sample; returns an :class:`Outcome`.

        ``t`` is recorded as ``t_q`` when this sample completes the memory.
        """
        if self.complete:
            raise AlreadyComplete("memory already holds q independent columns")
        v = np.asarray(phi_f, dtype=float)
        norm = math.sqrt(v @ v)
        if not norm > self.eps1:
            return Outcome.REJECTED_LOW_NORM
        v, y = self._project_out(v, np.asarray(y_f, dtype=float))
        res = math.sqrt(v @ v)
        if res < REORTH_FACTOR * norm:
            v, y = self._project_out(v, y)
            res = math.sqrt(v @ v)
        if not res > norm * self.eps2:
            return Outcome.REJECTED_DEPENDENT
        self.Phi_b[:, self.i] = v / res
        self.Y_b[:, self.i] = y / res
        self.i += 1
        if self.complete:
            self.t_q = t
        return Outcome.ACCEPTED

    def output(self):
        return memory_output(self)


@dataclass(frozen=True)
class MemoryOutput:
    Phi_m: np.ndarray
    Y_m: np.ndarray
    eta: float


def memory_output(builder):
    """Snapshot ``(Phi_m, Y_m, eta)``; all zeros until the memory is complete.

    On completion ``eta`` is clamped to exactly 1 after checking
    ``|det(Phi_m) - 1| <= ETA_TOL``.
    """
    q, n = builder.q, builder.n
    if not builder.complete:
        return MemoryOutput(np.zeros((q, q)), np.zeros((n, q)), 0.0)
    Phi_m = builder.Phi_b @ builder.Phi_b.T
    Y_m = builder.Y_b @ builder.Phi_b.T
    eta = linalg.det(Phi_m)
    if abs(eta - 1.0) > ETA_TOL:
        raise ArithmeticError(f"det(Phi_m) = {eta!r}; memory lost orthogonality")
    return MemoryOutput(Phi_m, Y_m, 1.0)


@dataclass(frozen=True)
class ExtractedParams:
    A_hat: np.ndarray
    bkp_hat: np.ndarray
    bkp_theta_hat: np.ndarray
    theta_hat: np.ndarray


def extract_params(Y_m, n, p):
    """Split ``Y_m`` into ``A``, ``b k_p``, ``b k_p theta^T`` and recover ``theta``."""
    Y_m = np.asarray(Y_m, dtype=float)
    if Y_m.shape != (n, n + 1 + p):
        raise ValueError(f"Y_m must have shape ({n}, {n + 1 + p})")
    A_hat = Y_m[:, :n].copy()
    bkp = Y_m[:, n].copy()
    bkp_theta = Y_m[:, n + 1:].copy()
    nrm2 = bkp @ bkp
    if math.sqrt(nrm2) < EFFECTIVENESS_TOL:
        raise DegenerateEffectiveness("control-effectiveness column is zero")
    theta = bkp @ bkp_theta / nrm2
    return ExtractedParams(A_hat, bkp, bkp_theta, theta)


def excitation_level(samples):
    """Spectral norm of the inverse of the stacked ``q`` regressor samples."""
    M = np.column_stack([np.asarray(s, dtype=float) for s in samples])
    if M.shape[0] != M.shape[1]:
        raise ValueError("need exactly q samples of dimension q")
    lo, _ = linalg.sym_eig_bounds(M.T @ M)
    scale = max(np.max(np.abs(M)), 1.0) ** 2
    if lo <= linalg.PIVOT_TOL * scale:
        raise linalg.Singular("stacked regressor samples are linearly dependent")
    return 1.0 / math.sqrt(lo)
