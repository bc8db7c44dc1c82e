"""Uncertain single-input plant, reference model and the MRAC control law.

The plant is ``xdot = A x + b k_p (u + theta^T phi(x))`` with ``A``, ``k_p``
and ``theta`` unknown to the controller (only ``b`` and ``sign(k_p)`` are
known). The reference model ``xr_dot = A_r xr + b_r r`` defines the target
behaviour. Functions accept a single state ``(n,)`` or a batch ``(N, n)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import solve_lyapunov

MATCH_TOL = 1e-8


class NonFinite(ArithmeticError):
    pass


class Unmatchable(ValueError):
    pass


# order matters: the index is the builtin's code in the compiled kernel
BUILTINS = {
    "sin_x1": lambda x: np.sin(x[..., 0]),
    "cos_x1": lambda x: np.cos(x[..., 0]),
    "abs_x1_x2": lambda x: np.abs(x[..., 0]) * x[..., 1],
    "abs_x2_x2": lambda x: np.abs(x[..., 1]) * x[..., 1],
    "exp_neg_x1_sq": lambda x: np.exp(-x[..., 0] ** 2),
}
BUILTIN_CODES = {name: i for i, name in enumerate(BUILTINS)}


@dataclass(frozen=True)
class BasisDescriptor:
    """One entry of the uncertainty basis ``phi(x)``.

    Either a monomial (``exponents[j]`` is the power of ``x_j``) or one of the
    named functions in :data:`BUILTINS`.
    """

    exponents: tuple = ()
    builtin: str = ""

    def __post_init__(self):
        if bool(self.exponents) == bool(self.builtin):
            raise ValueError("give exactly one of exponents or builtin")
        if self.builtin and self.builtin not in BUILTINS:
            raise ValueError(f"unknown builtin basis {self.builtin!r}")
        if any(int(k) != k or k < 0 for k in self.exponents):
            raise ValueError("monomial exponents must be non-negative integers")

    @classmethod
    def monomial(cls, *exponents):
        return cls(exponents=tuple(int(k) for k in exponents))

    @classmethod
    def named(cls, name):
        return cls(builtin=name)

    def __call__(self, x):
        if self.builtin:
            return BUILTINS[self.builtin](x)
        if len(self.exponents) != x.shape[-1]:
            raise ValueError("monomial exponent count must equal the state dimension")
        out = np.ones(x.shape[:-1])
        for j, k in enumerate(self.exponents):
            if k:
                out = out * x[..., j] ** float(k)
        return out


@dataclass(frozen=True, eq=False)
class PlantModel:
    A: np.ndarray
    b: np.ndarray
    k_p: float
    theta: np.ndarray
    basis: tuple = ()

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        n = b.size
        if A.shape != (n, n):
            raise ValueError(f"A must be {n}x{n}")
        if len(self.basis) != theta.size:
            raise ValueError("theta and basis must have the same length")
        if self.k_p == 0:
            raise ValueError("k_p must be nonzero")
        if not b @ b > 0:
            raise ValueError("b must be nonzero")
        for arr in (A, b, theta):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "k_p", float(self.k_p))
        object.__setattr__(self, "basis", tuple(self.basis))
        exps = None
        if self.basis and all(d.exponents for d in self.basis):
            if any(len(d.exponents) != n for d in self.basis):
                raise ValueError("monomial exponent count must equal the state dimension")
            exps = np.array([d.exponents for d in self.basis], dtype=float)
            exps.setflags(write=False)
        object.__setattr__(self, "monomial_exponents", exps)

    def basis_tables(self):
        """``(exponents, codes)`` arrays describing the basis to the compiled kernel.

        ``codes[j]`` is -1 for a monomial with exponents ``exponents[j]``,
        otherwise the builtin's index in :data:`BUILTINS`.
        """
        exps = np.zeros((self.p, self.n))
        codes = np.full(self.p, -1, dtype=np.int64)
        for j, d in enumerate(self.basis):
            if d.builtin:
                codes[j] = BUILTIN_CODES[d.builtin]
            else:
                exps[j] = d.exponents
        return exps, codes

    @property
    def n(self):
        return self.b.size

    @property
    def p(self):
        return self.theta.size

    @property
    def q(self):
        return self.n + 1 + self.p

    @property
    def sign_kp(self):
        return 1.0 if self.k_p > 0 else -1.0

    @property
    def W_T(self):
        """True ``[A | b k_p | b k_p theta^T]``, shape ``(n, q)``."""
        bkp = self.b * self.k_p
        return np.hstack([self.A, bkp[:, None], np.outer(bkp, self.theta)])


@dataclass(frozen=True, eq=False)
class ReferenceModel:
    A_r: np.ndarray
    b_r: np.ndarray
    Q: np.ndarray
    P: np.ndarray = field(init=False)

    def __post_init__(self):
        A_r = np.array(self.A_r, dtype=float)
        b_r = np.array(self.b_r, dtype=float).reshape(-1)
        Q = np.array(self.Q, dtype=float)
        P = solve_lyapunov(A_r, Q)
        for arr in (A_r, b_r, Q, P):
            arr.setflags(write=False)
        object.__setattr__(self, "A_r", A_r)
        object.__setattr__(self, "b_r", b_r)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", P)


@dataclass(frozen=True)
class ControllerGains:
    k_x: np.ndarray
    k_r: float
    theta: np.ndarray

    def as_vector(self):
        return np.concatenate([np.asarray(self.k_x, float), [self.k_r], np.asarray(self.theta, float)])

    @classmethod
    def from_vector(cls, v, n):
        v = np.asarray(v, dtype=float)
        return cls(v[:n].copy(), float(v[n]), v[n + 1:].copy())

    def __sub__(self, other):
        return ControllerGains(
            np.asarray(self.k_x) - np.asarray(other.k_x),
            self.k_r - other.k_r,
            np.asarray(self.theta) - np.asarray(other.theta),
        )


def _phi_raw(model, x):
    # all-monomial bases: one vectorized pow over an (p, n) exponent table
    if model.monomial_exponents is not None:
        return np.prod(x[..., None, :] ** model.monomial_exponents, axis=-1)
    if not model.basis:
        return np.zeros(x.shape[:-1] + (0,))
    return np.stack([np.broadcast_to(f(x), x.shape[:-1]) for f in model.basis], axis=-1)


def eval_phi(model, x):
    """Evaluate ``phi(x)``; ``x`` may be ``(n,)`` or a batch ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        phi = _phi_raw(model, x)
    if not np.all(np.isfinite(phi)):
        raise NonFinite("basis evaluation produced a non-finite value")
    return phi


def control_input(gains, x, r, phi):
    """``u = k_x^T x + k_r r - theta^T phi``."""
    return (np.dot(gains.k_x, x) + gains.k_r * r - np.dot(gains.theta, phi)).item()


def plant_deriv(model, x, u):
    x = np.asarray(x, dtype=float)
    return model.A @ x + model.b * model.k_p * (u + model.theta @ eval_phi(model, x))


def reference_deriv(ref, x_r, r):
    return ref.A_r @ np.asarray(x_r, dtype=float) + ref.b_r * r


def matching_gains(model, ref):
    """Ideal gains solving ``A + b k_p k_x^T = A_r`` and ``b k_p k_r = b_r``.

    Both conditions are solved in the least-squares sense along ``b k_p`` and
    then checked; ``theta`` is the true uncertainty coefficient vector.
    """
    bkp = model.b * model.k_p
    denom = bkp @ bkp
    k_x = (ref.A_r - model.A).T @ bkp / denom
    k_r = float(bkp @ ref.b_r / denom)
    res_x = np.max(np.abs(model.A + np.outer(bkp, k_x) - ref.A_r))
    res_r = np.max(np.abs(bkp * k_r - ref.b_r))
    if res_x > MATCH_TOL or res_r > MATCH_TOL:
        raise Unmatchable(
            f"matching residuals {res_x:.3e} (A_r) and {res_r:.3e} (b_r) exceed {MATCH_TOL}"
        )
    return ControllerGains(k_x, k_r, model.theta.copy())


def stacked_regressor(x, u, phi):
    """``[x, u, phi]`` along the last axis."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.concatenate([x, u[..., None], np.asarray(phi, dtype=float)], axis=-1)


def tracking_error_deriv(ref, model, gains, ideal, e, x, r, phi):
    """Error dynamics written in terms of the gain errors.

    Used as an independent check on ``plant_deriv - reference_deriv``.
    """
    err = gains - ideal
    bkp = model.b * model.k_p
    scalar = np.dot(err.k_x, x) + err.k_r * r - np.dot(err.theta, phi)
    return ref.A_r @ np.asarray(e, dtype=float) + bkp * scalar
