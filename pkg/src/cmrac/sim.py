"""Closed-loop simulation, error metrics and the exponential-rate bound.

The augmented state of one episode is the flat vector
``[x, x_r, x_f, varphi_f, k_x, k_r, theta]``, integrated with fixed-step
classical RK4 by the compiled loop in :mod:`cmrac._kernel`.

The memory builder is a discrete-event process: it is offered the filtered
sample once per completed step, never inside RK4 stages.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernel, adaptation, excitation, linalg
from .plant import ControllerGains, matching_gains

THRESHOLD_FRACTION = 0.02


class Diverged(ArithmeticError):
    pass


class NonFinite(ArithmeticError):
    pass


class NoExcitation(ValueError):
    pass


@dataclass(frozen=True)
class Command:
    """Reference command ``r(t) = level * shape(t)``.

    ``kind`` is ``"constant"``, ``"step"`` (0 before ``t_step``, 1 after) or
    ``"sine"`` (``sin(2 pi frequency t)``).
    """

    kind: str = "constant"
    level: float = 2.0
    t_step: float = 0.0
    frequency: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "step", "sine"):
            raise ValueError(f"unknown command kind {self.kind!r}")

    def shape(self, t):
        if self.kind == "constant":
            return 1.0
        if self.kind == "step":
            return 1.0 if t >= self.t_step else 0.0
        return math.sin(2.0 * math.pi * self.frequency * t)

    def __call__(self, t):
        return self.level * self.shape(t)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 40.0
    f: float = 1.0
    eps1: float = 1.0
    eps2: float = 0.01
    law: str = "combined"
    command: Command = field(default_factory=Command)
    x0: tuple = None
    xr0: tuple = None
    estimate_error: float = 0.5
    gains0: tuple = None
    adaptation_gain: float = 1.0
    guard: float = 1e6
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.f > 0:
            raise ValueError("f must be positive")
        if self.law not in adaptation.LAWS:
            raise ValueError(f"law must be one of {sorted(adaptation.LAWS)}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not self.guard > 0:
            raise ValueError("guard must be positive")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class InitialCondition:
    """Per-episode quantities that vary across a Monte Carlo batch."""

    x0: np.ndarray
    xr0: np.ndarray
    level: float
    gains0: np.ndarray


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    x_r: np.ndarray
    gains: np.ndarray
    u: np.ndarray
    e_norm: np.ndarray
    kx_err_norm: np.ndarray
    kr_err: np.ndarray
    theta_err_norm: np.ndarray
    chi_norm: np.ndarray
    V: np.ndarray
    eta: np.ndarray
    t_q: float = None
    Y_m: np.ndarray = None
    Phi_b: np.ndarray = None
    diverged_at: float = None

    CSV_METRICS = ("u", "e_norm", "kx_err_norm", "kr_err", "theta_err_norm", "chi_norm", "V", "eta")

    def csv_header(self):
        n = self.x.shape[1]
        cols = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"xr{i + 1}" for i in range(n)]
        return cols + list(self.CSV_METRICS)

    def csv_rows(self):
        cols = [self.t[:, None], self.x, self.x_r] + [getattr(self, m)[:, None] for m in self.CSV_METRICS]
        return np.hstack(cols)


def rk4_step(z, rhs, t, dt):
    """One classical Runge-Kutta step of ``zdot = rhs(t, z)``; returns the new ``z``."""
    k1 = rhs(t, z)
    k2 = rhs(t + 0.5 * dt, z + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, z + 0.5 * dt * k2)
    k4 = rhs(t + dt, z + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NonFinite("non-finite derivative in RK4 stage")
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_COMMAND_KINDS = {"constant": _kernel.CONSTANT, "step": _kernel.STEP, "sine": _kernel.SINE}


def _kernel_params(cfg, model, ref, level):
    exps, codes = model.basis_tables()
    return (
        model.A, model.b * model.k_p, model.theta, exps, codes,
        ref.A_r, ref.b_r, ref.P @ model.b, model.b,
        model.sign_kp * cfg.adaptation_gain, float(cfg.f),
        float(level), _COMMAND_KINDS[cfg.command.kind],
        float(cfg.command.t_step), float(cfg.command.frequency),
        cfg.law == "combined",
    )


def state_layout(n, p):
    """Slices of the augmented state vector ``[x, x_r, x_f, varphi_f, k_x, k_r, theta]``."""
    q = n + 1 + p
    return {
        "x": slice(0, n),
        "x_r": slice(n, 2 * n),
        "x_f": slice(2 * n, 3 * n),
        "phi_f": slice(3 * n, 3 * n + q),
        "gains": slice(3 * n + q, 3 * n + 2 * q),
    }


def augmented_rhs(cfg, model, ref, init, eta=0.0, Y_m=None):
    """Closed-loop derivative ``f(t, z)`` for one episode, as a plain callable.

    Useful with :func:`rk4_step` and for checking the kernel against the
    per-operation functions of :mod:`cmrac.plant` and :mod:`cmrac.adaptation`.
    """
    n, p = model.n, model.p
    prm = _kernel_params(cfg, model, ref, init.level)
    Y_m = np.zeros((n, n + 1 + p)) if Y_m is None else np.asarray(Y_m, dtype=float)
    phi = np.empty(p)

    def f(t, z):
        dz = np.empty_like(z)
        _kernel.rhs(t, z, dz, n, p, prm, float(eta), Y_m, phi)
        return dz

    return f


def _run(cfg, model, ref, init, raise_on_divergence):
    n, p, q = model.n, model.p, model.q
    lay = state_layout(n, p)
    ideal = matching_gains(model, ref).as_vector()
    prm = _kernel_params(cfg, model, ref, init.level)
    z = np.zeros(3 * n + 2 * q)
    x0 = np.asarray(init.x0, dtype=float)
    z[lay["x"]] = x0
    z[lay["x_r"]] = init.xr0
    z[lay["gains"]] = init.gains0

    steps, every, dt = cfg.n_steps, cfg.record_every, cfg.dt
    n_rec = steps // every + 1
    rec_z = np.zeros((n_rec, z.size))
    rec_m = np.zeros((n_rec, _kernel.N_METRICS))
    rec_eta = np.zeros(n_rec)

    builder = excitation.MemoryBuilder(n, q, cfg.eps1, cfg.eps2)
    fs = excitation.FilterState.start(cfg.f, x0, q)
    eta, Y_m = 0.0, np.zeros((n, q))
    k, diverged_at = 0, None
    while True:
        status, k = _kernel.advance(
            z, k, steps, dt, every, n, p, prm, eta, Y_m, ideal, ref.P, abs(model.k_p),
            not builder.complete, cfg.eps1, cfg.guard, True, rec_z, rec_m, rec_eta,
        )
        if status == _kernel.DONE:
            break
        if status == _kernel.DIVERGED:
            t_bad = (k + 1) * dt
            if raise_on_divergence:
                raise Diverged(f"state norm exceeded {cfg.guard:g} at t={t_bad:.6g}")
            diverged_at = t_bad
            break
        t = k * dt
        fs.x_f = z[lay["x_f"]]
        y_f = excitation.filtered_output(fs, z[lay["x"]], t)
        builder.try_insert(z[lay["phi_f"]], y_f, t)
        if builder.complete:
            out = builder.output()
            eta, Y_m = out.eta, out.Y_m

    last = n_rec if diverged_at is None else k // every + 1
    s = slice(0, last)
    m = rec_m[s]
    return Trajectory(
        t=(np.arange(last) * every) * dt,
        x=rec_z[s, lay["x"]].copy(),
        x_r=rec_z[s, lay["x_r"]].copy(),
        gains=rec_z[s, lay["gains"]].copy(),
        u=m[:, _kernel.U].copy(),
        e_norm=m[:, _kernel.E_NORM].copy(),
        kx_err_norm=m[:, _kernel.KX_ERR].copy(),
        kr_err=m[:, _kernel.KR_ERR].copy(),
        theta_err_norm=m[:, _kernel.TH_ERR].copy(),
        chi_norm=m[:, _kernel.CHI].copy(),
        V=m[:, _kernel.V].copy(),
        eta=rec_eta[s].copy(),
        t_q=builder.t_q,
        Y_m=Y_m if builder.complete else None,
        Phi_b=builder.Phi_b.copy(),
        diverged_at=diverged_at,
    )


def initial_condition(cfg, model, ref, level=None, estimate_error=None, x0=None):
    """Build one episode's initial condition from ``cfg`` and optional overrides."""
    n = model.n
    ideal = matching_gains(model, ref).as_vector()
    frac = cfg.estimate_error if estimate_error is None else estimate_error
    if cfg.gains0 is not None and estimate_error is None:
        gains0 = np.asarray(cfg.gains0, dtype=float)
    else:
        gains0 = ideal * (1.0 + frac)
    if x0 is None:
        x0 = np.zeros(n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    xr0 = np.zeros(n) if cfg.xr0 is None else np.asarray(cfg.xr0, dtype=float)
    return InitialCondition(
        x0=np.asarray(x0, dtype=float), xr0=xr0,
        level=cfg.command.level if level is None else float(level),
        gains0=gains0,
    )


def run_episode(cfg, model, ref, init=None, raise_on_divergence=True):
    """Integrate one closed-loop episode and return its :class:`Trajectory`.

    Raises
    ------
    Diverged
        If ``||x||`` exceeds ``cfg.guard`` or the state becomes non-finite.
        With ``raise_on_divergence=False`` the trajectory is truncated instead
        and ``diverged_at`` is set.
    """
    if init is None:
        init = initial_condition(cfg, model, ref)
    return _run(cfg, model, ref, init, raise_on_divergence)


def combined_error_norm(e, gains, ideal):
    """``||chi||`` for ``chi = [e, k_x - k_x*, k_r - k_r*, theta - theta*]``."""
    d = np.asarray(gains.as_vector() if isinstance(gains, ControllerGains) else gains) - (
        ideal.as_vector() if isinstance(ideal, ControllerGains) else np.asarray(ideal)
    )
    return float(np.sqrt(np.sum(np.square(e)) + d @ d))


def lyapunov_value(e, gains, ideal, P, k_p):
    e = np.asarray(e, dtype=float)
    d = gains.as_vector() - ideal.as_vector()
    return float(e @ P @ e + abs(k_p) * (d @ d))


def theoretical_rate(Q, P, b, k_p):
    """Guaranteed decay constants ``(kappa_bar, kappa, alpha)`` after memory completion.

    ``V`` decays at least like ``exp(-kappa_bar t)``, hence
    ``||chi(t)|| <= alpha exp(-kappa (t - t_q)) ||chi(t0)||``.
    """
    q_min, _ = linalg.sym_eig_bounds(Q)
    p_min, p_max = linalg.sym_eig_bounds(P)
    b = np.asarray(b, dtype=float)
    akp = abs(k_p)
    upper = max(p_max, akp)
    lower = min(p_min, akp)
    kappa_bar = min(q_min, 2.0 * akp ** 2 * (b @ b)) / upper
    return kappa_bar, kappa_bar / 2.0, math.sqrt(upper / lower)


def threshold_reference(traj, ideal):
    """``||[x_r(t), k_x*, k_r*, theta*]||`` at every recorded sample."""
    ideal = ideal.as_vector() if isinstance(ideal, ControllerGains) else np.asarray(ideal)
    return np.sqrt((traj.x_r ** 2).sum(axis=1) + ideal @ ideal)


def decay_time(traj, ideal, fraction=THRESHOLD_FRACTION):
    """First recorded time after ``t_q`` with ``||chi|| <= fraction * threshold_reference``.

    Returns ``(t_hit, t_hit - t_q)`` or ``None`` when the threshold is never
    reached inside the horizon.
    """
    if traj.t_q is None:
        raise NoExcitation("memory never completed; no t_q")
    ok = (traj.t > traj.t_q) & (traj.chi_norm <= fraction * threshold_reference(traj, ideal))
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    t_hit = float(traj.t[hits[0]])
    return t_hit, t_hit - traj.t_q


def empirical_rate(traj, ideal, alpha, fraction=THRESHOLD_FRACTION):
    """``ln(alpha ||chi(t0)|| / ||chi(t_hit)||) / elapsed``; a diagnostic of our own making."""
    hit = decay_time(traj, ideal, fraction)
    if hit is None:
        return None
    t_hit, elapsed = hit
    j = int(np.flatnonzero(traj.t == t_hit)[0])
    if elapsed <= 0 or traj.chi_norm[j] <= 0:
        return None
    return math.log(alpha * traj.chi_norm[0] / traj.chi_norm[j]) / elapsed


def envelope(traj, kappa, alpha):
    """Bound ``alpha exp(-kappa (t - t_q)) ||chi(t0)||`` evaluated on ``traj.t``."""
    return alpha * np.exp(-kappa * (traj.t - traj.t_q)) * traj.chi_norm[0]
