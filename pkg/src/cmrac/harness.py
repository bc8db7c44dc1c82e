"""Experiment configuration, Monte Carlo driver and result files.

Configurations are TOML documents with ``[plant]``, ``[reference]``,
``[sim]`` (plus ``[sim.command]``) and an optional ``[monte_carlo]`` table.
Matrices are written row-major as nested lists. See
``cmrac/data/benchmark_2d.cfg`` for a complete example.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
import math
import os
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .plant import BasisDescriptor, PlantModel, ReferenceModel, matching_gains
from .sim import (
    Command, SimConfig, decay_time, empirical_rate, initial_condition, run_episode,
    theoretical_rate, threshold_reference, THRESHOLD_FRACTION,
)

SIG_DIGITS = 17


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


@dataclass(frozen=True)
class MonteCarloConfig:
    n_samples: int = 100
    seed: int = 0
    level: tuple = (2.0, 6.0)
    estimate_error: tuple = (0.2, 0.8)
    x0: tuple = ((0.0, 1.0), (-0.1, 0.1))

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for name, rng in [("level", self.level), ("estimate_error", self.estimate_error)] + [
            (f"x0[{i}]", r) for i, r in enumerate(self.x0)
        ]:
            if len(rng) != 2 or not rng[0] <= rng[1]:
                raise ValueError(f"range {name} must be [lo, hi] with lo <= hi")


@dataclass(frozen=True)
class ExperimentConfig:
    model: PlantModel
    ref: ReferenceModel
    sim: SimConfig
    monte_carlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)


def _basis(entries, n):
    out = []
    for e in entries:
        if isinstance(e, str):
            out.append(BasisDescriptor.named(e))
        else:
            if len(e) != n:
                raise ValueError(f"monomial {e} needs {n} exponents")
            out.append(BasisDescriptor.monomial(*e))
    return tuple(out)


def _section(doc, name, required=True):
    if name not in doc:
        if required:
            raise ValidationError(f"missing [{name}] section")
        return {}
    return doc[name]


def _build(kind, factory, table, allowed):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ValidationError(f"[{kind}] unknown keys: {', '.join(sorted(unknown))}")
    try:
        return factory(**table)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"[{kind}] {exc}") from exc


def parse_config(text, source="<string>"):
    """Parse and validate configuration text; see :func:`load_config`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: {exc}") from exc

    plant = dict(_section(doc, "plant"))
    n = len(plant.get("b", ()))
    try:
        plant["basis"] = _basis(plant.get("basis", ()), n)
    except ValueError as exc:
        raise ValidationError(f"[plant] basis: {exc}") from exc
    model = _build("plant", PlantModel, plant, ("A", "b", "k_p", "theta", "basis"))
    try:
        ref = ReferenceModel(**_section(doc, "reference"))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"[reference] {exc}") from exc
    if ref.A_r.shape != (n, n) or ref.b_r.shape != (n,):
        raise ValidationError("[reference] dimensions do not match the plant")

    sim = dict(_section(doc, "sim", required=False))
    cmd = sim.pop("command", {})
    sim["command"] = _build("sim.command", Command, cmd, [f.name for f in fields(Command)])
    for key in ("x0", "xr0", "gains0"):
        if key in sim:
            sim[key] = tuple(float(v) for v in sim[key])
    sim_cfg = _build("sim", SimConfig, sim, [f.name for f in fields(SimConfig)])
    for key, size in (("x0", n), ("xr0", n), ("gains0", model.q)):
        val = getattr(sim_cfg, key)
        if val is not None and len(val) != size:
            raise ValidationError(f"[sim] {key} must have {size} entries")
    try:
        matching_gains(model, ref)
    except ValueError as exc:
        raise ValidationError(f"plant/reference: {exc}") from exc

    mc = dict(_section(doc, "monte_carlo", required=False))
    for key in ("level", "estimate_error"):
        if key in mc:
            mc[key] = tuple(float(v) for v in mc[key])
    if "x0" in mc:
        mc["x0"] = tuple(tuple(float(v) for v in r) for r in mc["x0"])
    mc_cfg = _build("monte_carlo", MonteCarloConfig, mc, [f.name for f in fields(MonteCarloConfig)])
    if len(mc_cfg.x0) != n:
        raise ValidationError(f"[monte_carlo] x0 needs {n} ranges")
    return ExperimentConfig(model, ref, sim_cfg, mc_cfg)


def load_config(path):
    """Read a TOML experiment file and return a validated :class:`ExperimentConfig`.

    Omitted ``[sim]`` fields take the :class:`~cmrac.sim.SimConfig` defaults
    (``dt=1e-3``, ``t_end=40``, ``guard=1e6``, ...).

    Raises
    ------
    ParseError
        Malformed TOML; the message carries line and column.
    ValidationError
        A value violates an invariant (e.g. ``f must be positive``).
    """
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def bundled_config_path(name="benchmark_2d.cfg"):
    return resources.files("cmrac").joinpath("data", name)


def load_bundled(name="benchmark_2d.cfg"):
    return parse_config(bundled_config_path(name).read_text(encoding="utf-8"), source=name)


@dataclass
class SampleResult:
    index: int
    level: float
    estimate_error: float
    x0: tuple
    t_q: float = None
    t_hit: float = None
    elapsed: float = None
    elapsed_bound: float = None
    rate: float = None
    chi0: float = None
    chi_final: float = None
    diverged_at: float = None

    @property
    def reached(self):
        return self.elapsed is not None

    @property
    def within_bound(self):
        return self.reached and self.elapsed <= self.elapsed_bound


def sample_rng(seed, index):
    """Counter-based generator keyed by ``(seed, index)``; independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def draw_sample(mc, index):
    """``(level, estimate_error, x0)`` for sample ``index``, uniform over the configured ranges."""
    rng = sample_rng(mc.seed, index)
    level = rng.uniform(*mc.level)
    frac = rng.uniform(*mc.estimate_error)
    x0 = tuple(float(rng.uniform(lo, hi)) for lo, hi in mc.x0)
    return float(level), float(frac), x0


def elapsed_bound(chi0, threshold, kappa, alpha):
    """Time the guaranteed envelope needs to fall from ``alpha chi0`` to ``threshold``."""
    return math.log(alpha * chi0 / threshold) / kappa


def evaluate_sample(cfg, index, level, frac, x0, keep_trajectory=False):
    model, ref = cfg.model, cfg.ref
    ideal = matching_gains(model, ref)
    init = initial_condition(cfg.sim, model, ref, level=level, estimate_error=frac, x0=x0)
    traj = run_episode(cfg.sim, model, ref, init, raise_on_divergence=False)
    res = SampleResult(index, level, frac, tuple(x0))
    res.chi0 = float(traj.chi_norm[0])
    res.chi_final = float(traj.chi_norm[-1])
    res.diverged_at = traj.diverged_at
    res.t_q = traj.t_q
    if traj.t_q is not None:
        hit = decay_time(traj, ideal)
        if hit is not None:
            res.t_hit, res.elapsed = hit
            _, kappa, alpha = theoretical_rate(ref.Q, ref.P, model.b, model.k_p)
            j = int(np.searchsorted(traj.t, res.t_hit))
            thr = THRESHOLD_FRACTION * threshold_reference(traj, ideal)[j]
            res.elapsed_bound = elapsed_bound(res.chi0, thr, kappa, alpha)
            res.rate = empirical_rate(traj, ideal, alpha)
    return (res, traj) if keep_trajectory else (res, None)


def _evaluate_index(args):
    cfg, index = args
    return evaluate_sample(cfg, index, *draw_sample(cfg.monte_carlo, index))[0]


def run_monte_carlo(cfg, workers=1):
    """Run every Monte Carlo sample with the combined law.

    Each sample draws its command level, initial-estimate error fraction and
    initial state from ``cfg.monte_carlo``; diverged samples are reported with
    ``diverged_at`` set instead of aborting the batch. Results are ordered by
    sample index.
    """
    if cfg.sim.law != "combined":
        cfg = replace(cfg, sim=replace(cfg.sim, law="combined"))
    jobs = [(cfg, i) for i in range(cfg.monte_carlo.n_samples)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_index, jobs))
    else:
        results = [_evaluate_index(j) for j in jobs]
    return sorted(results, key=lambda r: r.index)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{SIG_DIGITS}g}"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trajectory(traj, path):
    """Trajectory CSV: ``t, x1..xn, xr1..xrn, u, e_norm, ..., V, eta``."""
    _write_csv(path, traj.csv_header(), traj.csv_rows())


def montecarlo_header(n):
    return (
        ["sample_index", "level", "estimate_error"] + [f"x0_{i + 1}" for i in range(n)]
        + ["t_q", "t_hit", "elapsed", "elapsed_bound", "within_bound", "rate",
           "chi0", "chi_final", "diverged_at"]
    )


def write_results(results, out_dir, cfg, trajectories=None):
    """Write ``montecarlo.csv``, ``summary.txt`` and one ``trajectory_<i>.csv`` per flagged sample.

    ``trajectories`` maps sample index to :class:`~cmrac.sim.Trajectory`; pass
    the ones worth inspecting (e.g. samples that missed the threshold).
    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    n = cfg.model.n
    rows = [
        [r.index, r.level, r.estimate_error, *r.x0, r.t_q, r.t_hit, r.elapsed, r.elapsed_bound,
         r.within_bound if r.reached else None, r.rate, r.chi0, r.chi_final, r.diverged_at]
        for r in sorted(results, key=lambda r: r.index)
    ]
    written = []
    path = os.path.join(out_dir, "montecarlo.csv")
    _write_csv(path, montecarlo_header(n), rows)
    written.append(path)
    for idx, traj in sorted((trajectories or {}).items()):
        path = os.path.join(out_dir, f"trajectory_{idx}.csv")
        write_trajectory(traj, path)
        written.append(path)
    path = os.path.join(out_dir, "summary.txt")
    write_summary(path, cfg, results)
    written.append(path)
    return written


def summary_lines(cfg, results=()):
    kappa_bar, kappa, alpha = theoretical_rate(cfg.ref.Q, cfg.ref.P, cfg.model.b, cfg.model.k_p)
    lines = [
        f"kappa_bar = {_fmt(kappa_bar)}",
        f"kappa = {_fmt(kappa)}",
        f"alpha = {_fmt(alpha)}",
    ]
    if results:
        hits = sum(r.reached for r in results)
        bounded = sum(r.within_bound for r in results)
        lines += [
            f"samples = {len(results)}",
            f"threshold_hits = {hits}",
            f"within_bound = {bounded}",
            f"diverged = {sum(r.diverged_at is not None for r in results)}",
        ]
    return lines


def write_summary(path, cfg, results=()):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary_lines(cfg, results)) + "\n")
