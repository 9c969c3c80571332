"""Monte Carlo harness: size, power, paired power loss and Edgeworth validation.

Seed layout. For a master seed m and starting index s, evaluation
replications use indices [s, s + reps) and, when a calibrated threshold is
needed, calibration replications under theta0 use [s + reps, s + 2 reps).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.stats import poisson

from .edgeworth import ExpansionInput, edgeworth_cdf
from .errors import InvariantViolation, ModelError
from .intensity import IntensityModel
from .inference import (AlternativeQuantities, alternative_quantities, edgeworth_powers, empirical_threshold,
                        expansion_centering, power_representation_second, power_representation_third,
                        score_threshold_second, score_threshold_third)
from .moments import core_quantities, power_loss_limit
from .sampler import SeedSpec
from .simulation import StatKernel, simulate_statistics, theta_at

TEST_KINDS = ("score2", "score3", "np_analytic", "np_mc")
STATISTIC_KINDS = ("score_null", "score_alt", "llr_null", "llr_alt")
MIN_REPS = 10_000
MIN_LOSS_REPS = 100_000


def _check_reps(reps: int, minimum: int):
    if int(reps) < minimum:
        raise ValueError(f"reps must be at least {minimum}, got {reps}")


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class PowerEstimate:
    test_name: str
    u: float
    n: float
    alpha: float
    reps: int
    rejections: int
    beta_hat: float
    std_error: float
    threshold: float
    master_seed: int

    @classmethod
    def from_rejections(cls, test_name, u, n, alpha, rejections, reps, threshold, master_seed):
        beta = rejections / reps
        return cls(test_name, float(u), float(n), float(alpha), int(reps), int(rejections), beta,
                   math.sqrt(beta * (1.0 - beta) / reps), float(threshold), int(master_seed))


def _score_threshold(kind: str, alpha: float, core) -> float:
    if kind == "score2":
        return score_threshold_second(alpha, core)
    if kind == "score3":
        return score_threshold_third(alpha, core)
    raise ValueError(f"unknown score threshold kind {kind!r}")


def size_table(model: IntensityModel, alphas, kinds, reps: int, seed: SeedSpec, workers: int = 1):
    """Size of the score test for every (alpha, kind) from one set of null replications."""
    _check_reps(reps, MIN_REPS)
    core = core_quantities(model)
    kernel = StatKernel.build(model, phi=core.phi_n)
    start = seed.replication_index
    delta, _ = simulate_statistics(kernel, model.theta0, seed.master_seed, start, start + reps, workers)
    out = []
    for alpha in alphas:
        _check_alpha(alpha)
        for kind in kinds:
            c = _score_threshold(kind, alpha, core)
            out.append(PowerEstimate.from_rejections(kind, 0.0, model.n, alpha, int(np.sum(delta > c)), reps,
                                                     c, seed.master_seed))
    return out


def estimate_size(model: IntensityModel, alpha: float, threshold_kind: str, reps: int, seed: SeedSpec,
                  workers: int = 1) -> PowerEstimate:
    """Rejection frequency of the score test under theta0 (threshold_kind 'score2' or 'score3')."""
    return size_table(model, [alpha], [threshold_kind], reps, seed, workers)[0]


def estimate_power(model: IntensityModel, u: float, alpha: float, test_kind: str, reps: int, seed: SeedSpec,
                   workers: int = 1) -> PowerEstimate:
    """Rejection frequency under theta_u of the named test."""
    return power_table(model, u, alpha, [test_kind], reps, seed, workers)[0]


def power_table(model: IntensityModel, u: float, alpha: float, kinds, reps: int, seed: SeedSpec,
                workers: int = 1):
    """Powers of several tests on common replications under theta_u."""
    _check_reps(reps, MIN_REPS)
    _check_alpha(alpha)
    if not u >= 0:
        raise ValueError("u must be nonnegative")
    for kind in kinds:
        if kind not in TEST_KINDS:
            raise ValueError(f"unknown test kind {kind!r}; choose from {TEST_KINDS}")
    needs_llr = any(k.startswith("np") for k in kinds)
    if needs_llr and u == 0:
        raise ValueError("the Neyman-Pearson test is undefined at u = 0")
    core = core_quantities(model)
    theta = theta_at(model, u, core.phi_n)
    kernel = StatKernel.build(model, us=(u,) if needs_llr else (), phi=core.phi_n)
    start, master = seed.replication_index, seed.master_seed
    delta, llr = simulate_statistics(kernel, theta, master, start, start + reps, workers)
    out = []
    for kind in kinds:
        if kind in ("score2", "score3"):
            thr, stat = _score_threshold(kind, alpha, core), delta
        elif kind == "np_analytic":
            thr, stat = alternative_quantities(model, u, alpha, core=core).b_n, llr[0]
        else:
            _, cal = simulate_statistics(kernel, model.theta0, master, start + reps, start + 2 * reps, workers)
            thr, stat = empirical_threshold(cal[0], alpha), llr[0]
        out.append(PowerEstimate.from_rejections(kind, u, model.n, alpha, int(np.sum(stat > thr)), reps, thr,
                                                 master))
    return out


# ------------------------------------------------------------------ power loss
@dataclass(frozen=True)
class PairedLossEstimate:
    u: float
    n: float
    alpha: float
    reps: int
    np_only: int
    score_only: int
    disagree_count: int
    beta_np: float
    beta_score: float
    loss_hat: float
    std_error: float
    loss_hat_cv: float
    cv_std_error: float
    r_analytic: float
    loss_edgeworth: float
    score_threshold: float
    np_threshold: float
    calibration_size: float
    eval_block: tuple
    calibration_block: tuple


def _blocks_overlap(a: tuple, b: tuple) -> bool:
    return a[0] == b[0] and a[1] < b[2] and b[1] < a[2]


def paired_loss_at(model: IntensityModel, u: float, alpha: float, reps: int, seed: SeedSpec,
                   calibration_seed: SeedSpec | None = None, workers: int = 1) -> PairedLossEstimate:
    """Paired power-loss estimate at one window length.

    Both thresholds are empirical (1 - alpha) quantiles of the same
    calibration replications under theta0, so the two tests have identical
    empirical size there. The evaluation replications under theta_u are
    shared by both tests. Besides the raw difference of rejection rates
    the estimate ``loss_hat_cv`` averages D (1 - exp(b - Lambda)), whose
    mean equals the raw one when the sizes match exactly and which is
    insensitive to small threshold errors.
    """
    _check_reps(reps, MIN_LOSS_REPS)
    _check_alpha(alpha)
    if not u > 0:
        raise ValueError("u must be positive")
    if calibration_seed is None:
        calibration_seed = SeedSpec(seed.master_seed, seed.replication_index + reps)
    ev = (seed.master_seed, seed.replication_index, seed.replication_index + reps)
    cb = (calibration_seed.master_seed, calibration_seed.replication_index, calibration_seed.replication_index + reps)
    if _blocks_overlap(ev, cb):
        raise ValueError(f"calibration replications {cb} overlap evaluation replications {ev}")
    core = core_quantities(model)
    theta = theta_at(model, u, core.phi_n)
    kernel = StatKernel.build(model, us=(u,), phi=core.phi_n)
    d0, l0 = simulate_statistics(kernel, model.theta0, cb[0], cb[1], cb[2], workers)
    c, b = empirical_threshold(d0, alpha), empirical_threshold(l0[0], alpha)
    calibration_size = float(np.mean(d0 > c))
    d1, l1 = simulate_statistics(kernel, theta, ev[0], ev[1], ev[2], workers)
    rej_np, rej_score = l1[0] > b, d1 > c
    np_only = int(np.sum(rej_np & ~rej_score))
    score_only = int(np.sum(rej_score & ~rej_np))
    if model.family == "homogeneous" and (np_only or score_only):
        raise InvariantViolation("homogeneous model: both tests are monotone in the count and must agree")
    diff = rej_np.astype(float) - rej_score.astype(float)
    scale = model.eps_n ** -2
    weighted = diff * -np.expm1(b - l1[0])
    alt = alternative_quantities(model, u, alpha, core=core)
    p_score, p_np = edgeworth_powers(alt)
    return PairedLossEstimate(
        u=float(u), n=model.n, alpha=float(alpha), reps=int(reps), np_only=np_only, score_only=score_only,
        disagree_count=np_only - score_only, beta_np=float(np.mean(rej_np)), beta_score=float(np.mean(rej_score)),
        loss_hat=scale * float(np.mean(diff)), std_error=scale * float(np.std(diff, ddof=1)) / math.sqrt(reps),
        loss_hat_cv=scale * float(np.mean(weighted)),
        cv_std_error=scale * float(np.std(weighted, ddof=1)) / math.sqrt(reps),
        r_analytic=power_loss_limit(model, u, alpha, core=core), loss_edgeworth=scale * (p_np - p_score),
        score_threshold=c, np_threshold=b, calibration_size=calibration_size, eval_block=ev, calibration_block=cb)


def paired_power_loss(model: IntensityModel, u: float, alpha: float, n_list, reps: int, seed: SeedSpec,
                      workers: int = 1):
    """paired_loss_at over increasing window lengths; each n reuses the same replication indices."""
    n_list = [float(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    return [paired_loss_at(model.with_n(n), u, alpha, reps, seed, workers=workers) for n in n_list]


# ------------------------------------------------------- Edgeworth validation
@dataclass(frozen=True)
class EdgeworthReport:
    statistic_kind: str
    n: float
    reps: int
    gamma3: float
    gamma4: float
    sup_distance: float
    y_at_sup: float
    mc_bound: float
    eps3_bound: float

    @property
    def within_bound(self) -> bool:
        return self.sup_distance <= self.mc_bound + self.eps3_bound


def y_grid(points: int = 1000, lo: float = -4.0, hi: float = 4.0):
    return np.linspace(lo, hi, points)


def _normalizer(kind: str, alt: AlternativeQuantities | None, core):
    if kind == "score_null":
        return 0.0, 1.0, core.gamma3, core.gamma4
    if kind == "score_alt":
        return alt.m_n_u, alt.eta_n, alt.gamma3_u, alt.gamma4_u
    if kind == "llr_null":
        return alt.mu_n0, alt.sigma_n0, alt.gamma3p0, alt.gamma4p0
    return alt.mu_n_u, alt.sigma_n_u, alt.gamma3p_u, alt.gamma4p_u


def sup_distance(sample, cdf_values, grid):
    """max over grid of |empirical CDF(sample) - cdf_values|; returns (distance, argmax y)."""
    srt = np.sort(np.asarray(sample))
    ecdf = np.searchsorted(srt, grid, side="right") / srt.size
    dev = np.abs(ecdf - cdf_values)
    i = int(np.argmax(dev))
    return float(dev[i]), float(grid[i])


def edgeworth_validation(model: IntensityModel, u: float, statistic_kind: str, reps: int, seed: SeedSpec,
                         grid=None, eps3_constant: float = 12.0, workers: int = 1) -> EdgeworthReport:
    """Sup-distance between the empirical CDF of a normalized statistic and its Edgeworth expansion."""
    if statistic_kind not in STATISTIC_KINDS:
        raise ValueError(f"statistic_kind must be one of {STATISTIC_KINDS}")
    _check_reps(reps, MIN_LOSS_REPS)
    grid = y_grid() if grid is None else np.asarray(grid, dtype=float)
    core = core_quantities(model)
    uses_u = statistic_kind != "score_null"
    if uses_u and not u > 0:
        raise ValueError("u must be positive for this statistic")
    alt = alternative_quantities(model, u, 0.05, core=core) if uses_u else None
    center, scale, g3, g4 = _normalizer(statistic_kind, alt, core)
    theta = alt.theta_u if statistic_kind.endswith("_alt") else model.theta0
    llr = statistic_kind.startswith("llr")
    kernel = StatKernel.build(model, us=(u,) if llr else (), phi=core.phi_n)
    start = seed.replication_index
    delta, lam = simulate_statistics(kernel, theta, seed.master_seed, start, start + reps, workers)
    stat = (lam[0] if llr else delta)
    values = (stat - center) / scale
    dist, y_at = sup_distance(values, edgeworth_cdf(grid, _input(g3, g4)), grid)
    return EdgeworthReport(statistic_kind, model.n, int(reps), g3, g4, dist, y_at, 1.36 / math.sqrt(reps),
                           eps3_constant * model.eps_n**3)


def _input(g3, g4):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ExpansionInput(float(g3), float(g4))


def homogeneous_score_cdf(model: IntensityModel, y):
    """Exact CDF of Delta_n(theta0) for the homogeneous family (a scaled Poisson count)."""
    if model.family != "homogeneous":
        raise ModelError("the exact score CDF is available for the homogeneous family only")
    th, n = model.theta0, model.n
    phi = (n / th) ** -0.5
    # Delta = phi (N / theta0 - n)  <=  y   iff   N <= theta0 (n + y / phi)
    k = np.floor(th * (n + np.asarray(y, dtype=float) / phi) + 1e-9)
    return poisson.cdf(k, th * n)


def exact_edgeworth_distance(model: IntensityModel, grid=None) -> tuple[float, float]:
    """Sup over the grid of |exact CDF - expansion| for the homogeneous score statistic."""
    grid = y_grid() if grid is None else np.asarray(grid, dtype=float)
    core = core_quantities(model)
    dev = np.abs(homogeneous_score_cdf(model, grid) - edgeworth_cdf(grid, _input(core.gamma3, core.gamma4)))
    i = int(np.argmax(dev))
    return float(dev[i]), float(grid[i])


# ------------------------------------------------------------------ sweeps
@dataclass(frozen=True)
class SweepRow:
    n: float
    size_score3: float
    size_se: float
    power_score3: float
    power_np_mc: float
    power_representation2: float
    power_representation3: float
    loss_hat: float
    loss_se: float
    loss_hat_cv: float
    r_analytic: float
    loss_scale: float
    diff_residual: float
    gamma_residual: float


def convergence_sweep(model: IntensityModel, u: float, alpha: float, n_list, reps: int, seed: SeedSpec,
                      workers: int = 1):
    """One row per window length: size, powers, paired loss, analytic limits, expansion residuals."""
    rows = []
    for n in n_list:
        m = model.with_n(float(n))
        core = core_quantities(m)
        size = estimate_size(m, alpha, "score3", reps, seed, workers)
        loss = paired_loss_at(m, u, alpha, max(reps, MIN_LOSS_REPS), seed, workers=workers)
        exp = expansion_centering(m, u, alpha)
        rows.append(SweepRow(
            n=m.n, size_score3=size.beta_hat, size_se=size.std_error, power_score3=loss.beta_score,
            power_np_mc=loss.beta_np, power_representation2=power_representation_second(m, u, alpha, core),
            power_representation3=power_representation_third(m, u, alpha, core), loss_hat=loss.loss_hat,
            loss_se=loss.std_error, loss_hat_cv=loss.loss_hat_cv, r_analytic=loss.r_analytic,
            loss_scale=core.loss_limit_scale, diff_residual=exp.diff_residual, gamma_residual=exp.gamma_residual))
    return rows


# ------------------------------------------------------------------ CSV output
def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, tuple):
        return ":".join(_fmt(x) for x in v)
    return str(v)


def records_csv(records) -> str:
    """CSV text for a list of dataclass records, floats with 17 significant digits."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    names = [f.name for f in fields(records[0])]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for rec in records:
        row = asdict(rec)
        writer.writerow([_fmt(row[k]) for k in names])
    return buf.getvalue()
