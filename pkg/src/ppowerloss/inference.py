"""Test statistics, thresholds, local-alternative quantities and power representations.

The score test rejects when Delta_n(theta0) exceeds a threshold c_n; the
Neyman-Pearson test for theta_u = theta0 + phi_n u rejects when Lambda_n(u)
exceeds b_n(u). Quantities indexed by u are computed by direct quadrature
at theta_u. The polynomial expansions in the I(.) moments are provided
separately as cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .edgeworth import ExpansionInput, edgeworth_quantile, hermite
from .errors import InvariantViolation, ModelError
from .intensity import IntensityModel
from .moments import CoreQuantities, core_quantities, normal_pdf, upper_quantile
from .quadrature import DEFAULT_TOL, integrate
from .sampler import Realization, SeedSpec
from .simulation import StatKernel, simulate_statistics, theta_at


# ------------------------------------------------------------------ statistics
def _check_realization(realization: Realization, model: IntensityModel):
    if realization.domain != model.domain:
        raise ModelError(f"realization domain {realization.domain} differs from model domain {model.domain}")


def score_statistic(realization: Realization, model: IntensityModel, kernel: StatKernel | None = None) -> float:
    """Delta_n(theta0) = phi_n [sum Sdot/S (x_i) - int Sdot dx] at theta0."""
    _check_realization(realization, model)
    kernel = kernel or StatKernel.build(model)
    return float(np.sum(kernel.score_terms(realization.points)) - kernel.score_comp)


def log_likelihood_ratio(realization: Realization, model: IntensityModel, u: float,
                         kernel: StatKernel | None = None) -> float:
    """Lambda_n(u) = sum ln(S(theta_u)/S(theta0))(x_i) - int (S(theta_u) - S(theta0)) dx."""
    _check_realization(realization, model)
    if kernel is None or float(u) not in kernel.us:
        kernel = StatKernel.build(model, us=(u,))
    k = kernel.us.index(float(u))
    if kernel.thetas[k] == model.theta0:
        return 0.0
    return float(np.sum(kernel.llr_terms(k, realization.points)) - kernel.llr_comps[k])


def theta_u(model: IntensityModel, u: float, core: CoreQuantities | None = None) -> float:
    core = core or core_quantities(model)
    return theta_at(model, u, core.phi_n)


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    threshold: float
    reject: bool

    @classmethod
    def of(cls, statistic: float, threshold: float) -> "TestOutcome":
        return cls(float(statistic), float(threshold), bool(statistic > threshold))


# ------------------------------------------------------------------ thresholds
def score_threshold_second(alpha: float, core) -> float:
    """c_n = z_alpha + (gamma3/6) H2(z_alpha)."""
    z = upper_quantile(alpha)
    return z + core.gamma3 / 6.0 * (z * z - 1.0)


def score_threshold_third(alpha: float, core) -> float:
    """c_n with the gamma4 and gamma3^2 terms of the Edgeworth quantile."""
    return edgeworth_quantile(alpha, _quiet_input(core.gamma3, core.gamma4))


def _quiet_input(g3: float, g4: float) -> ExpansionInput:
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ExpansionInput(float(g3), float(g4))


# -------------------------------------------------------- local alternatives
@dataclass(frozen=True)
class AlternativeQuantities:
    u: float
    theta_u: float
    m_n_u: float
    eta_n: float
    mu_n_u: float
    sigma_n_u: float
    mu_n0: float
    sigma_n0: float
    gamma3_u: float
    gamma4_u: float
    gamma3p_u: float
    gamma4p_u: float
    gamma3p0: float
    gamma4p0: float
    c_n: float
    a_n: float
    A_n: float
    b_n: float
    degenerate: bool = False


def _alternative_integrals(model: IntensityModel, theta: float, phi: float, tol: float):
    th0 = model.theta0

    def f(x):
        s0 = model.intensity(th0, x)
        su = model.intensity(theta, x)
        if np.any(s0 <= 0) or np.any(su <= 0):
            raise ModelError("intensity must be positive on the window for the alternative quantities")
        k = phi * model.derivative(1, th0, x) / s0
        d = (su - s0) / s0
        g = np.log1p(d)
        # S_u ln(S_u/S_0) - (S_u - S_0), written to avoid cancellation
        kl_u = s0 * ((1.0 + d) * g - d)
        kl_0 = s0 * (g - d)
        return np.vstack([k * (su - s0), k**2 * su, k**3 * su, k**4 * su,
                          kl_u, g**2 * su, g**3 * su, g**4 * su,
                          kl_0, g**2 * s0, g**3 * s0, g**4 * s0])

    return integrate(f, model.domain.lower, model.domain.upper, tol=tol, period=model.quadrature_period())


def alternative_quantities(model: IntensityModel, u: float, alpha: float, core: CoreQuantities | None = None,
                           tol: float = DEFAULT_TOL) -> AlternativeQuantities:
    """Moments and cumulants of Delta_n and Lambda_n(u) under theta_u and theta0, with a_n, A_n, b_n."""
    if not u >= 0:
        raise ValueError("u must be nonnegative")
    core = core or core_quantities(model, tol=tol)
    z = upper_quantile(alpha)
    c3 = score_threshold_third(alpha, core)
    theta = theta_at(model, u, core.phi_n)
    if u == 0:
        return AlternativeQuantities(
            u=0.0, theta_u=theta, m_n_u=0.0, eta_n=1.0, mu_n_u=0.0, sigma_n_u=0.0, mu_n0=0.0, sigma_n0=0.0,
            gamma3_u=core.gamma3, gamma4_u=core.gamma4, gamma3p_u=0.0, gamma4p_u=0.0, gamma3p0=0.0,
            gamma4p0=0.0, c_n=c3, a_n=-c3, A_n=0.0, b_n=0.0, degenerate=True)
    v = _alternative_integrals(model, theta, core.phi_n, tol)
    m, eta2, k3u, k4u = v[0], v[1], v[2], v[3]
    mu_u, sig2_u, l3u, l4u = v[4], v[5], v[6], v[7]
    mu_0, sig2_0, l30, l40 = v[8], v[9], v[10], v[11]
    for name, val in (("eta_n^2", eta2), ("sigma_n(u)^2", sig2_u), ("sigma_n^2", sig2_0)):
        if not val > 0:
            raise InvariantViolation(f"{name} = {val!r} is not positive")
    eta, sig_u, sig_0 = math.sqrt(eta2), math.sqrt(sig2_u), math.sqrt(sig2_0)
    g3p0, g4p0 = l30 / sig_0**3, l40 / sig_0**4
    b = mu_0 + sig_0 * (z + g3p0 / 6.0 * hermite(2, z) + g4p0 / 24.0 * hermite(3, z)
                        + g3p0**2 / 72.0 * hermite(5, z))
    return AlternativeQuantities(
        u=float(u), theta_u=theta, m_n_u=m, eta_n=eta, mu_n_u=mu_u, sigma_n_u=sig_u, mu_n0=mu_0, sigma_n0=sig_0,
        gamma3_u=k3u / eta**3, gamma4_u=k4u / eta**4, gamma3p_u=l3u / sig_u**3, gamma4p_u=l4u / sig_u**4,
        gamma3p0=g3p0, gamma4p0=g4p0, c_n=c3, a_n=(m - c3) / eta, A_n=(mu_u - b) / sig_u, b_n=b)


def _upper_tail(a: float, g3: float, g4: float) -> float:
    """P(zeta > -a) for zeta with the three-term Edgeworth distribution."""
    return float(ndtr(a) + normal_pdf(a) * (g3 / 6.0 * hermite(2, a) - g4 / 24.0 * hermite(3, a)
                                            - g3**2 / 72.0 * hermite(5, a)))


def edgeworth_powers(alt: AlternativeQuantities) -> tuple[float, float]:
    """(score power, NP power) at theta_u from the Edgeworth expansions with direct cumulants."""
    if alt.degenerate:
        raise ValueError("powers at u = 0 are the sizes; use a positive u")
    score = _upper_tail(alt.a_n, alt.gamma3_u, alt.gamma4_u)
    np_power = _upper_tail(alt.A_n, alt.gamma3p_u, alt.gamma4p_u)
    return score, np_power


# ------------------------------------------------------------------ series
@dataclass(frozen=True)
class SeriesMoments:
    """phi_n-weighted I(.) moments entering the expansions in u."""

    g3: float  # phi^3 I(2,3,0)
    g4: float  # phi^4 I(3,4,0)
    p111: float  # phi^3 I(1,1,1)
    p1101: float  # phi^4 I(1,1,0,1)
    p221: float  # phi^4 I(2,2,1)
    p102: float  # phi^4 I(1,0,2)

    @classmethod
    def from_core(cls, core: CoreQuantities) -> "SeriesMoments":
        t, phi = core.moments, core.phi_n
        return cls(core.gamma3, core.gamma4, phi**3 * t(1, 1, 1), phi**4 * t(1, 1, 0, 1),
                   phi**4 * t(2, 2, 1), phi**4 * t(1, 0, 2))


def _quantile_terms(sm: SeriesMoments, z: float) -> float:
    return sm.g4 / 24.0 * hermite(3, z) + sm.g3**2 / 72.0 * hermite(5, z)


def a_n_series(sm: SeriesMoments, u: float, z: float, with_quantile_terms: bool = True) -> float:
    """a_n to O(eps^2); the quantile terms belong to the third-order threshold."""
    d, w = u - z, 1.0 - z * z
    val = (d + sm.p111 * u**2 / 2.0 + sm.g3 * (w - 3.0 * u * d) / 6.0
           + sm.p1101 * u**3 / 6.0 - sm.p111 * sm.g3 * u**3 / 4.0 - sm.p221 * u**2 * d / 4.0
           + sm.g3**2 * (9.0 * u**2 * d - 2.0 * u * w) / 24.0)
    return val - _quantile_terms(sm, z) if with_quantile_terms else val


def a_minus_a_series(sm: SeriesMoments, u: float, z: float, printed: bool = False) -> float:
    """A_n - a_n to O(eps^2).

    ``printed=True`` swaps in the alternative phi^6 I(2,3,0)^2 coefficient
    (9u^3 - 6u^2 z + 2u(1 - z^2))/24, which does not reproduce the power
    loss u^3 J_n / 8 when combined with the gamma difference below.
    """
    w = 1.0 - z * z
    k1 = (2.0 * u**3 - 2.0 * u**2 * z - u * w) / 4.0
    k2 = (9.0 * u**3 - 12.0 * u**2 * z - 6.0 * u * w) / 24.0
    k2_sq = (9.0 * u**3 - 6.0 * u**2 * z + 2.0 * u * w) / 24.0 if printed else -k2
    return (sm.p102 * u**3 / 8.0 - sm.p111**2 * u**3 / 8.0 + (sm.p111 * sm.g3 - sm.p221) * k1
            + sm.g4 * k2 + sm.g3**2 * k2_sq)


def gamma_diff_series(sm: SeriesMoments, u: float) -> float:
    """gamma'_3(u) - gamma_3(u) to O(eps^2)."""
    return 1.5 * u * (sm.p221 + sm.g3**2 - sm.g4 - sm.g3 * sm.p111)


@dataclass(frozen=True)
class ExpansionReport:
    u: float
    n: float
    a_n_series: float
    A_n_series: float
    diff_series: float
    gamma_diff_series: float
    a_n_direct: float
    A_n_direct: float
    diff_direct: float
    gamma_diff_direct: float

    @property
    def diff_residual(self) -> float:
        return self.diff_direct - self.diff_series

    @property
    def gamma_residual(self) -> float:
        return self.gamma_diff_direct - self.gamma_diff_series


def expansion_centering(model: IntensityModel, u: float, alpha: float, printed: bool = False,
                        tol: float = DEFAULT_TOL) -> ExpansionReport:
    """Series values of a_n, A_n, A_n - a_n and gamma'_3(u) - gamma_3(u) next to their direct values."""
    if not u > 0:
        raise ValueError("u must be positive")
    core = core_quantities(model, tol=tol)
    alt = alternative_quantities(model, u, alpha, core=core, tol=tol)
    sm = SeriesMoments.from_core(core)
    z = upper_quantile(alpha)
    a = a_n_series(sm, u, z)
    diff = a_minus_a_series(sm, u, z, printed=printed)
    return ExpansionReport(
        u=float(u), n=model.n, a_n_series=a, A_n_series=a + diff, diff_series=diff,
        gamma_diff_series=gamma_diff_series(sm, u), a_n_direct=alt.a_n, A_n_direct=alt.A_n,
        diff_direct=alt.A_n - alt.a_n, gamma_diff_direct=alt.gamma3p_u - alt.gamma3_u)


# ------------------------------------------------------- power representations
def q_polynomial(core: CoreQuantities, u: float, alpha: float) -> float:
    """Q_n(u) = u (z - 2u)/6 gamma3 + u^2/2 phi^3 I(1,1,1)."""
    z = upper_quantile(alpha)
    sm = SeriesMoments.from_core(core)
    return u * (z - 2.0 * u) / 6.0 * sm.g3 + u**2 / 2.0 * sm.p111


def power_representation_second(model: IntensityModel, u: float, alpha: float,
                                core: CoreQuantities | None = None) -> float:
    """N(u - z) + Q_n(u) n(u - z)."""
    if not u > 0:
        raise ValueError("u must be positive")
    core = core or core_quantities(model)
    d = u - upper_quantile(alpha)
    return float(ndtr(d) + q_polynomial(core, u, alpha) * normal_pdf(d))


def r2_term(core: CoreQuantities, u: float, alpha: float, printed: bool = False) -> float:
    """Second-order coefficient of n(Delta) in the score-test power.

    The default includes the threshold quantile terms gamma4 H3(z)/24 and
    gamma3^2 H5(z)/72 and the first-order drift of gamma3(u), gamma4(u)
    under theta_u; ``printed=True`` omits both.
    """
    sm = SeriesMoments.from_core(core)
    z = upper_quantile(alpha)
    d, w = u - z, 1.0 - z * z
    lead = sm.p111 * u**2 / 2.0 + sm.g3 * (w - 3.0 * u * d) / 6.0
    cross = sm.g3 * sm.p111 * u**2 / 2.0 + sm.g3**2 * (w - 3.0 * u * d) / 6.0
    val = (sm.p1101 * u**3 / 6.0 + sm.g3**2 * (9.0 * u**2 * d - 2.0 * u * w) / 24.0
           - sm.p221 * u**2 * d / 4.0 - sm.g3 * sm.p111 * u**3 / 4.0
           - d / 2.0 * lead**2 + d * (2.0 - hermite(2, d)) / 6.0 * cross
           - sm.g4 / 24.0 * hermite(3, d) - sm.g3**2 / 72.0 * hermite(5, d))
    if printed:
        return val
    h2 = hermite(2, d)
    return (val + sm.g3**2 * (-u * h2 / 4.0 - hermite(5, z) / 72.0)
            + sm.g4 * (u * h2 / 6.0 - hermite(3, z) / 24.0))


def power_representation_third(model: IntensityModel, u: float, alpha: float,
                               core: CoreQuantities | None = None, printed: bool = False) -> float:
    """N(Delta) + n(Delta) (r_1 + r_2) with r_1 = Q_n(u)."""
    if not u > 0:
        raise ValueError("u must be positive")
    core = core or core_quantities(model)
    d = u - upper_quantile(alpha)
    r = q_polynomial(core, u, alpha) + r2_term(core, u, alpha, printed=printed)
    return float(ndtr(d) + r * normal_pdf(d))


# --------------------------------------------------------- calibrated NP threshold
MIN_CALIBRATION_REPS = 10_000


def empirical_threshold(values, alpha: float) -> float:
    """Sample (1 - alpha) quantile, taken as an observed value (inverted CDF)."""
    return float(np.quantile(np.asarray(values), 1.0 - alpha, method="inverted_cdf"))


def np_threshold_mc(model: IntensityModel, u: float, alpha: float, reps: int, seed: SeedSpec,
                    workers: int = 1) -> float:
    """Empirical (1 - alpha) quantile of Lambda_n(u) under theta0.

    Replications seed.replication_index .. + reps - 1 of seed.master_seed are used.
    """
    if reps < MIN_CALIBRATION_REPS:
        raise ValueError(f"calibration needs at least {MIN_CALIBRATION_REPS} replications")
    if not u > 0:
        raise ValueError("u = 0 makes Lambda_n identically zero; no threshold exists")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    kernel = StatKernel.build(model, us=(u,))
    start = seed.replication_index
    _, llr = simulate_statistics(kernel, model.theta0, seed.master_seed, start, start + reps, workers)
    return empirical_threshold(llr[0], alpha)
