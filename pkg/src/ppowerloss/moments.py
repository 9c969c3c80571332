"""Deterministic integrals at theta0: Fisher information, cumulants, J_n, diagnostics.

All quantities are computed by composite Gauss-Legendre quadrature over the
observation window (one period when the integrands are periodic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import InvariantViolation, ModelError
from .intensity import IntensityModel
from .quadrature import DEFAULT_TOL, integrate

# (r0, r1, r2, r3) keys used by the power representations and the expansions
STANDARD_KEYS = (
    (1, 2, 0, 0),
    (2, 3, 0, 0),
    (3, 4, 0, 0),
    (1, 0, 2, 0),
    (2, 2, 1, 0),
    (1, 1, 1, 0),
    (1, 1, 0, 1),
)


def normal_pdf(y):
    return np.exp(-0.5 * np.square(y)) / math.sqrt(2.0 * math.pi)


def upper_quantile(alpha: float) -> float:
    """z_alpha with P(N(0,1) > z_alpha) = alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(-ndtri(alpha))


def _integrate_model(model: IntensityModel, f, tol: float):
    return integrate(f, model.domain.lower, model.domain.upper, tol=tol,
                     period=model.quadrature_period())


def _derivs_at_null(model: IntensityModel, x, order: int):
    return [model.derivative(j, model.theta0, x) for j in range(order + 1)]


@dataclass(frozen=True)
class MomentTable:
    """Values of I(r0,r1,r2,r3) = int Sdot^r1 Sddot^r2 S3^r3 / S^r0 dx at theta0."""

    entries: dict

    def __call__(self, r0: int, r1: int, r2: int = 0, r3: int = 0) -> float:
        try:
            return self.entries[(r0, r1, r2, r3)]
        except KeyError:
            raise KeyError(f"I{(r0, r1, r2, r3)} not in table") from None


def _check_key(key):
    r0, r1, r2, r3 = key
    if min(r0, r1, r2) < 0 or r3 not in (0, 1):
        raise ModelError(f"invalid moment index {key}")


def moment_table(model: IntensityModel, keys=STANDARD_KEYS, tol: float = DEFAULT_TOL) -> MomentTable:
    keys = [tuple(k) + (0,) * (4 - len(k)) for k in keys]
    for key in keys:
        _check_key(key)
    order = 3 if any(k[3] for k in keys) else (2 if any(k[2] for k in keys) else 1)

    def f(x):
        d = _derivs_at_null(model, x, order)
        rows = []
        for r0, r1, r2, r3 in keys:
            v = d[1] ** r1 / d[0] ** r0
            if r2:
                v = v * d[2] ** r2
            if r3:
                v = v * d[3]
            rows.append(v)
        return np.vstack(rows)

    values = np.atleast_1d(_integrate_model(model, f, tol))
    return MomentTable({k: float(v) for k, v in zip(keys, values)})


def moment_I(model: IntensityModel, r0: int, r1: int, r2: int = 0, r3: int = 0,
             tol: float = DEFAULT_TOL) -> float:
    return moment_table(model, [(r0, r1, r2, r3)], tol=tol)(r0, r1, r2, r3)


@dataclass(frozen=True)
class CoreQuantities:
    fisher: float
    phi_n: float
    eps_n: float
    gamma3: float
    gamma4: float
    j_n: float
    j_n_definition: float
    loss_limit_scale: float
    moments: MomentTable = field(repr=False)

    @property
    def n(self) -> float:
        return self.eps_n ** -2


def j_from_moments(phi: float, table: MomentTable) -> float:
    """J_n assembled from the I(.) moments."""
    first = table(1, 0, 2) - 2.0 * table(2, 2, 1) + table(3, 4, 0)
    second = table(2, 3, 0) - table(1, 1, 1)
    return phi**4 * first - phi**6 * second**2


def j_from_definition(model: IntensityModel, phi: float, tol: float = DEFAULT_TOL):
    """J_n from its defining integrals of w = Sdot^2 - S Sddot.

    Returns (J_n, scale) where scale = 2 phi^4 int (Sdot^4 + S^2 Sddot^2) / S^3
    bounds |J_n|. The cross term uses w Sdot / S^2, the weighting under
    which the Cauchy-Schwarz bound J_n >= 0 and the moment identity both
    hold. For exponential families w vanishes identically, so these
    smooth majorants also set the absolute quadrature tolerance.
    """

    def magnitude(x):
        s, s1, s2 = _derivs_at_null(model, x, 2)
        return np.vstack([(s1**4 + (s * s2) ** 2) / s**3, s1**2 / s])

    def f(x):
        s, s1, s2 = _derivs_at_null(model, x, 2)
        w = s1**2 - s * s2
        return np.vstack([w**2 / s**3, s1 * w / s**2])

    quad_ref, fisher = _integrate_model(model, magnitude, tol)
    atol = tol * np.array([2.0 * quad_ref, math.sqrt(2.0 * quad_ref * fisher)])
    quad, cross = integrate(f, model.domain.lower, model.domain.upper, tol=tol,
                            period=model.quadrature_period(), atol=atol)
    return phi**4 * quad - (phi**3 * cross) ** 2, 2.0 * phi**4 * quad_ref


def core_quantities(model: IntensityModel, tol: float = DEFAULT_TOL, route_rtol: float = 1e-9) -> CoreQuantities:
    table = moment_table(model, tol=tol)
    fisher = table(1, 2, 0)
    if not fisher > 0:
        raise ModelError(f"Fisher information must be positive, got {fisher}")
    phi = fisher ** -0.5
    eps = model.eps_n
    j_moments = j_from_moments(phi, table)
    j_def, scale = j_from_definition(model, phi, tol)
    if abs(j_def - j_moments) > route_rtol * max(scale, abs(j_def), 1e-300):
        raise InvariantViolation(
            f"J_n routes disagree: definition {j_def!r} vs moments {j_moments!r}")
    if j_def < -1e-12 * max(1.0, scale):
        raise InvariantViolation(f"J_n = {j_def!r} < 0; derivatives or quadrature are broken")
    return CoreQuantities(
        fisher=fisher,
        phi_n=phi,
        eps_n=eps,
        gamma3=phi**3 * table(2, 3, 0),
        gamma4=phi**4 * table(3, 4, 0),
        j_n=j_def,
        j_n_definition=j_def,
        loss_limit_scale=j_def / eps**2,
        moments=table,
    )


def power_loss_factor(u: float, alpha: float) -> float:
    """u^3 n(u - z_alpha) / 8, the u-profile of the power loss."""
    return u**3 * float(normal_pdf(u - upper_quantile(alpha))) / 8.0


def power_loss_limit(model: IntensityModel, u: float, alpha: float, core: CoreQuantities | None = None) -> float:
    """Finite-n surrogate r_n(u) = u^3 n(u - z_alpha)/8 * eps_n^-2 J_n."""
    if not u > 0:
        raise ValueError("u must be positive")
    core = core or core_quantities(model)
    return power_loss_factor(u, alpha) * core.loss_limit_scale


def loss_scale_extrapolated(model: IntensityModel, base_periods: int = 100, levels: int = 4,
                            tol: float = DEFAULT_TOL) -> float:
    """n -> infinity limit of eps_n^-2 J_n by Richardson extrapolation.

    Uses n = base_periods * 2^k whole periods, k < levels. On such windows
    every integral is a polynomial in the number of periods, so the scaled
    J_n is a rational function of n with an expansion in powers of 1/n.
    """
    period = model.natural_period
    if period is None:
        return core_quantities(model, tol=tol).loss_limit_scale
    table = [core_quantities(model.with_n(base_periods * 2**k * period), tol=tol).loss_limit_scale
             for k in range(levels)]
    for level in range(1, levels):
        factor = 2.0**level
        table = [(factor * table[i + 1] - table[i]) / (factor - 1.0) for i in range(len(table) - 1)]
    return table[0]


# ----------------------------------------------------- worked closed forms
def _one_period(f, period: float, tol: float = 1e-13) -> float:
    return integrate(f, 0.0, period, tol=tol)


def amplitude_integrals(model: IntensityModel):
    """One-period integrals of s^k / (theta0 s + lambda)^m used by the amplitude displays."""
    if model.family != "amplitude":
        raise ModelError("amplitude closed forms need the amplitude family")
    s, th, lam, tau = model.base_signal, model.theta0, model.dark_current, model.period

    def k(p, m):
        return _one_period(lambda x: s(x) ** p / (th * s(x) + lam) ** m, tau)

    return {(p, m): k(p, m) for p, m in ((2, 1), (3, 2), (4, 3), (3, 3))}


def amplitude_cumulants(model: IntensityModel):
    """(gamma3, gamma4, A) from the amplitude-family displays."""
    ints = amplitude_integrals(model)
    tau, n = model.period, model.n
    a = math.sqrt(ints[(2, 1)] / tau)
    gamma3 = ints[(3, 2)] / (tau * a**3 * math.sqrt(n))
    gamma4 = ints[(4, 3)] / (tau * a**4 * n)
    return gamma3, gamma4, a


def amplitude_loss_scale(model: IntensityModel, printed: bool = False) -> float:
    """Limit of eps_n^-2 J_n for the amplitude family.

    ``printed=True`` evaluates the variant whose last numerator carries
    (theta0 s + lambda)^3; that variant is not zero for a constant signal,
    for which both tests are functions of the total count and cannot
    differ in power, so it is exposed only for comparison.
    """
    ints = amplitude_integrals(model)
    tau = model.period
    k21 = ints[(2, 1)]
    cross = ints[(3, 3)] if printed else ints[(3, 2)]
    return tau * (ints[(4, 3)] / k21**2 - cross**2 / k21**3)


def expsine_integrals(model: IntensityModel):
    if model.family != "exp-sine":
        raise ModelError("exp-sine closed forms need the exp-sine family")
    th = model.theta0
    tau = 2.0 * math.pi / th
    out = {}
    for name, g in (("cos2", lambda x: np.cos(th * x) ** 2), ("sin2", lambda x: np.sin(th * x) ** 2),
                    ("cos3", lambda x: np.cos(th * x) ** 3), ("cos4", lambda x: np.cos(th * x) ** 4)):
        out[name] = _one_period(lambda x, g=g: g(x) * np.exp(np.sin(th * x)), tau)
    return out, tau


def expsine_loss_scale(model: IntensityModel) -> float:
    """Limit of eps_n^-2 J_n for S = exp(sin(theta x)): (9 tau / 5) K_sin / K_cos^2."""
    ints, tau = expsine_integrals(model)
    return 9.0 * tau / 5.0 * ints["sin2"] / ints["cos2"] ** 2


def expsine_cumulants(model: IntensityModel):
    """Leading-order (gamma3, gamma4, C) from the frequency-parameter displays."""
    ints, tau = expsine_integrals(model)
    n = model.n
    c = (ints["cos2"] / (3.0 * tau)) ** -0.5
    gamma3 = c**3 / (4.0 * tau * math.sqrt(n)) * ints["cos3"]
    gamma4 = c**4 / (5.0 * tau * n) * ints["cos4"]
    return gamma3, gamma4, c


# --------------------------------------------------------------- diagnostics
def _loglog_slope(xs, ys) -> float:
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


@dataclass(frozen=True)
class B1Report:
    n_list: tuple
    eps: tuple
    values: dict  # r -> tuple of int |f_n|^r S dx over n_list
    constants: dict  # r -> C_r = max_n value / eps^(r-2)
    slopes: dict  # r -> slope of log value against log eps


def check_B1(model: IntensityModel, n_list, tol: float = DEFAULT_TOL) -> B1Report:
    """Moment condition on f_n = phi_n Sdot / S at theta0 across window lengths."""
    n_list = [float(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing with at least three entries")
    values = {3: [], 4: [], 5: []}
    eps = []
    for n in n_list:
        m = model.with_n(n)
        phi = moment_I(m, 1, 2, tol=tol) ** -0.5

        def f(x, m=m, phi=phi):
            s, s1 = _derivs_at_null(m, x, 1)
            a = np.abs(phi * s1 / s)
            return np.vstack([a**3 * s, a**4 * s, a**5 * s])

        for r, v in zip((3, 4, 5), _integrate_model(m, f, tol)):
            values[r].append(float(v))
        eps.append(m.eps_n)
    constants = {r: max(v / e ** (r - 2) for v, e in zip(values[r], eps)) for r in values}
    slopes = {r: _loglog_slope(eps, values[r]) for r in values}
    return B1Report(tuple(n_list), tuple(eps), {r: tuple(v) for r, v in values.items()}, constants, slopes)


@dataclass(frozen=True)
class D3Report:
    n_list: tuple
    ratios: dict  # label -> tuple of scaled integrals, one per n
    bounded: bool
    growth: dict  # label -> log-log slope of the ratio against n


def check_D3(model: IntensityModel, n_list, tol: float = DEFAULT_TOL, growth_tol: float = 0.1) -> D3Report:
    """Envelope integrals of the D3 condition, each divided by its eps_n power.

    Labels ``f1^k`` hold phi^k int f_1^k / f_0^(k-1) / eps^(k-2), labels
    ``fj^2`` hold phi^(2j) int f_j^2 / f_0 / eps^(2j-2). A sequence counts as
    bounded when its log-log slope in n does not exceed ``growth_tol``.
    """
    n_list = [float(n) for n in n_list]
    labels = [f"f1^{k}" for k in (2, 3, 4)] + [f"f{j}^2" for j in (2, 3, 4)]
    ratios = {lab: [] for lab in labels}
    for n in n_list:
        m = model.with_n(n)
        phi = moment_I(m, 1, 2, tol=tol) ** -0.5
        eps = m.eps_n

        def f(x, m=m):
            f0 = m.floor_values(x)
            f1 = m.envelope_values(1, x)
            rows = [f1**k / f0 ** (k - 1) for k in (2, 3, 4)]
            rows += [m.envelope_values(j, x) ** 2 / f0 for j in (2, 3, 4)]
            return np.vstack(rows)

        vals = integrate(f, m.domain.lower, m.domain.upper, tol=tol)
        for i, k in enumerate((2, 3, 4)):
            ratios[f"f1^{k}"].append(float(phi**k * vals[i] / eps ** (k - 2)))
        for i, j in enumerate((2, 3, 4)):
            ratios[f"f{j}^2"].append(float(phi ** (2 * j) * vals[3 + i] / eps ** (2 * j - 2)))
    growth = {}
    for lab, seq in ratios.items():
        seq = np.asarray(seq)
        growth[lab] = _loglog_slope(n_list, seq) if len(n_list) > 1 and np.all(seq > 0) else 0.0
    bounded = all(g <= growth_tol for g in growth.values())
    return D3Report(tuple(n_list), {k: tuple(v) for k, v in ratios.items()}, bounded, growth)
