"""Two-term Edgeworth expansion of a compensated Poisson integral and its quantile."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ModelError
from .intensity import IntensityModel
from .moments import moment_I, normal_pdf, upper_quantile
from .quadrature import DEFAULT_TOL, integrate


def hermite(k: int, y):
    """Probabilists' Hermite polynomials H2, H3, H5."""
    y = np.asarray(y, dtype=float)
    if k == 2:
        out = y**2 - 1.0
    elif k == 3:
        out = y**3 - 3.0 * y
    elif k == 5:
        out = y**5 - 10.0 * y**3 + 15.0 * y
    else:
        raise ValueError(f"Hermite polynomial of order {k} is not supported (use 2, 3 or 5)")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExpansionInput:
    gamma3: float
    gamma4: float
    eps_n: float = float("nan")

    def __post_init__(self):
        if abs(self.gamma3) > 0.5 or abs(self.gamma4) > 0.5:
            warnings.warn("cumulants above 0.5: the expansion is unlikely to be accurate", stacklevel=3)


def edgeworth_correction(y, inp: ExpansionInput):
    """Sum of the three correction terms (without the density factor's sign)."""
    g3, g4 = inp.gamma3, inp.gamma4
    return (g3 / 6.0) * hermite(2, y) + (g4 / 24.0) * hermite(3, y) + (g3**2 / 72.0) * hermite(5, y)


def edgeworth_cdf(y, inp: ExpansionInput, with_flag: bool = False):
    """N(y) - n(y) [g3/6 H2 + g4/24 H3 + g3^2/72 H5], not clamped to [0, 1].

    With ``with_flag`` a second value reports whether any output left [0, 1].
    """
    y = np.asarray(y, dtype=float)
    value = ndtr(y) - normal_pdf(y) * edgeworth_correction(y, inp)
    value = float(value) if value.ndim == 0 else value
    if with_flag:
        return value, bool(np.any((np.asarray(value) < 0.0) | (np.asarray(value) > 1.0)))
    return value


def edgeworth_quantile(alpha: float, inp: ExpansionInput) -> float:
    """c = z_a + g3/6 H2(z_a) + g4/24 H3(z_a) + g3^2/72 H5(z_a)."""
    z = upper_quantile(alpha)
    return z + float(edgeworth_correction(z, inp))


def quantile_residual_leading(alpha: float, gamma3: float) -> float:
    """Leading gamma3^2 term of edgeworth_cdf(edgeworth_quantile(a)) - (1 - a).

    Substituting the quantile back into the expansion leaves
    -gamma3^2 n(z) z H2(z) (4 - H2(z)) / 72 plus O(|gamma3|^3 + gamma4^2 + |gamma3 gamma4|).
    """
    z = upper_quantile(alpha)
    h2 = z * z - 1.0
    return -(gamma3**2) * float(normal_pdf(z)) * z * h2 * (4.0 - h2) / 72.0


# ------------------------------------------------------------------------ B2
def _cubic(c0: float, constants: dict) -> float:
    return constants[3] / 6.0 * c0 + constants[4] / 24.0 * c0**2 + constants[5] / 120.0 * c0**3 - 0.5


def default_c0(constants: dict) -> float:
    """Largest c0 on a coarse grid with C3 c/3! + C4 c^2/4! + C5 c^3/5! < 1/2."""
    grid = np.round(np.arange(0.01, 50.0, 0.01), 2)
    ok = [c for c in grid if _cubic(c, constants) < 0]
    if not ok:
        raise ModelError("no admissible c0 on the default grid")
    return float(ok[-1])


@dataclass(frozen=True)
class B2Report:
    inf_value: float
    bound: float
    ok: bool
    t_at_inf: float
    t_range: tuple
    c0: float


def _null_kernel(model: IntensityModel):
    phi = moment_I(model, 1, 2) ** -0.5

    def kernel(x):
        return phi * model.derivative(1, model.theta0, x) / model.derivative(0, model.theta0, x)

    return kernel


def check_B2(model: IntensityModel, normalized_kernel=None, eps_n: float | None = None,
             c0: float | None = None, gamma_exp: float = 2.5, constants: dict | None = None,
             t_points: int = 10_000, tol: float = DEFAULT_TOL) -> B2Report:
    """Grid infimum of t -> int sin^2(t f_n) S dx over (c0/(2 eps), 1/(2 eps^2)).

    ``normalized_kernel`` defaults to the score kernel phi_n Sdot/S at theta0;
    ``constants`` are the B1 constants C_3..C_5 (measured at this n when
    omitted). The infimum is taken over a geometric grid of ``t_points`` values.
    """
    if gamma_exp < 2.5:
        raise ValueError("gamma must be at least 5/2")
    eps = model.eps_n if eps_n is None else float(eps_n)
    kernel = normalized_kernel or _null_kernel(model)
    lower, upper = model.domain.lower, model.domain.upper
    period = model.quadrature_period()

    def s0(x):
        return model.derivative(0, model.theta0, x)

    if constants is None:
        vals = integrate(lambda x: np.vstack([np.abs(kernel(x)) ** r * s0(x) for r in (3, 4, 5)]),
                         lower, upper, tol=tol, period=period)
        constants = {r: float(v) / eps ** (r - 2) for r, v in zip((3, 4, 5), vals)}
    if c0 is None:
        c0 = default_c0(constants)
    elif _cubic(c0, constants) >= 0:
        raise ValueError(f"c0={c0} violates the cubic constraint with C_r={constants}")

    t_lo, t_hi = c0 / (2.0 * eps), 1.0 / (2.0 * eps**2)
    if not t_lo < t_hi:
        raise ValueError(f"empty t-range ({t_lo}, {t_hi}); eps_n too large")
    ts = np.geomspace(t_lo, t_hi, t_points + 2)[1:-1]

    # fixed composite rule resolving the fastest oscillation t_hi * |f'|
    span_hi = lower + period if period is not None else upper
    scale = (upper - lower) / (span_hi - lower)
    dense = np.linspace(lower, span_hi, 20_001)
    variation = float(np.sum(np.abs(np.diff(kernel(dense)))))
    panels = int(max(math.ceil((span_hi - lower) / 2.0), math.ceil(t_hi * variation / 2.0), 4))
    gx, gw = np.polynomial.legendre.leggauss(32)
    h = (span_hi - lower) / panels
    nodes = (lower + h * np.arange(panels)[:, None] + 0.5 * h * (gx[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * gw, panels) * scale
    fx = kernel(nodes)
    sw = s0(nodes) * weights
    values = np.empty(ts.size)
    chunk = max(1, (1 << 22) // nodes.size)
    for start in range(0, ts.size, chunk):
        block = ts[start:start + chunk]
        values[start:start + chunk] = np.sin(block[:, None] * fx[None, :]) ** 2 @ sw
    i = int(np.argmin(values))
    bound = gamma_exp * math.log(1.0 / eps)
    inf_value = float(values[i])
    return B2Report(inf_value=inf_value, bound=bound, ok=inf_value >= bound, t_at_inf=float(ts[i]),
                    t_range=(t_lo, t_hi), c0=float(c0))
