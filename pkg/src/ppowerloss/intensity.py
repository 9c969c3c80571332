"""Parametric intensity models S(theta, x) on an interval [0, n].

Every built-in family provides closed-form theta-derivatives up to order
four, a thinning majorant, a positive floor f_0 and derivative envelopes
f_1..f_4 valid on the right neighbourhood [theta0, theta0 + delta_theta_max].
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ModelError

FAMILIES = ("homogeneous", "amplitude", "phase", "frequency", "exp-sine", "custom")
MAX_ORDER = 4

# |d^j/dtheta^j exp(sin(theta x))| <= c_j x^j e, from the Faa di Bruno expansion
_EXPSINE_ENVELOPE = (1.0, 1.0, 2.0, 5.0, 15.0)


@dataclass(frozen=True)
class Domain:
    lower: float = 0.0
    upper: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        if not self.upper > self.lower:
            raise ModelError(f"domain upper {self.upper} must exceed lower {self.lower}")
        if self.dimension != 1:
            raise ModelError("only one-dimensional windows are supported")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))


@dataclass(frozen=True)
class TrigSignal:
    """Periodic base signal s(x) = c0 + sum_k a_k cos(k w x) + b_k sin(k w x), w = 2 pi / period."""

    period: float
    offset: float
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.period > 0:
            raise ModelError("signal period must be positive")
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))

    @classmethod
    def cosine(cls, offset: float = 2.0, amplitude: float = 1.0, period: float = 1.0) -> "TrigSignal":
        return cls(period=period, offset=offset, cos_coeffs=(amplitude,))

    def _harmonics(self):
        m = max(len(self.cos_coeffs), len(self.sin_coeffs))
        a = np.zeros(m)
        b = np.zeros(m)
        a[: len(self.cos_coeffs)] = self.cos_coeffs
        b[: len(self.sin_coeffs)] = self.sin_coeffs
        w = 2.0 * math.pi / self.period * np.arange(1, m + 1)
        return a, b, w

    def derivative(self, j: int, x):
        """j-th derivative in x, vectorised over x."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.offset if j == 0 else 0.0)
        a, b, w = self._harmonics()
        for ak, bk, wk in zip(a, b, w):
            # d^j cos(wx) = w^j cos(wx + j pi/2); same shift for sin
            phase = wk * x + j * math.pi / 2.0 if j else wk * x
            if ak:
                out += wk**j * ak * np.cos(phase)
            if bk:
                out += wk**j * bk * np.sin(phase)
        return out

    def __call__(self, x):
        return self.derivative(0, x)

    def sup_bound(self, j: int) -> float:
        """Analytic upper bound on sup |s^(j)|."""
        a, b, w = self._harmonics()
        bound = float(np.sum(w**j * (np.abs(a) + np.abs(b))))
        return bound + (abs(self.offset) if j == 0 else 0.0)

    def lower_bound(self) -> float:
        a, b, _ = self._harmonics()
        return self.offset - float(np.sum(np.abs(a) + np.abs(b)))



Derivatives = tuple[Callable, ...]


@dataclass(frozen=True)
class IntensityModel:
    """Immutable intensity model; build instances with the family constructors below."""

    family: str
    theta0: float
    domain: Domain
    period: float | None = None
    dark_current: float = 0.0
    base_signal: TrigSignal | None = None
    delta_theta_max: float = 1.0
    floor: Callable | None = None
    envelopes: tuple[Callable | None, ...] | None = None
    custom_derivatives: Derivatives | None = None
    custom_majorant: Callable | float | None = None
    custom_name: str | None = None
    eps_override: float | None = None
    periodic_integrands: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}")
        if not math.isfinite(self.theta0):
            raise ModelError("theta0 must be finite")
        if self.dark_current < 0:
            raise ModelError("dark current must be nonnegative")
        if self.delta_theta_max <= 0:
            raise ModelError("delta_theta_max must be positive")
        if self.family in ("amplitude", "phase", "frequency") and self.base_signal is None:
            raise ModelError(f"{self.family} family needs a base signal")
        if self.family == "custom":
            if self.custom_derivatives is None or len(self.custom_derivatives) == 0:
                raise ModelError("custom family needs derivative functions")
        if self.envelopes is not None and len(self.envelopes) != MAX_ORDER:
            raise ModelError("envelopes must list f_1..f_4")

    # ------------------------------------------------------------------ basics
    @property
    def n(self) -> float:
        return self.domain.length

    @property
    def eps_n(self) -> float:
        if self.eps_override is not None:
            return self.eps_override
        return self.n ** -0.5

    @property
    def natural_period(self) -> float | None:
        """Period of x -> S(theta0, x); 2 pi / theta0 for exp-sine."""
        if self.family == "exp-sine":
            return 2.0 * math.pi / self.theta0
        if self.family == "frequency":
            return self.base_signal.period / self.theta0
        return self.period

    @property
    def theta_max(self) -> float:
        return self.theta0 + self.delta_theta_max

    def with_n(self, n: float) -> "IntensityModel":
        """Same model observed on [0, n]."""
        return replace(self, domain=Domain(0.0, float(n)))

    def quadrature_period(self) -> float | None:
        """Period usable by the one-period quadrature shortcut, if any.

        Only families whose every theta-derivative is periodic in x with a
        theta-independent period qualify, and only when n is a whole number
        of periods.
        """
        if not self.periodic_integrands or self.period is None:
            return None
        ratio = self.n / self.period
        if self.domain.lower != 0.0 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            return None
        return self.period

    # ------------------------------------------------------------- evaluation
    def derivative(self, j: int, theta: float, x):
        """S^(j)(theta, x) without domain checks (hot path)."""
        x = np.asarray(x, dtype=float)
        fam = self.family
        lam = self.dark_current
        if fam == "homogeneous":
            if j == 0:
                return np.full(x.shape, float(theta))
            return np.full(x.shape, 1.0 if j == 1 else 0.0)
        if fam == "amplitude":
            s = self.base_signal(x)
            if j == 0:
                return theta * s + lam
            return s if j == 1 else np.zeros(x.shape)
        if fam == "phase":
            out = self.base_signal.derivative(j, theta + x)
            return out + lam if j == 0 else out
        if fam == "frequency":
            out = x**j * self.base_signal.derivative(j, theta * x)
            return out + lam if j == 0 else out
        if fam == "exp-sine":
            return _expsine_derivative(j, theta, x)
        funcs = self.custom_derivatives
        if j >= len(funcs) or funcs[j] is None:
            raise ModelError(f"custom model does not provide derivative of order {j}")
        return np.asarray(funcs[j](theta, x), dtype=float) * np.ones(x.shape)

    def intensity(self, theta: float, x):
        return self.derivative(0, theta, x)

    def period_at(self, theta: float) -> float | None:
        """Period of x -> S(theta, x), if the family is periodic in x."""
        fam = self.family
        if fam in ("amplitude", "phase"):
            return self.base_signal.period
        if fam == "frequency":
            return self.base_signal.period / abs(theta) if theta != 0 else None
        if fam == "exp-sine":
            return 2.0 * math.pi / abs(theta) if theta != 0 else None
        return None

    def score_ratio(self, theta: float, x, known=None):
        """Sdot/S at (theta, x).

        ``known`` may carry (theta_k, S(theta_k, x)) already evaluated at the
        same nodes; families that can reuse it skip the trigonometry.
        """
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "homogeneous":
            return np.full(x.shape, 1.0 / theta)
        if fam == "amplitude":
            s = self._amplitude_signal(x, known)
            return s / (theta * s + self.dark_current)
        if fam == "exp-sine":
            return x * np.cos(theta * x)
        return self.derivative(1, theta, x) / self._intensity_known(theta, x, known)

    def log_ratio(self, theta1: float, theta0: float, x, known=None):
        """ln S(theta1, x) - ln S(theta0, x); ``known`` as in :meth:`score_ratio`."""
        x = np.asarray(x, dtype=float)
        fam = self.family
        if fam == "homogeneous":
            return np.full(x.shape, math.log(theta1 / theta0))
        if fam == "amplitude":
            s = self._amplitude_signal(x, known)
            return np.log1p((theta1 - theta0) * s / (theta0 * s + self.dark_current))
        if fam == "exp-sine":
            return self._log_known(theta1, x, known) - self._log_known(theta0, x, known)
        s0 = self._intensity_known(theta0, x, known)
        return np.log1p((self._intensity_known(theta1, x, known) - s0) / s0)

    def _amplitude_signal(self, x, known):
        if known is not None and known[0] != 0:
            return (known[1] - self.dark_current) / known[0]
        return self.base_signal(x)

    def _intensity_known(self, theta, x, known):
        if known is not None and known[0] == theta:
            return known[1]
        return self.derivative(0, theta, x)

    def _log_known(self, theta, x, known):
        # exp-sine: ln S(theta, x) = sin(theta x)
        if known is not None and known[0] == theta:
            return np.log(known[1])
        return np.sin(theta * x)

    def majorant(self, theta: float) -> float:
        """Finite upper bound on sup_x S(theta, x) used for thinning."""
        fam = self.family
        if fam == "homogeneous":
            value = max(float(theta), 0.0)
        elif fam == "amplitude":
            smin, smax = _grid_range(self.base_signal)
            peak = max(theta * smax, theta * smin)
            value = max(peak, 0.0) * 1.001 + self.dark_current
        elif fam in ("phase", "frequency"):
            value = _grid_range(self.base_signal)[1] * 1.001 + self.dark_current
        elif fam == "exp-sine":
            value = math.e
        else:
            m = self.custom_majorant
            if m is None:
                raise ModelError("custom model has no majorant; thinning impossible")
            value = float(m(theta)) if callable(m) else float(m)
        return value

    # --------------------------------------------------------------- envelopes
    def floor_values(self, x):
        x = np.asarray(x, dtype=float)
        if self.floor is not None:
            return np.asarray(self.floor(x), dtype=float) * np.ones(x.shape)
        fam = self.family
        if fam == "homogeneous":
            return np.full(x.shape, min(self.theta0, self.theta_max))
        if fam == "amplitude":
            s = self.base_signal(x)
            return np.minimum(self.theta0 * s, self.theta_max * s) + self.dark_current
        if fam in ("phase", "frequency"):
            return np.full(x.shape, self.base_signal.lower_bound() + self.dark_current)
        if fam == "exp-sine":
            return np.full(x.shape, math.exp(-1.0))
        raise ModelError("custom model must supply a floor function")

    def envelope_values(self, j: int, x):
        """f_j(x) for j = 1..4."""
        if not 1 <= j <= MAX_ORDER:
            raise ModelError("envelopes are indexed 1..4")
        x = np.asarray(x, dtype=float)
        if self.envelopes is not None and self.envelopes[j - 1] is not None:
            return np.asarray(self.envelopes[j - 1](x), dtype=float) * np.ones(x.shape)
        fam = self.family
        if fam == "homogeneous":
            return np.full(x.shape, 1.0 if j == 1 else 0.0)
        if fam == "amplitude":
            return np.abs(self.base_signal(x)) if j == 1 else np.zeros(x.shape)
        if fam == "phase":
            return np.full(x.shape, self.base_signal.sup_bound(j))
        if fam == "frequency":
            return np.abs(x) ** j * self.base_signal.sup_bound(j)
        if fam == "exp-sine":
            return _EXPSINE_ENVELOPE[j] * np.abs(x) ** j * math.e
        raise ModelError("custom model must supply envelope functions")


@functools.lru_cache(maxsize=64)
def _grid_range(signal: TrigSignal, nodes: int = 100_000) -> tuple[float, float]:
    values = signal(np.linspace(0.0, signal.period, nodes))
    return float(np.min(values)), float(np.max(values))


def _expsine_derivative(j: int, theta: float, x):
    s = np.exp(np.sin(theta * x))
    if j == 0:
        return s
    g1 = x * np.cos(theta * x)
    if j == 1:
        return g1 * s
    g2 = -(x**2) * np.sin(theta * x)
    if j == 2:
        return (g2 + g1**2) * s
    g3 = -(x**3) * np.cos(theta * x)
    if j == 3:
        return (g3 + 3.0 * g1 * g2 + g1**3) * s
    g4 = x**4 * np.sin(theta * x)
    return (g4 + 4.0 * g1 * g3 + 3.0 * g2**2 + 6.0 * g1**2 * g2 + g1**4) * s


# ----------------------------------------------------------------- constructors
def homogeneous(theta0: float = 1.0, n: float = 100.0, **kw) -> IntensityModel:
    return IntensityModel("homogeneous", float(theta0), Domain(0.0, float(n)), periodic_integrands=False, **kw)


def amplitude(theta0: float = 1.0, n: float = 50.0, dark_current: float = 0.5,
              signal: TrigSignal | None = None, **kw) -> IntensityModel:
    """S(theta, x) = theta s(x) + lambda."""
    signal = signal or TrigSignal.cosine()
    return IntensityModel("amplitude", float(theta0), Domain(0.0, float(n)), period=signal.period,
                          dark_current=float(dark_current), base_signal=signal,
                          periodic_integrands=True, **kw)


def phase(theta0: float = 0.0, n: float = 50.0, dark_current: float = 0.5,
          signal: TrigSignal | None = None, **kw) -> IntensityModel:
    """S(theta, x) = s(theta + x) + lambda."""
    signal = signal or TrigSignal.cosine()
    return IntensityModel("phase", float(theta0), Domain(0.0, float(n)), period=signal.period,
                          dark_current=float(dark_current), base_signal=signal,
                          periodic_integrands=True, **kw)


def frequency(theta0: float = 1.0, n: float = 50.0, dark_current: float = 0.5,
              signal: TrigSignal | None = None, **kw) -> IntensityModel:
    """S(theta, x) = s(theta x) + lambda."""
    signal = signal or TrigSignal.cosine()
    return IntensityModel("frequency", float(theta0), Domain(0.0, float(n)),
                          period=signal.period / float(theta0), dark_current=float(dark_current),
                          base_signal=signal, periodic_integrands=False, **kw)


def exp_sine(theta0: float = 1.0, n: float | None = None, periods: int = 100, **kw) -> IntensityModel:
    """S(theta, x) = exp(sin(theta x)); default window is `periods` whole periods."""
    if n is None:
        n = periods * 2.0 * math.pi / theta0
    return IntensityModel("exp-sine", float(theta0), Domain(0.0, float(n)),
                          period=2.0 * math.pi / float(theta0), periodic_integrands=False, **kw)


def custom(theta0: float, n: float, derivatives: Sequence[Callable], majorant=None,
           floor=None, envelopes=None, name: str | None = None, **kw) -> IntensityModel:
    """User-supplied derivatives S^(0..4)(theta, x); no numerical differentiation is done."""
    return IntensityModel("custom", float(theta0), Domain(0.0, float(n)),
                          custom_derivatives=tuple(derivatives), custom_majorant=majorant,
                          floor=floor, envelopes=tuple(envelopes) if envelopes is not None else None,
                          custom_name=name, **kw)


# ------------------------------------------------------------------ operations
def eval_derivative(model: IntensityModel, j: int, theta: float, x):
    """Checked evaluation of S^(j)(theta, x)."""
    if not isinstance(j, (int, np.integer)) or j < 0 or j > MAX_ORDER:
        raise ModelError(f"derivative order must be in 0..{MAX_ORDER}, got {j}")
    if not model.domain.contains(x):
        raise ModelError("x outside the observation window")
    tol = 1e-12 * max(1.0, abs(model.theta0))
    if theta < model.theta0 - tol or theta > model.theta_max + tol:
        raise ModelError(
            f"theta={theta} outside the right neighbourhood [{model.theta0}, {model.theta_max}]")
    out = model.derivative(j, theta, x)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EnvelopeReport:
    ok: bool
    worst_violation: float


def validate_envelopes(model: IntensityModel, theta_grid=None, x_grid=None) -> EnvelopeReport:
    """Check S >= f_0 > 0 and |S^(j)| <= f_j (j = 1..4) on a theta x x grid.

    ``worst_violation`` is the largest deficit max(f_0 - S, |S^(j)| - f_j)
    over all nodes, so it is <= 0 exactly when every inequality holds.
    Defaults: 16 theta nodes on the right neighbourhood, 2048 x nodes.
    """
    if theta_grid is None:
        theta_grid = np.linspace(model.theta0, model.theta_max, 16)
    if x_grid is None:
        x_grid = np.linspace(model.domain.lower, model.domain.upper, 2048)
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if theta_grid.size == 0 or x_grid.size == 0:
        raise ModelError("envelope validation needs nonempty grids")
    if not model.domain.contains(x_grid):
        raise ModelError("x grid leaves the observation window")

    f0 = model.floor_values(x_grid)
    worst = float(np.max(-f0))  # floor itself must be positive
    for theta in theta_grid:
        s = model.derivative(0, theta, x_grid)
        worst = max(worst, float(np.max(f0 - s)))
        for j in range(1, MAX_ORDER + 1):
            dj = np.abs(model.derivative(j, theta, x_grid))
            worst = max(worst, float(np.max(dj - model.envelope_values(j, x_grid))))
    # floor positivity is strict; equality counts as a violation
    ok = worst <= 0.0 and bool(np.all(f0 > 0))
    return EnvelopeReport(ok=ok, worst_violation=worst)
