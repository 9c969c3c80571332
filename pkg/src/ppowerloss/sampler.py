"""Reproducible thinning sampler for inhomogeneous Poisson processes on [0, n].

Replication ``i`` of master seed ``m`` draws from a Philox4x64 stream with
key ``m`` and counter block starting at ``(0, i, 0, 0)``. Streams of
different replications occupy disjoint counter ranges, so any replication
can be regenerated on its own, in any order, by any worker.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelError
from .intensity import Domain, IntensityModel

GENERATOR = "Philox4x64-10"
GENERATOR_VERSION = f"numpy.random.Philox/{np.__version__}; key=master_seed; counter=(0, replication_index, 0, 0); v1"
_U64 = 2**64


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replication_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < _U64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not 0 <= int(self.replication_index) < _U64:
            raise ValueError("replication_index must be a nonnegative 64-bit integer")


def replication_generator(master_seed: int, replication_index: int) -> np.random.Generator:
    """Independent generator for one replication (pure function of its arguments)."""
    bitgen = np.random.Philox(key=int(master_seed), counter=[0, int(replication_index), 0, 0])
    return np.random.Generator(bitgen)


class _StreamCursor:
    """Repositions one Philox generator at successive replication streams.

    Resetting the state is several times cheaper than constructing a new
    bit generator and yields the same stream as :func:`replication_generator`.
    """

    def __init__(self, master_seed: int):
        self.bitgen = np.random.Philox(key=int(master_seed))
        self.generator = np.random.Generator(self.bitgen)
        base = self.bitgen.state
        self._key = base["state"]["key"].copy()
        self._template = {k: v for k, v in base.items() if k != "state"}

    def at(self, replication_index: int) -> np.random.Generator:
        state = dict(self._template)
        state["state"] = {"counter": np.array([0, replication_index, 0, 0], dtype=np.uint64), "key": self._key}
        state["buffer"] = np.zeros(4, dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self.bitgen.state = state
        return self.generator


@dataclass(frozen=True, eq=False)
class Realization:
    points: np.ndarray
    domain: Domain
    theta_used: float
    seed_used: int
    replication_index: int = 0

    def __len__(self):
        return int(self.points.size)

    def __eq__(self, other):
        if not isinstance(other, Realization):
            return NotImplemented
        return (self.domain == other.domain and self.theta_used == other.theta_used
                and self.seed_used == other.seed_used and np.array_equal(self.points, other.points))


BINS_PER_PERIOD = 32
_BIN_NODES = 65
_MARGIN = 1.001


@dataclass(frozen=True)
class ThinningEnvelope:
    """Piecewise-constant bound on S(theta, .) used to propose candidates.

    When x -> S(theta, x) has period P and the window holds J >= 1 whole
    periods, each period is cut into equal bins and the bound on bin k is the
    (slightly inflated) maximum of S over that bin, shared by all periods.
    The leftover piece after J periods, or the whole window for aperiodic
    models, uses the constant majorant.
    """

    lower: float
    period: float
    periods: int
    levels: np.ndarray  # bound on each bin type, then the leftover bound
    remainder: float

    @property
    def bins(self) -> int:
        return self.levels.size - 1

    def rates(self) -> np.ndarray:
        width = self.period / self.bins if self.bins else 0.0
        return np.append(self.levels[:-1] * self.periods * width, self.levels[-1] * self.remainder)


def thinning_envelope(model: IntensityModel, theta: float, bins: int = BINS_PER_PERIOD) -> ThinningEnvelope:
    lower, length = model.domain.lower, model.domain.length
    smax = model.majorant(theta)
    period = model.period_at(theta)
    whole = int(math.floor(length / period * (1.0 + 1e-12))) if period else 0
    if not period or whole < 1 or bins < 1:
        return ThinningEnvelope(lower, length, 0, np.array([smax]), length)
    width = period / bins
    nodes = lower + width * (np.arange(bins)[:, None] + np.linspace(0.0, 1.0, _BIN_NODES)[None, :])
    levels = np.max(model.intensity(theta, nodes.ravel()).reshape(bins, _BIN_NODES), axis=1)
    levels = np.minimum(np.maximum(levels, 0.0) * _MARGIN, smax)
    remainder = max(length - whole * period, 0.0)
    return ThinningEnvelope(lower, period, whole, np.append(levels, smax), remainder)


def _draws(rates: np.ndarray, gen: np.random.Generator):
    """Random draws of one replication.

    Draw order: one Poisson count per bin type (and the leftover piece),
    then k pairs of uniforms (position, acceptance), one pair per candidate.
    """
    counts = gen.poisson(rates)
    return counts, gen.random(2 * int(counts.sum()))


def _place(env: ThinningEnvelope, counts: np.ndarray, uniforms: np.ndarray):
    """Candidates, bounds, acceptance uniforms and owners for stacked replications.

    ``counts`` has one row per replication, ``uniforms`` concatenates their
    uniform draws in the same order.
    """
    counts = np.atleast_2d(counts)
    owner = np.repeat(np.arange(counts.shape[0]), counts.sum(axis=1))
    kind = np.repeat(np.tile(np.arange(counts.shape[1]), counts.shape[0]), counts.ravel())
    pos, acc = uniforms[0::2], uniforms[1::2]
    if env.bins and env.remainder == 0.0:
        t = pos * env.periods
        j = np.floor(t)
        x = env.lower + env.period * (j + (kind + (t - j)) / env.bins)
    else:
        x = np.empty(owner.size)
        band = kind < env.bins
        if env.bins:
            t = pos[band] * env.periods
            j = np.floor(t)
            x[band] = env.lower + env.period * (j + (kind[band] + (t - j)) / env.bins)
        x[~band] = env.lower + env.periods * env.period + env.remainder * pos[~band]
    return x, env.levels[kind], acc, owner


def _thin(model: IntensityModel, theta: float, x: np.ndarray, bound: np.ndarray, acc: np.ndarray):
    """Acceptance mask and S(theta, x) at the candidates."""
    if x.size == 0:
        return np.zeros(x.shape, dtype=bool), np.zeros(x.shape)
    s = model.intensity(theta, x)
    if np.any(s > bound):
        raise ModelError(f"intensity {float(np.max(s - bound))} above the thinning bound")
    if np.any(s < 0):
        raise ModelError("negative intensity encountered while thinning")
    return acc * bound < s, s


def sample(model: IntensityModel, theta: float, seed: SeedSpec) -> Realization:
    """One realization under S(theta, .) by Lewis-Shedler thinning."""
    env = thinning_envelope(model, theta)
    counts, uniforms = _draws(env.rates(), replication_generator(seed.master_seed, seed.replication_index))
    x, bound, acc, _ = _place(env, counts, uniforms)
    keep, _ = _thin(model, theta, x, bound, acc)
    return Realization(np.sort(x[keep]), model.domain, float(theta), int(seed.master_seed),
                       int(seed.replication_index))


def iter_point_blocks(model: IntensityModel, theta: float, master_seed: int, start: int, stop: int,
                      chunk: int = 512):
    """Yield (first_index, count, points, owner, intensity) for consecutive replication blocks.

    ``points`` holds the accepted events of replications first_index ..
    first_index + count - 1 in generation order, ``owner`` their offset
    within the block and ``intensity`` the values S(theta, points). Point
    sets equal those of :func:`sample` (up to order).
    """
    env = thinning_envelope(model, theta)
    rates = env.rates()
    cursor = _StreamCursor(master_seed)
    for first in range(start, stop, chunk):
        last = min(stop, first + chunk)
        draws = [_draws(rates, cursor.at(i)) for i in range(first, last)]
        x, bound, acc, owner = _place(env, np.vstack([d[0] for d in draws]),
                                      np.concatenate([d[1] for d in draws]))
        keep, s = _thin(model, theta, x, bound, acc)
        yield first, last - first, x[keep], owner[keep], s[keep]


def count(realization: Realization, sub_lower: float, sub_upper: float) -> int:
    """Number of events in [sub_lower, sub_upper)."""
    dom = realization.domain
    if sub_lower < dom.lower or sub_upper > dom.upper or sub_upper < sub_lower:
        raise ValueError(f"[{sub_lower}, {sub_upper}) is not inside [{dom.lower}, {dom.upper}]")
    pts = realization.points
    return int(np.searchsorted(pts, sub_upper, side="left") - np.searchsorted(pts, sub_lower, side="left"))


def realization_csv(realization: Realization) -> str:
    buf = io.StringIO()
    buf.write("x\n")
    for v in realization.points:
        buf.write(f"{v:.17g}\n")
    return buf.getvalue()


def write_csv(realization: Realization, path) -> Path:
    path = Path(path)
    path.write_text(realization_csv(realization))
    return path
