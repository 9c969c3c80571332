"""Batch evaluation of the score and log-likelihood-ratio statistics.

Replications are generated in fixed-size chunks. Each chunk is a pure
function of (model, theta, master seed, index range), so chunks can be
farmed out to worker processes and reassembled in index order; results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .intensity import IntensityModel
from .moments import moment_I
from .quadrature import DEFAULT_TOL, integrate
from .sampler import iter_point_blocks

CHUNK = 512


def theta_at(model: IntensityModel, u: float, phi: float) -> float:
    """theta_u = theta0 + phi_n u, checked against the model's neighbourhood."""
    theta = model.theta0 + phi * u
    if abs(theta - model.theta0) > model.delta_theta_max:
        raise ModelError(f"theta_u = {theta} leaves the neighbourhood of radius "
                         f"{model.delta_theta_max} around theta0 = {model.theta0}")
    return theta


@dataclass(frozen=True)
class StatKernel:
    """Per-event terms and compensators of Delta_n(theta0) and Lambda_n(u)."""

    model: IntensityModel
    phi: float
    us: tuple
    thetas: tuple
    score_comp: float
    llr_comps: tuple

    @classmethod
    def build(cls, model: IntensityModel, us=(), phi: float | None = None, tol: float = DEFAULT_TOL):
        if phi is None:
            phi = moment_I(model, 1, 2, tol=tol) ** -0.5
        us = tuple(float(u) for u in us)
        thetas = tuple(theta_at(model, u, phi) for u in us)
        lo, hi = model.domain.lower, model.domain.upper
        period = model.quadrature_period()
        score_comp = phi * integrate(lambda x: model.derivative(1, model.theta0, x), lo, hi,
                                     tol=tol, period=period)
        comps = []
        for th in thetas:
            if th == model.theta0:
                comps.append(0.0)
                continue
            comps.append(integrate(lambda x, th=th: model.intensity(th, x) - model.intensity(model.theta0, x),
                                   lo, hi, tol=tol, period=period))
        return cls(model, float(phi), us, thetas, float(score_comp), tuple(comps))

    def score_terms(self, x, known=None):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.phi * self.model.score_ratio(self.model.theta0, x, known)
        if not np.all(np.isfinite(out)):
            raise ModelError("S(theta0, x) = 0 at an event; the score statistic is undefined")
        return out

    def llr_terms(self, k: int, x, known=None):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.model.log_ratio(self.thetas[k], self.model.theta0, x, known)
        if not np.all(np.isfinite(out)):
            raise ModelError("nonpositive intensity at an event; the likelihood ratio is undefined")
        return out

    def evaluate(self, points, owner, count: int, known=None):
        """Statistics of `count` replications whose events are tagged by `owner`.

        ``known`` optionally carries (theta, S(theta, points)) from the sampler.
        """
        delta = np.bincount(owner, weights=self.score_terms(points, known), minlength=count) - self.score_comp
        llr = np.empty((len(self.us), count))
        for k in range(len(self.us)):
            if self.thetas[k] == self.model.theta0:
                llr[k] = 0.0
            else:
                llr[k] = np.bincount(owner, weights=self.llr_terms(k, points, known), minlength=count) - self.llr_comps[k]
        return delta, llr


def _run_range(kernel: StatKernel, theta: float, master_seed: int, start: int, stop: int):
    delta = np.empty(stop - start)
    llr = np.empty((len(kernel.us), stop - start))
    blocks = iter_point_blocks(kernel.model, theta, master_seed, start, stop, CHUNK)
    for first, count, points, owner, intensity in blocks:
        i = first - start
        delta[i:i + count], llr[:, i:i + count] = kernel.evaluate(points, owner, count, (theta, intensity))
    return delta, llr


def simulate_statistics(kernel: StatKernel, theta: float, master_seed: int, start: int, stop: int,
                        workers: int = 1):
    """Delta_n and Lambda_n(u) for every u of the kernel over replications [start, stop).

    Returns (delta, llr) with shapes (reps,) and (len(us), reps). The output
    does not depend on ``workers``.
    """
    if stop < start:
        raise ValueError("stop must not precede start")
    workers = max(1, int(workers))
    if workers == 1 or stop - start <= CHUNK:
        return _run_range(kernel, theta, master_seed, start, stop)
    # ranges aligned to the chunk grid so every worker forms the same blocks
    per = max(CHUNK, int(math.ceil((stop - start) / (4 * workers) / CHUNK)) * CHUNK)
    bounds = [(a, min(stop, a + per)) for a in range(start, stop, per)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_range, [kernel] * len(bounds), [theta] * len(bounds),
                              [master_seed] * len(bounds), [a for a, _ in bounds], [b for _, b in bounds]))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts], axis=1)
