"""Score test versus Neyman-Pearson test for inhomogeneous Poisson processes.

Quadrature of the deterministic quantities, Edgeworth expansions, a
reproducible thinning sampler and a paired Monte Carlo harness for the power
loss of the score test at local alternatives.
"""

__version__ = "0.1.0"
