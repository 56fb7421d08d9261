"""Shared fixtures and numeric helpers for the test suite."""

from __future__ import annotations

import numpy as np

from bdarma.model import IdentityDesign, ModelSpec, ParameterVector
from bdarma.simulate import simulate


def central_difference(f, x, step=1e-6):
    """Central finite-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        hi = x.copy()
        lo = x.copy()
        hi[i] += h
        lo[i] -= h
        grad[i] = (f(hi) - f(lo)) / (2.0 * h)
    return grad


def gradient_rel_error(analytic, numeric):
    """Max-norm relative error between two gradient vectors."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(1.0, float(np.max(np.abs(analytic))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def random_compositions(rng, n, j, concentration=None):
    """Random interior points on the J-simplex via numpy's Dirichlet sampler."""
    if concentration is None:
        concentration = rng.uniform(0.5, 5.0, size=j)
    y = rng.dirichlet(concentration, size=n)
    # keep strictly interior so log-ratio transforms stay well-conditioned
    y = np.maximum(y, 1e-12)
    return y / y.sum(axis=1, keepdims=True)


def stable_parameters(rng, spec, coef_scale=0.25, beta_scale=0.3, phi=300.0):
    """Draw VARMA coefficients small enough that the recursion stays bounded."""
    k = spec.n_alr
    scale = coef_scale / max(1, spec.ar_order + spec.ma_order) / np.sqrt(k)
    ar = [rng.normal(0.0, scale, size=(k, k)) for _ in range(spec.ar_order)]
    ma = [rng.normal(0.0, scale, size=(k, k)) for _ in range(spec.ma_order)]
    beta = rng.normal(0.0, beta_scale, size=spec.n_beta)
    gamma = np.zeros(spec.n_gamma)
    gamma[0] = np.log(phi)
    return ParameterVector(ar=ar, ma=ma, beta=beta, gamma=gamma)


def random_instance(rng, j, p, q, n_obs=30):
    """A simulated series plus the spec/design/params that generated it."""
    spec = ModelSpec(n_parts=j, ar_order=p, ma_order=q,
                     n_beta=j - 1, n_gamma=1)
    design = IdentityDesign(j)
    params = stable_parameters(rng, spec)
    series = simulate(spec, params, design, n_obs, rng)
    return spec, params, design, series
