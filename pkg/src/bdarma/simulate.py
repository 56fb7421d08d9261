"""Simulation from a DARMA(P, Q) process, including the built-in study DGPs.

The generator mirrors the likelihood's conventions exactly: the first
``m = max(P, Q)`` observations are drawn from a symmetric Dirichlet, the
predictor history for those steps is defined as the observed ALR values
(zero moving-average innovations), and each subsequent observation is drawn
from ``Dirichlet(phi_t * alr_inv(eta_t))``.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .errors import ConfigError
from .model import (
    IdentityDesign,
    ModelSpec,
    ParameterVector,
    linear_predictor,
    precision_at,
)
from .simplex import alr, alr_inv, dirichlet_sample

_DGP_RESOURCE = "dgp_matrices.json"


def _load_dgp_data() -> dict:
    text = resources.files("bdarma.data").joinpath(_DGP_RESOURCE).read_text()
    return json.loads(text)


def dgp_file_bytes() -> bytes:
    """Raw bytes of the bundled coefficient file (for checksum verification)."""
    return resources.files("bdarma.data").joinpath(_DGP_RESOURCE).read_bytes()


def builtin_dgp(name: str) -> tuple[ModelSpec, ParameterVector]:
    """The six-part DARMA(2,1) study processes: ``main`` or ``supplementary``.

    Both use an identity mean design (per-component ALR intercepts) and a
    constant precision of 500.
    """
    data = _load_dgp_data()
    if name not in ("main", "supplementary"):
        raise ConfigError(f"unknown built-in process {name!r}")
    entry = data[name]
    j = data["n_parts"]
    ar = np.asarray(entry["ar"], dtype=float)
    ma = np.asarray(entry["ma"], dtype=float)
    beta = np.asarray(entry["beta"], dtype=float)
    gamma = np.array([np.log(entry["precision"])])
    spec = ModelSpec(
        n_parts=j, ar_order=ar.shape[0], ma_order=ma.shape[0],
        n_beta=beta.shape[0], n_gamma=1,
    )
    params = ParameterVector(ar=ar, ma=ma, beta=beta, gamma=gamma).check_shapes(spec)
    return spec, params


def simulate(
    spec: ModelSpec,
    params: ParameterVector,
    design,
    n_obs: int,
    rng: np.random.Generator,
    init_concentration: float = 1.0,
) -> np.ndarray:
    """Draw a length-``n_obs`` composition series from the process.

    The first ``max(P, Q)`` rows are Dirichlet(init_concentration) draws.
    Returns an array of shape (n_obs, J) whose rows are strictly positive and
    sum to one.
    """
    params.check_shapes(spec)
    m = spec.max_lag
    if n_obs <= m:
        raise ConfigError(f"n_obs must exceed the max lag ({n_obs} <= {m})")
    if init_concentration <= 0:
        raise ConfigError("init_concentration must be positive")
    j = spec.n_parts
    y = np.empty((n_obs, j))
    alr_hist = np.empty((n_obs, j - 1))
    eta_hist = np.empty((n_obs, j - 1))
    if m > 0:
        y[:m] = dirichlet_sample(np.full(j, init_concentration), rng, size=m)
        alr_hist[:m] = alr(y[:m])
        eta_hist[:m] = alr_hist[:m]
    for t in range(m, n_obs):
        eta_t = linear_predictor(spec, params, design, alr_hist, eta_hist, t)
        phi_t = precision_at(spec, params, design, t)
        mu_t = alr_inv(eta_t)
        y[t] = dirichlet_sample(phi_t * mu_t, rng)
        alr_hist[t] = alr(y[t])
        eta_hist[t] = eta_t
    return y


def simulate_builtin(
    name: str,
    n_obs: int,
    rng: np.random.Generator,
    init_concentration: float = 1.0,
) -> tuple[np.ndarray, ModelSpec, ParameterVector]:
    """Simulate from a built-in process with its identity design."""
    spec, params = builtin_dgp(name)
    design = IdentityDesign(spec.n_parts)
    y = simulate(
        spec, params, design, n_obs, rng, init_concentration=init_concentration
    )
    return y, spec, params
