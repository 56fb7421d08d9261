"""Hamiltonian sampler tests: integrator mechanics, calibration, diagnostics.

Oracles: closed-form Gaussian moments, exact reversibility/energy algebra of
the leapfrog integrator, the Kolmogorov-Smirnov test against the normal CDF,
Neal's funnel as a known pathological geometry, and hand-built chain arrays
with known convergence statistics.
"""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from bdarma.errors import ConfigError, SamplerError
from bdarma.sampler import (
    DESK_PROFILE,
    PAPER_PROFILE,
    PosteriorDraws,
    SamplerConfig,
    _kinetic,
    _leapfrog,
    diagnostics,
    ess_bulk,
    load_draws_csv,
    profile_config,
    sample,
    save_draws_csv,
    split_rhat,
    warmup_windows,
)


class GaussianTarget:
    """Multivariate normal with dense precision; gradient in closed form."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.precision = np.linalg.inv(np.asarray(cov, dtype=float))
        self.dim = self.mean.shape[0]

    def logp_and_grad(self, u):
        d = u - self.mean
        pd = self.precision @ d
        return float(-0.5 * d @ pd), -pd


class StandardNormal:
    def __init__(self, dim):
        self.dim = dim

    def logp_and_grad(self, u):
        return float(-0.5 * u @ u), -u


class Funnel:
    """Neal's funnel: v ~ N(0,3), x_i | v ~ N(0, exp(v/2))."""

    def __init__(self, dim=10):
        self.dim = dim

    def logp_and_grad(self, u):
        v = u[0]
        x = u[1:]
        inv_var = np.exp(-v)
        lp = -0.5 * v**2 / 9.0 - 0.5 * (self.dim - 1) * v - 0.5 * inv_var * (x @ x)
        grad = np.empty_like(u)
        grad[0] = -v / 9.0 - 0.5 * (self.dim - 1) + 0.5 * inv_var * (x @ x)
        grad[1:] = -inv_var * x
        return float(lp), grad


def _correlated_target(rho=0.9):
    return GaussianTarget([0.0, 0.0], [[1.0, rho], [rho, 1.0]])


# ---------------------------------------------------------------------------
# Integrator mechanics


def test_leapfrog_is_reversible():
    rng = np.random.default_rng(3)
    target = _correlated_target()
    inv_mass = np.array([1.3, 0.7])
    for trial in range(20):
        q0 = rng.normal(size=2)
        p0 = rng.normal(size=2)
        _, grad = target.logp_and_grad(q0)
        q, p, grad_c = q0.copy(), p0.copy(), grad
        for _ in range(25):
            q, p, grad_c, _ = _leapfrog(target, q, p, grad_c, 0.05, inv_mass)
        p = -p
        for _ in range(25):
            q, p, grad_c, _ = _leapfrog(target, q, p, grad_c, 0.05, inv_mass)
        assert np.max(np.abs(q - q0)) < 1e-8
        assert np.max(np.abs(-p - p0)) < 1e-8


def test_leapfrog_conserves_energy_at_small_step():
    rng = np.random.default_rng(5)
    target = StandardNormal(10)
    inv_mass = np.ones(10)
    for trial in range(20):
        q = rng.normal(size=10)
        p = rng.normal(size=10)
        lp, grad = target.logp_and_grad(q)
        h0 = -lp + _kinetic(p, inv_mass)
        q2, p2, _, lp2 = _leapfrog(target, q, p, grad, 1e-3, inv_mass)
        h1 = -lp2 + _kinetic(p2, inv_mass)
        assert abs(h1 - h0) < 1e-4


# ---------------------------------------------------------------------------
# Sampling behaviour


def test_sampling_is_deterministic_given_seed():
    target = _correlated_target()
    cfg = SamplerConfig(chains=2, warmup=60, sampling=60, seed=42)
    a = sample(target, cfg)
    b = sample(target, cfg)
    assert np.array_equal(a.draws, b.draws)
    assert np.array_equal(a.divergences, b.divergences)
    c = sample(target, SamplerConfig(chains=2, warmup=60, sampling=60, seed=43))
    assert not np.array_equal(a.draws, c.draws)


def test_parallel_chains_match_serial():
    target = _correlated_target()
    serial = sample(target, SamplerConfig(chains=2, warmup=60, sampling=60,
                                          seed=9, jobs=1))
    parallel = sample(target, SamplerConfig(chains=2, warmup=60, sampling=60,
                                            seed=9, jobs=2))
    assert np.array_equal(serial.draws, parallel.draws)


def test_draw_shapes_and_names():
    target = StandardNormal(3)
    cfg = SamplerConfig(chains=2, warmup=50, sampling=40, seed=1)
    out = sample(target, cfg, names=["a", "b", "c"])
    assert out.draws.shape == (2, 40, 3)
    assert out.names == ["a", "b", "c"]
    assert out.flat().shape == (80, 3)
    assert out.divergences.shape == (2,)  # per-chain divergence counts
    assert np.all(out.divergences >= 0)


def test_one_dimensional_draws_pass_ks_test():
    target = StandardNormal(1)
    cfg = SamplerConfig(chains=2, warmup=400, sampling=1500, seed=7)
    out = sample(target, cfg)
    draws = out.flat()[:, 0]
    ks = stats.kstest(draws, "norm")
    assert ks.statistic < 0.05


def test_correlated_normal_recovers_correlation():
    target = _correlated_target(rho=0.9)
    cfg = SamplerConfig(chains=2, warmup=300, sampling=1000, seed=11)
    out = sample(target, cfg)
    flat = out.flat()
    corr = np.corrcoef(flat[:, 0], flat[:, 1])[0, 1]
    assert abs(corr - 0.9) < 0.05


def test_funnel_triggers_divergences():
    target = Funnel(10)
    cfg = SamplerConfig(chains=4, warmup=400, sampling=500, seed=3,
                        target_accept=0.85)
    out = sample(target, cfg)
    assert int(out.divergences.sum()) > 0


def test_high_divergence_rate_is_flagged_not_fatal():
    class Wall:
        dim = 2

        def logp_and_grad(self, u):
            if np.max(np.abs(u)) > 0.5:
                return -np.inf, np.zeros(2)
            return float(-0.5 * u @ u), -u

    out = sample(Wall(), SamplerConfig(chains=2, warmup=50, sampling=50, seed=0))
    assert out.divergence_rate > 0.2
    assert "high-divergence-rate" in out.meta["flags"]


def test_initialization_failure_raises():
    class NoStart:
        dim = 2

        def logp_and_grad(self, u):
            return -np.inf, np.zeros(2)

    with pytest.raises(SamplerError):
        sample(NoStart(), SamplerConfig(chains=2, warmup=30, sampling=30, seed=0))


def test_meta_records_adaptation_state():
    target = StandardNormal(4)
    out = sample(target, SamplerConfig(chains=2, warmup=80, sampling=60, seed=3))
    assert len(out.meta["step_sizes"]) == 2
    assert all(s > 0 for s in out.meta["step_sizes"])
    assert 0.6 < np.mean(out.meta["mean_accept"]) <= 1.0
    assert out.meta["config"]["chains"] == 2


# ---------------------------------------------------------------------------
# Convergence diagnostics


def test_rhat_is_exactly_one_for_identical_chains():
    rng = np.random.default_rng(17)
    # copied chains whose split halves also coincide: between-half variance
    # is exactly zero, so the statistic hits its floor of exactly 1.0
    half = rng.normal(size=100)
    one = np.concatenate([half, half])
    x = np.stack([one, one.copy()])
    assert split_rhat(x) == 1.0


def test_rhat_near_one_for_generic_copied_chains():
    rng = np.random.default_rng(18)
    one = rng.normal(size=400)
    x = np.stack([one, one.copy(), one.copy()])
    r = split_rhat(x)
    assert 1.0 <= r < 1.01


def test_rhat_detects_separated_chains():
    rng = np.random.default_rng(19)
    x = np.stack([rng.normal(0.0, 1.0, 400), rng.normal(5.0, 1.0, 400)])
    assert split_rhat(x) > 1.5


def test_rhat_never_below_one():
    rng = np.random.default_rng(23)
    for trial in range(50):
        x = rng.normal(size=(4, 100))
        assert split_rhat(x) >= 1.0


def test_rhat_requires_multiple_chains_and_draws():
    rng = np.random.default_rng(29)
    with pytest.raises(ConfigError):
        split_rhat(rng.normal(size=(1, 100)))
    with pytest.raises(ConfigError):
        split_rhat(rng.normal(size=(2, 3)))


def test_ess_close_to_sample_size_for_iid_draws():
    rng = np.random.default_rng(31)
    x = rng.normal(size=(4, 1000))
    total = 4000
    est = ess_bulk(x)
    assert abs(est - total) < 0.2 * total


def test_ess_small_for_sticky_chains():
    rng = np.random.default_rng(37)
    steps = rng.normal(size=(4, 1000)) * 0.05
    x = np.cumsum(steps, axis=1)  # random walk: tiny effective sample
    assert ess_bulk(x) < 400


def test_diagnostics_shape():
    rng = np.random.default_rng(41)
    draws = rng.normal(size=(4, 120, 5))
    rhat, ess = diagnostics(draws)
    assert rhat.shape == (5,)
    assert ess.shape == (5,)
    assert np.all(rhat >= 1.0)
    assert np.all(ess > 0)


# ---------------------------------------------------------------------------
# Configuration and persistence


def test_default_configuration_values():
    cfg = SamplerConfig()
    assert cfg.chains == 4
    assert cfg.warmup == 500
    assert cfg.sampling == 750
    assert cfg.target_accept == 0.85
    assert cfg.max_treedepth == 11
    assert cfg.init_range == 0.25


def test_profiles():
    desk = profile_config("desk", seed=5)
    assert (desk.chains, desk.warmup, desk.sampling) == (
        DESK_PROFILE.chains, DESK_PROFILE.warmup, DESK_PROFILE.sampling
    ) == (2, 300, 300)
    paper = profile_config("paper", seed=5)
    assert (paper.chains, paper.warmup, paper.sampling) == (
        PAPER_PROFILE.chains, PAPER_PROFILE.warmup, PAPER_PROFILE.sampling
    ) == (4, 500, 750)
    assert desk.seed == 5
    with pytest.raises(ConfigError):
        profile_config("express")


def test_warmup_window_schedule():
    init, ends = warmup_windows(500)
    assert init == 75
    assert ends == [100, 150, 250, 450]
    assert ends[-1] == 500 - 50
    # short warmups fall back to fractional buffers
    init_s, ends_s = warmup_windows(60)
    assert 0 < init_s < 60
    assert ends_s[-1] <= 60
    assert all(a < b for a, b in zip(ends_s, ends_s[1:]))


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        SamplerConfig(chains=0)
    with pytest.raises(ConfigError):
        SamplerConfig(target_accept=1.5)
    with pytest.raises(ConfigError):
        SamplerConfig(warmup=-1)


def test_draws_csv_roundtrip(tmp_path):
    target = StandardNormal(3)
    out = sample(target, SamplerConfig(chains=2, warmup=40, sampling=30, seed=2),
                 names=["x", "y", "z"])
    path = tmp_path / "draws.csv"
    save_draws_csv(out, path)
    loaded, names = load_draws_csv(path)
    assert names == ["x", "y", "z"]
    assert loaded.shape == out.draws.shape
    assert np.array_equal(loaded, out.draws)
