"""Gradient-based MCMC: multinomial tree-doubling HMC with NUTS termination.

The sampler is self-contained: leapfrog integration with a diagonal mass
matrix, dual-averaging step-size adaptation toward a target acceptance
statistic, and Stan-style three-phase warmup (initial fast window, doubling
variance-estimation windows, terminal fast window).  Trajectories double
until a U-turn or divergence; the next state is drawn from the trajectory
with weight proportional to the leaf densities (biased progressive sampling
across doublings, multinomial within subtrees).

Targets are duck-typed: any object with an integer ``dim`` and a
``logp_and_grad(u) -> (float, ndarray)`` method works.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len
from scipy.stats import norm, rankdata

from .errors import ConfigError, SamplerError

_DIVERGENCE_ENERGY = 1000.0
_MAX_INIT_TRIES = 100


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 500
    sampling: int = 750
    target_accept: float = 0.85
    max_treedepth: int = 11
    init_range: float = 0.25
    seed: int = 0
    jobs: int = 1
    progress: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if self.warmup < 0 or self.sampling < 1:
            raise ConfigError("warmup must be >= 0 and sampling >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept must lie in (0, 1)")
        if self.max_treedepth < 1:
            raise ConfigError("max_treedepth must be >= 1")
        if self.init_range <= 0:
            raise ConfigError("init_range must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


DESK_PROFILE = SamplerConfig(chains=2, warmup=300, sampling=300)
PAPER_PROFILE = SamplerConfig(chains=4, warmup=500, sampling=750)


def profile_config(name: str, seed: int = 0, jobs: int = 1,
                   progress: bool = False) -> SamplerConfig:
    base = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}.get(name)
    if base is None:
        raise ConfigError(f"unknown sampler profile {name!r}; expected desk or paper")
    return SamplerConfig(
        chains=base.chains, warmup=base.warmup, sampling=base.sampling,
        seed=seed, jobs=jobs, progress=progress,
    )


@dataclass
class PosteriorDraws:
    """Draws plus convergence diagnostics.

    ``draws`` has shape (chains, sampling, dim).  ``rhat`` and ``ess`` are
    per-parameter; ``divergences`` counts post-warmup divergent transitions
    per chain.  ``meta`` carries step sizes, acceptance statistics, tree
    depths, and any warning flags.
    """

    draws: np.ndarray
    names: list
    rhat: np.ndarray
    ess: np.ndarray
    divergences: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def flat(self) -> np.ndarray:
        """Stack chains: shape (chains * sampling, dim)."""
        return self.draws.reshape(-1, self.draws.shape[-1])

    @property
    def divergence_rate(self) -> float:
        return float(self.divergences.sum()) / (self.n_chains * self.n_draws)


# ---------------------------------------------------------------------------
# Warmup schedule


class DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman-Gelman settings)."""

    def __init__(self, eps0: float, target: float, gamma: float = 0.05,
                 t0: float = 10.0, kappa: float = 0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(eps0)

    def restart(self, eps0: float) -> None:
        self.mu = math.log(10.0 * eps0)
        self.log_eps = math.log(eps0)
        self.log_eps_bar = math.log(eps0)
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> float:
        self.count += 1
        m = self.count
        frac = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    def adapted(self) -> float:
        return math.exp(self.log_eps_bar)


class RunningVariance:
    """Welford accumulator for a diagonal variance estimate."""

    def __init__(self, dim: int):
        self.dim = dim
        self.reset()

    def reset(self) -> None:
        self.n = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)

    def push(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularized_variance(self) -> np.ndarray:
        """Shrunk variance estimate (toward 1e-3) in the Stan style."""
        if self.n < 2:
            return np.ones(self.dim)
        var = self.m2 / (self.n - 1)
        w = self.n / (self.n + 5.0)
        return np.maximum(w * var + (1.0 - w) * 1e-3, 1e-10)


def warmup_windows(warmup: int, init_buffer: int = 75, term_buffer: int = 50,
                   base_window: int = 25) -> tuple[int, list]:
    """Variance-estimation schedule: (first window start, window end indices).

    Windows start after ``init_buffer`` and double in size until the terminal
    buffer; the last window absorbs any remainder.  Short warmups are split
    15% / 75% / 10%.
    """
    if warmup <= 0:
        return 0, []
    if warmup < init_buffer + term_buffer + base_window:
        init_buffer = max(1, int(0.15 * warmup))
        term_buffer = max(1, int(0.10 * warmup))
        base_window = max(1, warmup - init_buffer - term_buffer)
        if init_buffer + base_window + term_buffer > warmup:
            return 0, [warmup]
    ends = []
    start = init_buffer
    size = base_window
    while True:
        end = start + size
        # absorb a too-small final window into this one
        if end + 2 * size > warmup - term_buffer:
            end = warmup - term_buffer
            ends.append(end)
            break
        ends.append(end)
        start = end
        size *= 2
    return init_buffer, [e for e in ends if e > init_buffer]


# ---------------------------------------------------------------------------
# Hamiltonian pieces


def _leapfrog(target, q, p, grad, eps, inv_mass):
    p_half = p + 0.5 * eps * grad
    q_new = q + eps * inv_mass * p_half
    lp_new, grad_new = target.logp_and_grad(q_new)
    p_new = p_half + 0.5 * eps * grad_new
    return q_new, p_new, grad_new, lp_new


def _kinetic(p, inv_mass) -> float:
    return 0.5 * float(np.dot(p * p, inv_mass))


def _find_initial_step(target, q, lp, grad, inv_mass, rng) -> float:
    """Double/halve the step until one leapfrog step crosses 50% acceptance."""
    eps = 1.0
    p = rng.standard_normal(q.shape[0]) / np.sqrt(inv_mass)
    h0 = -lp + _kinetic(p, inv_mass)
    _, p1, _, lp1 = _leapfrog(target, q, p, grad, eps, inv_mass)
    h1 = -lp1 + _kinetic(p1, inv_mass)
    delta = h0 - h1 if np.isfinite(h1) else -np.inf
    direction = 1.0 if delta > math.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0**direction
        if eps > 1e7 or eps < 1e-10:
            break
        _, p1, _, lp1 = _leapfrog(target, q, p, grad, eps, inv_mass)
        h1 = -lp1 + _kinetic(p1, inv_mass)
        delta = h0 - h1 if np.isfinite(h1) else -np.inf
        if direction * delta <= direction * math.log(0.5):
            break
    return min(max(eps, 1e-10), 1e7)


class _Tree:
    """One (sub)trajectory: edge states, a weighted proposal, and flags."""

    __slots__ = (
        "q_minus", "p_minus", "grad_minus", "q_plus", "p_plus", "grad_plus",
        "q_prop", "lp_prop", "grad_prop", "log_weight", "sum_accept",
        "n_leapfrog", "divergent", "turning",
    )

    def __init__(self, q, p, grad, q_prop, lp_prop, grad_prop, log_weight,
                 sum_accept, n_leapfrog, divergent, turning):
        self.q_minus = self.q_plus = q
        self.p_minus = self.p_plus = p
        self.grad_minus = self.grad_plus = grad
        self.q_prop = q_prop
        self.lp_prop = lp_prop
        self.grad_prop = grad_prop
        self.log_weight = log_weight
        self.sum_accept = sum_accept
        self.n_leapfrog = n_leapfrog
        self.divergent = divergent
        self.turning = turning


def _is_turning(q_minus, p_minus, q_plus, p_plus, inv_mass) -> bool:
    dq = q_plus - q_minus
    return (
        float(np.dot(dq, inv_mass * p_minus)) < 0.0
        or float(np.dot(dq, inv_mass * p_plus)) < 0.0
    )


def _build_tree(target, rng, depth, direction, q, p, grad, h0, eps, inv_mass):
    if depth == 0:
        q1, p1, grad1, lp1 = _leapfrog(target, q, p, grad, direction * eps, inv_mass)
        h1 = -lp1 + _kinetic(p1, inv_mass) if np.isfinite(lp1) else np.inf
        delta = h1 - h0
        divergent = not np.isfinite(delta) or delta > _DIVERGENCE_ENERGY
        log_weight = -np.inf if divergent else -delta
        accept = 0.0 if divergent else min(1.0, math.exp(min(0.0, -delta)))
        return _Tree(q1, p1, grad1, q1, lp1, grad1, log_weight, accept, 1,
                     divergent, False)

    inner = _build_tree(target, rng, depth - 1, direction, q, p, grad, h0, eps,
                        inv_mass)
    if inner.divergent or inner.turning:
        return inner
    if direction > 0:
        q_e, p_e, grad_e = inner.q_plus, inner.p_plus, inner.grad_plus
    else:
        q_e, p_e, grad_e = inner.q_minus, inner.p_minus, inner.grad_minus
    outer = _build_tree(target, rng, depth - 1, direction, q_e, p_e, grad_e, h0,
                        eps, inv_mass)

    inner.sum_accept += outer.sum_accept
    inner.n_leapfrog += outer.n_leapfrog
    if outer.divergent or outer.turning:
        inner.divergent = outer.divergent
        inner.turning = outer.turning
        return inner

    total = np.logaddexp(inner.log_weight, outer.log_weight)
    if math.log(rng.uniform()) < outer.log_weight - total:  # multinomial merge
        inner.q_prop = outer.q_prop
        inner.lp_prop = outer.lp_prop
        inner.grad_prop = outer.grad_prop
    inner.log_weight = total
    if direction > 0:
        inner.q_plus, inner.p_plus, inner.grad_plus = (
            outer.q_plus, outer.p_plus, outer.grad_plus)
    else:
        inner.q_minus, inner.p_minus, inner.grad_minus = (
            outer.q_minus, outer.p_minus, outer.grad_minus)
    inner.turning = _is_turning(inner.q_minus, inner.p_minus, inner.q_plus,
                                inner.p_plus, inv_mass)
    return inner


def _transition(target, rng, q, lp, grad, eps, inv_mass, max_depth):
    """One NUTS draw.  Returns the new state and transition statistics."""
    p0 = rng.standard_normal(q.shape[0]) / np.sqrt(inv_mass)
    h0 = -lp + _kinetic(p0, inv_mass)
    q_minus = q_plus = q
    p_minus = p_plus = p0
    grad_minus = grad_plus = grad
    q_prop, lp_prop, grad_prop = q, lp, grad
    log_weight = 0.0  # relative leaf weight exp(h0 - h) of the start state
    sum_accept = 0.0
    n_leapfrog = 0
    divergent = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction > 0:
            sub = _build_tree(target, rng, depth, 1, q_plus, p_plus, grad_plus,
                              h0, eps, inv_mass)
            q_plus, p_plus, grad_plus = sub.q_plus, sub.p_plus, sub.grad_plus
        else:
            sub = _build_tree(target, rng, depth, -1, q_minus, p_minus,
                              grad_minus, h0, eps, inv_mass)
            q_minus, p_minus, grad_minus = sub.q_minus, sub.p_minus, sub.grad_minus
        sum_accept += sub.sum_accept
        n_leapfrog += sub.n_leapfrog
        divergent = divergent or sub.divergent
        if sub.divergent or sub.turning:
            break
        # biased progressive sampling favours the new half of the trajectory
        if math.log(rng.uniform()) < sub.log_weight - log_weight:
            q_prop, lp_prop, grad_prop = sub.q_prop, sub.lp_prop, sub.grad_prop
        log_weight = np.logaddexp(log_weight, sub.log_weight)
        depth += 1
        if _is_turning(q_minus, p_minus, q_plus, p_plus, inv_mass):
            break
    accept_stat = sum_accept / max(n_leapfrog, 1)
    return q_prop, lp_prop, grad_prop, {
        "accept": accept_stat,
        "divergent": divergent,
        "depth": depth,
        "n_leapfrog": n_leapfrog,
    }


# ---------------------------------------------------------------------------
# Chain driver


def _init_state(target, cfg, rng):
    for _ in range(_MAX_INIT_TRIES):
        q = rng.uniform(-cfg.init_range, cfg.init_range, target.dim)
        lp, grad = target.logp_and_grad(q)
        if np.isfinite(lp) and np.all(np.isfinite(grad)):
            return q, lp, grad
    raise SamplerError(
        f"no finite starting point after {_MAX_INIT_TRIES} draws in "
        f"[-{cfg.init_range}, {cfg.init_range}]"
    )


def run_chain(target, cfg: SamplerConfig, chain_idx: int) -> dict:
    """Run one chain (warmup + sampling) with its own RNG stream."""
    rng = np.random.default_rng(cfg.seed + chain_idx)
    q, lp, grad = _init_state(target, cfg, rng)
    dim = target.dim
    inv_mass = np.ones(dim)

    eps = _find_initial_step(target, q, lp, grad, inv_mass, rng)
    averager = DualAveraging(eps, cfg.target_accept)
    collect_from, window_ends = warmup_windows(cfg.warmup)
    welford = RunningVariance(dim)

    total = cfg.warmup + cfg.sampling
    draws = np.empty((cfg.sampling, dim))
    divergences = 0
    depths = np.zeros(cfg.max_treedepth + 1, dtype=int)
    accept_sum = 0.0
    pending = list(window_ends)

    for it in range(total):
        q, lp, grad, stats = _transition(
            target, rng, q, lp, grad, eps, inv_mass, cfg.max_treedepth
        )
        if it < cfg.warmup:
            eps = averager.update(stats["accept"])
            if pending and it >= collect_from:
                welford.push(q)
            if pending and it + 1 == pending[0]:
                pending.pop(0)
                if welford.n >= 2:
                    inv_mass = welford.regularized_variance()
                welford.reset()
                eps = _find_initial_step(target, q, lp, grad, inv_mass, rng)
                averager.restart(eps)
            if it + 1 == cfg.warmup:
                eps = averager.adapted()
        else:
            i = it - cfg.warmup
            draws[i] = q
            divergences += stats["divergent"]
            depths[stats["depth"]] += 1
            accept_sum += stats["accept"]
        if cfg.progress and (it + 1) % 100 == 0:
            phase = "warmup" if it < cfg.warmup else "sampling"
            print(
                f"chain {chain_idx + 1}: iteration {it + 1}/{total} ({phase})",
                file=sys.stderr,
            )

    return {
        "draws": draws,
        "divergences": divergences,
        "step_size": eps,
        "mean_accept": accept_sum / cfg.sampling,
        "depth_counts": depths,
        "inv_mass": inv_mass,
    }


class _ChainTask:
    """Picklable callable for process pools."""

    def __init__(self, target, cfg):
        self.target = target
        self.cfg = cfg

    def __call__(self, idx: int) -> dict:
        return run_chain(self.target, self.cfg, idx)


def sample(target, cfg: SamplerConfig, names: list | None = None) -> PosteriorDraws:
    """Run all chains and assemble draws with diagnostics.

    Results are independent of ``cfg.jobs``: each chain's RNG is seeded as
    ``cfg.seed + chain_index`` regardless of scheduling.
    """
    task = _ChainTask(target, cfg)
    if cfg.jobs > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.chains)) as pool:
            results = list(pool.map(task, range(cfg.chains)))
    else:
        results = [task(i) for i in range(cfg.chains)]

    draws = np.stack([r["draws"] for r in results])
    divergences = np.array([r["divergences"] for r in results])
    if cfg.chains > 1:
        rhat, ess = diagnostics(draws)
    else:
        rhat = np.full(target.dim, np.nan)
        ess = np.array([ess_bulk(draws[:, :, j]) for j in range(target.dim)])
    if names is None:
        names = [f"u[{j + 1}]" for j in range(target.dim)]
    rate = float(divergences.sum()) / (cfg.chains * cfg.sampling)
    meta = {
        "step_sizes": [r["step_size"] for r in results],
        "mean_accept": [r["mean_accept"] for r in results],
        "depth_counts": np.stack([r["depth_counts"] for r in results]).tolist(),
        "divergence_rate": rate,
        "flags": ["high-divergence-rate"] if rate > 0.20 else [],
        "config": {
            "chains": cfg.chains, "warmup": cfg.warmup, "sampling": cfg.sampling,
            "target_accept": cfg.target_accept, "max_treedepth": cfg.max_treedepth,
            "init_range": cfg.init_range, "seed": cfg.seed,
        },
    }
    return PosteriorDraws(
        draws=draws, names=list(names), rhat=rhat, ess=ess,
        divergences=divergences, meta=meta,
    )


# ---------------------------------------------------------------------------
# Convergence diagnostics


def _split_chains(x: np.ndarray) -> np.ndarray:
    """Halve each chain and stack: (c, n) -> (2c, n//2)."""
    half = x.shape[1] // 2
    return np.vstack([x[:, :half], x[:, -half:]])


def _z_scale(x: np.ndarray) -> np.ndarray:
    """Map values to normal scores by rank (averaged ties)."""
    ranks = rankdata(x, method="average").reshape(x.shape)
    return norm.ppf((ranks - 0.5) / x.size)


def split_rhat(x: np.ndarray) -> float:
    """Split R-hat for one parameter, floored at 1.

    ``x`` has shape (chains, draws).  Values below 1 are estimation noise and
    are reported as exactly 1, so duplicated chains score 1.0.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ConfigError("split R-hat needs at least two chains")
    if x.shape[1] < 4:
        raise ConfigError("split R-hat needs at least four draws per chain")
    s = _split_chains(x)
    n = s.shape[1]
    within = s.var(axis=1, ddof=1).mean()
    if within == 0.0:
        return 1.0
    var_means = s.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * within + var_means
    return max(1.0, math.sqrt(var_plus / within))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance by FFT."""
    n = x.shape[0]
    m = next_fast_len(2 * n)
    xc = x - x.mean()
    f = np.fft.rfft(xc, m)
    return np.fft.irfft(f * np.conj(f), m)[:n].real / n


def _ess_geyer(chains: np.ndarray) -> float:
    """ESS of pre-processed chains via Geyer's initial monotone sequence."""
    n_chain, n_draw = chains.shape
    if n_draw < 4:
        return float("nan")
    acov = np.stack([_autocov(chains[c]) for c in range(n_chain)])
    chain_mean = chains.mean(axis=1)
    mean_var = acov[:, 0].mean() * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += chain_mean.var(ddof=1)
    if var_plus == 0.0:
        return float("nan")

    rho_hat = np.zeros(n_draw)
    rho_hat[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho_hat[1] = rho_odd
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        rho_odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        rho_hat[t + 1] = rho_even
        if rho_even + rho_odd >= 0:
            rho_hat[t + 2] = rho_odd
        t += 2
    max_t = t
    t = 1
    while t <= max_t - 2:  # enforce monotone decreasing pair sums
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]:
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0
            rho_hat[t + 2] = rho_hat[t + 1]
        t += 2
    tau_hat = -1.0 + 2.0 * rho_hat[:max_t].sum() + rho_hat[max_t + 1:max_t + 2].sum()
    return float(n_chain * n_draw / tau_hat)


def ess_bulk(x: np.ndarray) -> float:
    """Rank-normalised split effective sample size for one parameter."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ConfigError("ess expects (chains, draws)")
    if x.shape[1] < 4:
        return float("nan")
    return _ess_geyer(_z_scale(_split_chains(x)))


def diagnostics(draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter (split R-hat, rank-normalised ESS) for (c, n, dim) draws."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3:
        raise ConfigError("diagnostics expects draws of shape (chains, n, dim)")
    if draws.shape[0] < 2:
        raise ConfigError("R-hat is unavailable for a single chain")
    dim = draws.shape[2]
    rhat = np.array([split_rhat(draws[:, :, j]) for j in range(dim)])
    ess = np.array([ess_bulk(draws[:, :, j]) for j in range(dim)])
    return rhat, ess


# ---------------------------------------------------------------------------
# Archival


def save_draws_csv(pd: PosteriorDraws, path) -> None:
    """Columnar CSV: chain, draw, then one column per parameter."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "draw"] + list(pd.names))
        for c in range(pd.n_chains):
            for i in range(pd.n_draws):
                writer.writerow(
                    [c, i] + [format(v, ".17g") for v in pd.draws[c, i]]
                )


def save_diagnostics_json(pd: PosteriorDraws, path) -> None:
    payload = {
        "names": list(pd.names),
        "rhat": [None if np.isnan(v) else v for v in pd.rhat],
        "ess": [None if np.isnan(v) else v for v in pd.ess],
        "divergences": pd.divergences.tolist(),
        **pd.meta,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_draws_csv(path) -> tuple[np.ndarray, list]:
    """Read a draws CSV back into (chains, n, dim) plus parameter names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[2:]
        rows = [(int(r[0]), [float(v) for v in r[2:]]) for r in reader]
    n_chains = max(r[0] for r in rows) + 1
    per_chain = [[] for _ in range(n_chains)]
    for c, vals in rows:
        per_chain[c].append(vals)
    return np.array(per_chain), names
