"""Unconstrained joint posteriors and the top-level fit entry point.

Each prior family induces its own sampling parameterisation over a real
vector ``u``:

* informative / laplace: ``u = [coef, gamma]`` (the coefficient vector as-is);
* spike-slab: ``u = [coef, gamma, logit mixing weights]``;
* hierarchical: ``u = [coef, gamma, log group scales]``;
* horseshoe (non-centered): ``u = [z, gamma, log tau?, log lambda]`` with
  ``coef = tau * lambda * z``, which recovers the centered density marginally.

Scale latents are sampled on the log scale and mixing weights on the logit
scale, with the change-of-variable Jacobians included in the density.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, LikelihoodError
from .model import (
    DarmaLikelihood,
    ModelSpec,
    ParameterVector,
    coefficient_names,
    count_parameters,
    design_from_dict,
    model_from_json,
    model_to_json,
)
from .priors import (
    BlockLayout,
    GammaCoefPrior,
    default_gamma_prior,
    half_cauchy_log_scale_lpdf,
    latent_names,
    normal_lpdf,
    laplace_lpdf,
    prior_from_dict,
    prior_to_dict,
    spike_slab_lpdf,
)
from . import sampler as _sampler


class Posterior:
    """Differentiable log density over unconstrained reals.

    ``likelihood`` may be None for prior-only sampling (useful when checking
    shrinkage behaviour of the priors themselves).
    """

    def __init__(self, spec: ModelSpec, prior, gamma_prior: GammaCoefPrior,
                 likelihood: DarmaLikelihood | None):
        if likelihood is not None and likelihood.spec != spec:
            raise ConfigError("likelihood was built for a different model spec")
        if len(gamma_prior.mean) != spec.n_gamma:
            raise ConfigError("gamma prior length does not match the model spec")
        self.spec = spec
        self.prior = prior
        self.gamma_prior = gamma_prior
        self.likelihood = likelihood
        self.layout = BlockLayout.for_spec(spec)
        self.n_coef = self.layout.n_coef
        self.n_gamma = spec.n_gamma
        self.n_theta = count_parameters(spec)
        fam = prior.family
        if fam == "horseshoe":
            self._free_tau = prior.fixed_global is None
            self.dim = self.n_theta + self.n_coef + (1 if self._free_tau else 0)
        elif fam == "spikeslab":
            self.dim = self.n_theta + self.n_coef
        elif fam == "hierarchical":
            self.dim = self.n_theta + len(self.layout.group_names)
        elif fam in ("informative", "laplace"):
            self.dim = self.n_theta
        else:
            raise ConfigError(f"unknown prior family {fam!r}")

    # -- value and gradient -------------------------------------------------

    def _likelihood_term(self, theta: np.ndarray):
        if self.likelihood is None:
            return 0.0, np.zeros(self.n_theta)
        params = ParameterVector.unpack(theta, self.spec)
        return self.likelihood.log_likelihood_grad(params)

    def logp_and_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise ConfigError(f"point has shape {u.shape}, expected ({self.dim},)")
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            try:
                return self._logp_and_grad(u)
            except LikelihoodError:
                return -np.inf, np.zeros(self.dim)

    def _logp_and_grad(self, u: np.ndarray):
        K, G = self.n_coef, self.n_gamma
        fam = self.prior.family
        zeros = np.zeros(self.dim)
        gp = self.gamma_prior

        if fam == "horseshoe":
            z = u[:K]
            gamma = u[K:K + G]
            if self._free_tau:
                log_tau = u[K + G]
                log_lam = u[K + G + 1:]
                tau = np.exp(log_tau)
            else:
                log_lam = u[K + G:]
                tau = self.prior.fixed_global
            lam = np.exp(log_lam)
            coef = tau * lam * z
            if not np.all(np.isfinite(coef)):
                return -np.inf, zeros
            theta = np.concatenate([coef, gamma])
            ll, dtheta = self._likelihood_term(theta)
            z_val, z_grad = normal_lpdf(z, 0.0, 1.0)
            lam_val, lam_grad = half_cauchy_log_scale_lpdf(log_lam, self.prior.local_scale)
            g_val, g_grad = normal_lpdf(gamma, gp.mean_arr, gp.sd_arr)
            val = ll + z_val + lam_val + g_val
            if not np.isfinite(val):
                return -np.inf, zeros
            dcoef = dtheta[:K]
            grad = np.empty(self.dim)
            grad[:K] = dcoef * tau * lam + z_grad
            grad[K:K + G] = dtheta[K:] + g_grad
            if self._free_tau:
                tau_val, tau_grad = half_cauchy_log_scale_lpdf(
                    np.array([log_tau]), self.prior.global_scale
                )
                val += tau_val
                grad[K + G] = float(np.dot(dcoef, coef)) + tau_grad[0]
                grad[K + G + 1:] = dcoef * coef + lam_grad
            else:
                grad[K + G:] = dcoef * coef + lam_grad
            return (val, grad) if np.isfinite(val) else (-np.inf, zeros)

        theta = u[:K + G]
        coef = theta[:K]
        gamma = theta[K:]
        ll, dtheta = self._likelihood_term(theta)
        g_val, g_grad = normal_lpdf(gamma, gp.mean_arr, gp.sd_arr)
        grad = np.empty(self.dim)

        if fam == "informative":
            means = self.layout.per_coef(self.prior.beta_mean, self.prior.varma_mean)
            sds = self.layout.per_coef(self.prior.beta_sd, self.prior.varma_sd)
            p_val, p_grad = normal_lpdf(coef, means, sds)
            val = ll + p_val + g_val
            grad[:K] = dtheta[:K] + p_grad
            grad[K:] = dtheta[K:] + g_grad
        elif fam == "laplace":
            scales = self.layout.per_coef(self.prior.beta_scale, self.prior.varma_scale)
            p_val, p_grad = laplace_lpdf(coef, scales)
            val = ll + p_val + g_val
            grad[:K] = dtheta[:K] + p_grad
            grad[K:] = dtheta[K:] + g_grad
        elif fam == "spikeslab":
            uw = u[K + G:]
            w = expit(uw)
            # exact zeros/ones would take log(0) in the mixture; the logit
            # Jacobian already sends the density to -inf at the boundary
            w = np.clip(w, 1e-300, 1.0 - 1e-16)
            p_val, p_dx, p_dw = spike_slab_lpdf(
                coef, w, self.prior.slab_sd, self.prior.spike_sd
            )
            jac = float(np.sum(np.log(w) + np.log1p(-w)))
            val = ll + p_val + jac + g_val
            grad[:K + G] = dtheta
            grad[:K] += p_dx
            grad[K:K + G] += g_grad
            grad[K + G:] = p_dw * w * (1.0 - w) + (1.0 - 2.0 * w)
        elif fam == "hierarchical":
            us = u[K + G:]
            sig = np.exp(us)
            if not np.all(np.isfinite(sig)) or np.any(sig == 0.0):
                return -np.inf, zeros
            means = self.layout.hier_means(self.prior)[self.layout.group_index]
            sds = sig[self.layout.group_index]
            p_val, p_grad = normal_lpdf(coef, means, sds)
            hc_val, hc_grad = half_cauchy_log_scale_lpdf(
                us, self.layout.hier_scales(self.prior)
            )
            val = ll + p_val + hc_val + g_val
            grad[:K] = dtheta[:K] + p_grad
            grad[K:K + G] = dtheta[K:] + g_grad
            zsc = ((coef - means) / sds) ** 2 - 1.0
            grad[K + G:] = (
                np.bincount(self.layout.group_index, weights=zsc,
                            minlength=len(sig)) + hc_grad
            )
        else:  # pragma: no cover - guarded in __init__
            raise ConfigError(f"unknown prior family {fam!r}")

        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return -np.inf, zeros
        return val, grad

    # -- reporting scale ----------------------------------------------------

    def transform_rows(self, u_rows: np.ndarray) -> np.ndarray:
        """Map unconstrained draws to [theta, natural-scale latents] rows."""
        u_rows = np.atleast_2d(np.asarray(u_rows, dtype=float))
        K, G = self.n_coef, self.n_gamma
        fam = self.prior.family
        if fam == "horseshoe":
            z = u_rows[:, :K]
            gamma = u_rows[:, K:K + G]
            if self._free_tau:
                tau = np.exp(u_rows[:, K + G])[:, None]
                lam = np.exp(u_rows[:, K + G + 1:])
                lat = np.concatenate([tau, lam], axis=1)
            else:
                tau = self.prior.fixed_global
                lam = np.exp(u_rows[:, K + G:])
                lat = lam
            coef = tau * lam * z
            return np.concatenate([coef, gamma, lat], axis=1)
        if fam == "spikeslab":
            return np.concatenate(
                [u_rows[:, :K + G], expit(u_rows[:, K + G:])], axis=1
            )
        if fam == "hierarchical":
            return np.concatenate(
                [u_rows[:, :K + G], np.exp(u_rows[:, K + G:])], axis=1
            )
        return u_rows.copy()

    def column_names(self) -> list:
        return coefficient_names(self.spec) + latent_names(self.prior, self.layout)


# ---------------------------------------------------------------------------
# Fitting


@dataclass
class FitResult:
    """A fitted model: draws on the reporting scale plus provenance."""

    spec: ModelSpec
    design: object
    prior: object
    gamma_prior: GammaCoefPrior
    draws: _sampler.PosteriorDraws

    @property
    def n_theta(self) -> int:
        return count_parameters(self.spec)

    def theta_draws(self) -> np.ndarray:
        """Coefficient draws, shape (chains * sampling, C)."""
        return self.draws.flat()[:, : self.n_theta]

    def posterior_mean(self) -> ParameterVector:
        return ParameterVector.unpack(self.theta_draws().mean(axis=0), self.spec)

    def intervals(self, level: float = 0.95) -> np.ndarray:
        """Equal-tailed credible intervals, shape (columns, 2)."""
        a = (1.0 - level) / 2.0
        flat = self.draws.flat()
        return np.quantile(flat, [a, 1.0 - a], axis=0).T

    @property
    def divergence_rate(self) -> float:
        return self.draws.divergence_rate

    def parameter_draws(self) -> list:
        """Draws as ParameterVector objects (one per retained draw)."""
        flat = self.theta_draws()
        return [ParameterVector.unpack(row, self.spec) for row in flat]

    def save(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        meta = json.loads(model_to_json(self.spec, self.design))
        meta["prior"] = prior_to_dict(self.prior)
        meta["gamma_prior"] = {
            "mean": list(self.gamma_prior.mean), "sd": list(self.gamma_prior.sd)
        }
        with open(os.path.join(out_dir, "model.json"), "w") as fh:
            json.dump(meta, fh, indent=2)
        _sampler.save_draws_csv(self.draws, os.path.join(out_dir, "draws.csv"))
        _sampler.save_diagnostics_json(
            self.draws, os.path.join(out_dir, "diagnostics.json")
        )

    @classmethod
    def load(cls, out_dir) -> "FitResult":
        with open(os.path.join(out_dir, "model.json")) as fh:
            meta = json.load(fh)
        spec = ModelSpec.from_dict(meta)
        design = design_from_dict(meta["design"])
        prior = prior_from_dict(meta["prior"])
        gamma_prior = GammaCoefPrior(
            mean=tuple(meta["gamma_prior"]["mean"]),
            sd=tuple(meta["gamma_prior"]["sd"]),
        )
        draws_arr, names = _sampler.load_draws_csv(os.path.join(out_dir, "draws.csv"))
        with open(os.path.join(out_dir, "diagnostics.json")) as fh:
            diag = json.load(fh)
        pd = _sampler.PosteriorDraws(
            draws=draws_arr,
            names=names,
            rhat=np.array([np.nan if v is None else v for v in diag["rhat"]]),
            ess=np.array([np.nan if v is None else v for v in diag["ess"]]),
            divergences=np.array(diag["divergences"]),
            meta={k: diag[k] for k in diag
                  if k not in ("names", "rhat", "ess", "divergences")},
        )
        return cls(spec=spec, design=design, prior=prior,
                   gamma_prior=gamma_prior, draws=pd)


def fit(
    series: np.ndarray,
    spec: ModelSpec,
    design,
    prior,
    gamma_prior: GammaCoefPrior | None = None,
    sampler_config: _sampler.SamplerConfig | None = None,
) -> FitResult:
    """Sample the posterior of a B-DARMA model.

    Draws are reported on the interpretable scale: coefficient columns first
    (AR, MA, beta, gamma in packing order), then any latent scale columns.
    Diagnostics (split R-hat, rank-normalised ESS) are computed on the
    reporting scale.
    """
    if gamma_prior is None:
        gamma_prior = default_gamma_prior(spec.n_gamma)
    if sampler_config is None:
        sampler_config = _sampler.SamplerConfig()
    likelihood = DarmaLikelihood(spec, design, series)
    post = Posterior(spec, prior, gamma_prior, likelihood)
    raw = _sampler.sample(post, sampler_config)
    names = post.column_names()
    chains, n, _ = raw.draws.shape
    rows = post.transform_rows(raw.draws.reshape(chains * n, post.dim))
    draws = rows.reshape(chains, n, -1)
    if chains > 1:
        rhat, ess = _sampler.diagnostics(draws)
    else:
        rhat = np.full(draws.shape[2], np.nan)
        ess = np.array(
            [_sampler.ess_bulk(draws[:, :, j]) for j in range(draws.shape[2])]
        )
    pd = _sampler.PosteriorDraws(
        draws=draws, names=names, rhat=rhat, ess=ess,
        divergences=raw.divergences, meta=raw.meta,
    )
    return FitResult(spec=spec, design=design, prior=prior,
                     gamma_prior=gamma_prior, draws=pd)
