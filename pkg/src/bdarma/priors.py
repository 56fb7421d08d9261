"""Prior families over the model coefficients.

All five families shrink the AR/MA/beta coefficients; the log-precision
coefficients gamma always carry independent Normal priors (by default a wide
prior on the intercept and tight ones on any seasonal terms).

The centered densities here evaluate ``log p(theta, latents)`` for testing
and reporting.  Sampling uses the unconstrained reparameterisations assembled
in :mod:`bdarma.posterior` (non-centered horseshoe; log/logit transforms for
scales and mixture weights), which recover these densities marginally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .model import CoefficientBlocks, ModelSpec, count_parameters

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Elementary densities (value plus gradient in x)


def normal_lpdf(x, mean, sd):
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    val = float(np.sum(-0.5 * z * z - np.log(sd) - 0.5 * _LOG_2PI))
    return val, -z / sd


def laplace_lpdf(x, scale):
    x = np.asarray(x, dtype=float)
    val = float(np.sum(-np.abs(x) / scale - np.log(2.0 * scale)))
    # subgradient 0 at x == 0
    return val, -np.sign(x) / scale


def half_cauchy_lpdf(x, scale):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("half-Cauchy support is x > 0")
    r2 = (x / scale) ** 2
    val = float(np.sum(math.log(2.0 / math.pi) - np.log(scale) - np.log1p(r2)))
    return val, -2.0 * x / (scale**2 + x**2)


def half_cauchy_log_scale_lpdf(log_x, scale):
    """Half-Cauchy density of exp(log_x) plus the log-scale Jacobian.

    Returns the value and its gradient with respect to ``log_x``.
    """
    log_x = np.asarray(log_x, dtype=float)
    x = np.exp(log_x)
    r2 = (x / scale) ** 2
    val = float(
        np.sum(math.log(2.0 / math.pi) - np.log(scale) - np.log1p(r2) + log_x)
    )
    return val, 1.0 - 2.0 * r2 / (1.0 + r2)


def spike_slab_lpdf(x, weight, slab_sd, spike_sd):
    """Two-component normal mixture density, vectorised.

    Returns (value, d/dx, d/dweight).
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weight, dtype=float)
    l1 = np.log(w) - 0.5 * (x / slab_sd) ** 2 - math.log(slab_sd) - 0.5 * _LOG_2PI
    l0 = np.log1p(-w) - 0.5 * (x / spike_sd) ** 2 - math.log(spike_sd) - 0.5 * _LOG_2PI
    hi = np.maximum(l1, l0)
    lp = hi + np.log(np.exp(l1 - hi) + np.exp(l0 - hi))
    r1 = np.exp(l1 - lp)
    r0 = np.exp(l0 - lp)
    dx = -x * (r1 / slab_sd**2 + r0 / spike_sd**2)
    dw = r1 / w - r0 / (1.0 - w)
    return float(lp.sum()), dx, dw


# ---------------------------------------------------------------------------
# Configuration objects


@dataclass(frozen=True)
class GammaCoefPrior:
    """Independent normals on the log-precision coefficients."""

    mean: tuple
    sd: tuple

    def __post_init__(self):
        if len(self.mean) != len(self.sd):
            raise ConfigError("gamma prior mean and sd lengths differ")
        if any(s <= 0 for s in self.sd):
            raise ConfigError("gamma prior sds must be positive")

    @property
    def mean_arr(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)

    @property
    def sd_arr(self) -> np.ndarray:
        return np.asarray(self.sd, dtype=float)


def default_gamma_prior(n_gamma: int) -> GammaCoefPrior:
    """Wide normal on the precision intercept, tight on remaining terms."""
    mean = (7.0,) + (0.0,) * (n_gamma - 1)
    sd = (1.5,) + (0.1,) * (n_gamma - 1)
    return GammaCoefPrior(mean=mean, sd=sd)


@dataclass(frozen=True)
class InformativeNormalPrior:
    family = "informative"
    varma_mean: float = 0.0
    varma_sd: float = 1.0
    beta_mean: float = 0.0
    beta_sd: float = 0.1

    def __post_init__(self):
        if self.varma_sd <= 0 or self.beta_sd <= 0:
            raise ConfigError("normal prior sds must be positive")


@dataclass(frozen=True)
class HorseshoePrior:
    family = "horseshoe"
    global_scale: float = 1.0
    local_scale: float = 1.0
    fixed_global: float | None = None

    def __post_init__(self):
        if self.global_scale <= 0 or self.local_scale <= 0:
            raise ConfigError("horseshoe scales must be positive")
        if self.fixed_global is not None and self.fixed_global <= 0:
            raise ConfigError("fixed_global must be positive when set")


@dataclass(frozen=True)
class LaplacePrior:
    family = "laplace"
    varma_scale: float = 1.0
    beta_scale: float = 1.0

    def __post_init__(self):
        if self.varma_scale <= 0 or self.beta_scale <= 0:
            raise ConfigError("laplace scales must be positive")


@dataclass(frozen=True)
class SpikeSlabPrior:
    family = "spikeslab"
    slab_sd: float = 1.0
    spike_sd: float = 0.01

    def __post_init__(self):
        if not 0 < self.spike_sd < self.slab_sd:
            raise ConfigError("need 0 < spike_sd < slab_sd")


@dataclass(frozen=True)
class HierarchicalNormalPrior:
    family = "hierarchical"
    diag_mean: float = 0.0
    beta_scale: float = 1.0
    ar_diag_scale: float = 1.0
    ar_offdiag_scale: float = 1.0
    ma_scale: float = 1.0

    def __post_init__(self):
        for f in ("beta_scale", "ar_diag_scale", "ar_offdiag_scale", "ma_scale"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{f} must be positive")


PRIOR_FAMILIES = ("informative", "horseshoe", "laplace", "spikeslab", "hierarchical")

_FAMILY_CLASSES = {
    "informative": InformativeNormalPrior,
    "horseshoe": HorseshoePrior,
    "laplace": LaplacePrior,
    "spikeslab": SpikeSlabPrior,
    "hierarchical": HierarchicalNormalPrior,
}


def prior_to_dict(prior) -> dict:
    d = {"family": prior.family}
    for f in fields(prior):
        d[f.name] = getattr(prior, f.name)
    return d


def prior_from_dict(d: dict):
    d = dict(d)
    family = d.pop("family", None)
    if family not in _FAMILY_CLASSES:
        raise ConfigError(f"unknown prior family {family!r}")
    try:
        return _FAMILY_CLASSES[family](**d)
    except TypeError as exc:
        raise ConfigError(f"bad options for prior family {family!r}: {exc}") from None


def default_study_priors(study: str) -> dict:
    """The five prior configurations used by the bundled studies.

    ``study`` is one of ``sim-correct``, ``sim-overfit``, ``sim-underfit``
    (shared settings), or ``application``.
    """
    if study in ("sim-correct", "sim-overfit", "sim-underfit"):
        return {
            "informative": InformativeNormalPrior(varma_sd=1.0, beta_sd=0.1),
            "horseshoe": HorseshoePrior(),
            "laplace": LaplacePrior(varma_scale=1.0, beta_scale=0.1),
            "spikeslab": SpikeSlabPrior(),
            "hierarchical": HierarchicalNormalPrior(diag_mean=0.0, beta_scale=0.1),
        }
    if study == "application":
        return {
            "informative": InformativeNormalPrior(varma_sd=1.0, beta_sd=0.1),
            "horseshoe": HorseshoePrior(),
            "laplace": LaplacePrior(varma_scale=1.0, beta_scale=1.0),
            "spikeslab": SpikeSlabPrior(),
            "hierarchical": HierarchicalNormalPrior(diag_mean=0.5, beta_scale=1.0),
        }
    raise ConfigError(
        f"unknown study {study!r}; expected sim-correct, sim-overfit, "
        "sim-underfit, or application"
    )


# ---------------------------------------------------------------------------
# Block resolution

HIER_GROUP_ORDER = ("beta", "ar_diag", "ar_offdiag", "ma")


@dataclass(frozen=True)
class BlockLayout:
    """Per-coefficient prior metadata for one model shape.

    The shrinkage families cover every AR/MA/beta coefficient exactly once;
    gamma coefficients sit at the end of the packing order and are handled by
    the (always normal) gamma prior.
    """

    n_coef: int          # AR + MA + beta count (shrinkage-covered)
    n_gamma: int
    is_beta: np.ndarray  # (n_coef,) bool
    group_index: np.ndarray  # (n_coef,) int into group_names
    group_names: tuple

    @classmethod
    def for_spec(cls, spec: ModelSpec) -> "BlockLayout":
        blocks = CoefficientBlocks.for_spec(spec)
        total = count_parameters(spec)
        n_gamma = spec.n_gamma
        n_coef = total - n_gamma
        labels = blocks.labels
        if any(lab == "gamma" for lab in labels[:n_coef]) or any(
            lab != "gamma" for lab in labels[n_coef:]
        ):
            raise ConfigError("gamma coefficients must pack at the end")
        is_beta = np.array([lab == "beta" for lab in labels[:n_coef]])
        raw_groups = []
        for i in range(n_coef):
            lab = labels[i]
            if lab == "beta":
                raw_groups.append("beta")
            elif lab.startswith("ar"):
                raw_groups.append("ar_diag" if blocks.is_diag[i] else "ar_offdiag")
            else:
                raw_groups.append("ma")
        present = tuple(g for g in HIER_GROUP_ORDER if g in raw_groups)
        name_to_idx = {g: k for k, g in enumerate(present)}
        group_index = np.array([name_to_idx[g] for g in raw_groups], dtype=int)
        # every shrinkage-covered coefficient belongs to exactly one group
        counts = np.bincount(group_index, minlength=len(present))
        if counts.sum() != n_coef:
            raise ConfigError("block partition does not cover the coefficients")
        return cls(
            n_coef=n_coef,
            n_gamma=n_gamma,
            is_beta=is_beta,
            group_index=group_index,
            group_names=present,
        )

    def per_coef(self, beta_value: float, other_value: float) -> np.ndarray:
        return np.where(self.is_beta, beta_value, other_value)

    def hier_means(self, prior: HierarchicalNormalPrior) -> np.ndarray:
        means = np.zeros(len(self.group_names))
        for k, g in enumerate(self.group_names):
            if g == "ar_diag":
                means[k] = prior.diag_mean
        return means

    def hier_scales(self, prior: HierarchicalNormalPrior) -> np.ndarray:
        lookup = {
            "beta": prior.beta_scale,
            "ar_diag": prior.ar_diag_scale,
            "ar_offdiag": prior.ar_offdiag_scale,
            "ma": prior.ma_scale,
        }
        return np.array([lookup[g] for g in self.group_names])


# ---------------------------------------------------------------------------
# Latent scales and the centered joint prior density


@dataclass
class LatentScales:
    """Auxiliary prior quantities on their natural (constrained) scale."""

    global_scale: float | None = None
    local_scales: np.ndarray | None = None
    group_scales: np.ndarray | None = None
    mix_weights: np.ndarray | None = None


def latent_names(prior, layout: BlockLayout) -> list[str]:
    if prior.family == "horseshoe":
        names = [] if prior.fixed_global is not None else ["global_scale"]
        return names + [f"local_scale[{i + 1}]" for i in range(layout.n_coef)]
    if prior.family == "spikeslab":
        return [f"mix_weight[{i + 1}]" for i in range(layout.n_coef)]
    if prior.family == "hierarchical":
        return [f"group_scale[{g}]" for g in layout.group_names]
    return []


def log_prior(theta: np.ndarray, latents: LatentScales, prior, layout: BlockLayout,
              gamma_prior: GammaCoefPrior):
    """Centered joint prior density log p(theta, latents).

    ``theta`` is the full flat coefficient vector (gamma last).  Returns
    ``(value, grad_theta, grad_latents)`` where ``grad_latents`` mirrors the
    populated fields of ``latents``.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (layout.n_coef + layout.n_gamma,):
        raise ConfigError(
            f"theta has shape {theta.shape}, expected ({layout.n_coef + layout.n_gamma},)"
        )
    coef = theta[: layout.n_coef]
    gamma = theta[layout.n_coef:]
    g_val, g_grad = normal_lpdf(gamma, gamma_prior.mean_arr, gamma_prior.sd_arr)
    out_lat = LatentScales()

    if prior.family == "informative":
        means = layout.per_coef(prior.beta_mean, prior.varma_mean)
        sds = layout.per_coef(prior.beta_sd, prior.varma_sd)
        val, grad = normal_lpdf(coef, means, sds)
    elif prior.family == "laplace":
        scales = layout.per_coef(prior.beta_scale, prior.varma_scale)
        val, grad = laplace_lpdf(coef, scales)
    elif prior.family == "horseshoe":
        tau = prior.fixed_global if prior.fixed_global is not None else latents.global_scale
        lam = latents.local_scales
        if tau is None or lam is None:
            raise ConfigError("horseshoe needs global_scale and local_scales latents")
        sds = tau * lam
        val, grad = normal_lpdf(coef, 0.0, sds)
        lam_val, lam_grad = half_cauchy_lpdf(lam, prior.local_scale)
        val += lam_val
        # d/d sd of N(x; 0, sd): (x^2/sd^2 - 1)/sd
        d_sd = (coef**2 / sds**2 - 1.0) / sds
        out_lat.local_scales = d_sd * tau + lam_grad
        if prior.fixed_global is None:
            tau_val, tau_grad = half_cauchy_lpdf(np.array([tau]), prior.global_scale)
            val += tau_val
            out_lat.global_scale = float((d_sd * lam).sum() + tau_grad[0])
    elif prior.family == "spikeslab":
        w = latents.mix_weights
        if w is None:
            raise ConfigError("spikeslab needs mix_weights latents")
        if np.any(w <= 0) or np.any(w >= 1):
            raise ConfigError("mix_weights must lie strictly inside (0, 1)")
        # mixing weights are uniform a priori, so only the mixture term counts
        val, grad, dw = spike_slab_lpdf(coef, w, prior.slab_sd, prior.spike_sd)
        out_lat.mix_weights = dw
    elif prior.family == "hierarchical":
        sig = latents.group_scales
        if sig is None:
            raise ConfigError("hierarchical needs group_scales latents")
        means = layout.hier_means(prior)[layout.group_index]
        sds = sig[layout.group_index]
        val, grad = normal_lpdf(coef, means, sds)
        hc_val, hc_grad = half_cauchy_lpdf(sig, layout.hier_scales(prior))
        val += hc_val
        d_sd = (((coef - means) / sds) ** 2 - 1.0) / sds
        out_lat.group_scales = (
            np.bincount(layout.group_index, weights=d_sd, minlength=len(sig)) + hc_grad
        )
    else:
        raise ConfigError(f"unknown prior family {prior.family!r}")

    grad_theta = np.concatenate([grad, g_grad])
    return val + g_val, grad_theta, out_lat
