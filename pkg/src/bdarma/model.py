"""Model shape, parameter layout, covariate designs, and the likelihood.

The observation model is Dirichlet with mean on the simplex and a scalar
precision per time step.  The ALR-transformed mean follows a VARMA recursion
around a regression term:

    eta_t = sum_p AR_p (alr(y_{t-p}) - X_{t-p} beta)
          + sum_q MA_q (alr(y_{t-q}) - eta_{t-q})
          + X_t beta

for t > m = max(P, Q), with eta_s defined as alr(y_s) for the first m steps
(so early MA innovations are zero).  The precision is log-linear in its own
covariates: phi_t = exp(z_t . gamma).

Likelihood gradients are computed by a reverse sweep through the recursion:
the adjoint of eta_t picks up -MA_q^T times the adjoints of later steps, which
handles the moving-average feedback exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gammaln

from .errors import ConfigError, LikelihoodError, PrecisionOverflowError, ShapeError
from .simplex import (
    alr,
    dirichlet_grad_alpha_rows,
    validate_compositions,
)

_EXP_GUARD = 700.0


@dataclass(frozen=True)
class ModelSpec:
    """Shape of a B-DARMA model.

    Attributes
    ----------
    n_parts : int
        Number of composition parts J (>= 2).
    ar_order, ma_order : int
        VARMA orders P and Q (>= 0).
    n_beta : int
        Number of regression coefficients for the ALR mean.
    n_gamma : int
        Number of coefficients in the log-precision regression (>= 1).
    """

    n_parts: int
    ar_order: int
    ma_order: int
    n_beta: int
    n_gamma: int = 1

    def __post_init__(self):
        if self.n_parts < 2:
            raise ConfigError("n_parts must be at least 2")
        if self.ar_order < 0 or self.ma_order < 0:
            raise ConfigError("ar_order and ma_order must be non-negative")
        if self.n_beta < 0:
            raise ConfigError("n_beta must be non-negative")
        if self.n_gamma < 1:
            raise ConfigError("n_gamma must be at least 1")

    @property
    def n_alr(self) -> int:
        """Dimension of the ALR space, J - 1."""
        return self.n_parts - 1

    @property
    def max_lag(self) -> int:
        return max(self.ar_order, self.ma_order)

    def to_dict(self) -> dict:
        return {
            "n_parts": self.n_parts,
            "ar_order": self.ar_order,
            "ma_order": self.ma_order,
            "n_beta": self.n_beta,
            "n_gamma": self.n_gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**{k: int(d[k]) for k in
                      ("n_parts", "ar_order", "ma_order", "n_beta", "n_gamma")})


def count_parameters(spec: ModelSpec) -> int:
    """Total coefficient count: (P+Q)(J-1)^2 + n_beta + n_gamma."""
    k = spec.n_alr
    return (spec.ar_order + spec.ma_order) * k * k + spec.n_beta + spec.n_gamma


@dataclass
class ParameterVector:
    """Structured coefficients with a fixed flat packing order.

    Packing order is AR matrices (row-major, lag 1 first), then MA matrices,
    then beta, then gamma.
    """

    ar: np.ndarray
    ma: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.ar = np.asarray(self.ar, dtype=float)
        self.ma = np.asarray(self.ma, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParameterVector":
        k = spec.n_alr
        return cls(
            ar=np.zeros((spec.ar_order, k, k)),
            ma=np.zeros((spec.ma_order, k, k)),
            beta=np.zeros(spec.n_beta),
            gamma=np.zeros(spec.n_gamma),
        )

    def check_shapes(self, spec: ModelSpec) -> "ParameterVector":
        k = spec.n_alr
        # an empty lag list arrives as shape (0,); normalise it
        if self.ar.size == 0 and spec.ar_order == 0:
            self.ar = self.ar.reshape(0, k, k)
        if self.ma.size == 0 and spec.ma_order == 0:
            self.ma = self.ma.reshape(0, k, k)
        if self.ar.shape != (spec.ar_order, k, k):
            raise ShapeError(f"ar has shape {self.ar.shape}, expected {(spec.ar_order, k, k)}")
        if self.ma.shape != (spec.ma_order, k, k):
            raise ShapeError(f"ma has shape {self.ma.shape}, expected {(spec.ma_order, k, k)}")
        if self.beta.shape != (spec.n_beta,):
            raise ShapeError(f"beta has shape {self.beta.shape}, expected {(spec.n_beta,)}")
        if self.gamma.shape != (spec.n_gamma,):
            raise ShapeError(f"gamma has shape {self.gamma.shape}, expected {(spec.n_gamma,)}")
        return self

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [self.ar.ravel(), self.ma.ravel(), self.beta, self.gamma]
        )

    @classmethod
    def unpack(cls, flat: np.ndarray, spec: ModelSpec) -> "ParameterVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (count_parameters(spec),):
            raise ShapeError(
                f"flat vector has shape {flat.shape}, expected ({count_parameters(spec)},)"
            )
        k = spec.n_alr
        n_ar = spec.ar_order * k * k
        n_ma = spec.ma_order * k * k
        ar = flat[:n_ar].reshape(spec.ar_order, k, k).copy()
        ma = flat[n_ar:n_ar + n_ma].reshape(spec.ma_order, k, k).copy()
        beta = flat[n_ar + n_ma:n_ar + n_ma + spec.n_beta].copy()
        gamma = flat[n_ar + n_ma + spec.n_beta:].copy()
        return cls(ar=ar, ma=ma, beta=beta, gamma=gamma)


def coefficient_names(spec: ModelSpec) -> list[str]:
    """Names for the flat coefficient vector, in packing order (1-indexed)."""
    k = spec.n_alr
    names = []
    for p in range(spec.ar_order):
        names += [f"ar{p + 1}[{i + 1},{j + 1}]" for i in range(k) for j in range(k)]
    for q in range(spec.ma_order):
        names += [f"ma{q + 1}[{i + 1},{j + 1}]" for i in range(k) for j in range(k)]
    names += [f"beta[{i + 1}]" for i in range(spec.n_beta)]
    names += [f"gamma[{i + 1}]" for i in range(spec.n_gamma)]
    return names


@dataclass(frozen=True)
class CoefficientBlocks:
    """Block labels for the flat coefficient vector.

    ``labels[i]`` is one of ``"ar{p}"``, ``"ma{q}"``, ``"beta"``, ``"gamma"``.
    ``is_diag[i]`` marks diagonal entries of AR/MA matrices.
    """

    labels: tuple
    is_diag: tuple

    @classmethod
    def for_spec(cls, spec: ModelSpec) -> "CoefficientBlocks":
        k = spec.n_alr
        labels: list[str] = []
        diag: list[bool] = []
        for p in range(spec.ar_order):
            for i in range(k):
                for j in range(k):
                    labels.append(f"ar{p + 1}")
                    diag.append(i == j)
        for q in range(spec.ma_order):
            for i in range(k):
                for j in range(k):
                    labels.append(f"ma{q + 1}")
                    diag.append(i == j)
        labels += ["beta"] * spec.n_beta
        diag += [False] * spec.n_beta
        labels += ["gamma"] * spec.n_gamma
        diag += [False] * spec.n_gamma
        return cls(labels=tuple(labels), is_diag=tuple(diag))


# ---------------------------------------------------------------------------
# Covariate designs


class IdentityDesign:
    """Identity mean covariates and a constant precision covariate.

    ``X_t`` is the (J-1) x (J-1) identity for every ``t`` (so beta acts as a
    per-component intercept on the ALR scale) and ``z_t = (1,)``.
    """

    kind = "identity"

    def __init__(self, n_parts: int):
        self.n_parts = int(n_parts)
        self.n_beta = self.n_parts - 1
        self.n_gamma = 1

    def covariate_matrix(self, t: int) -> np.ndarray:
        return np.eye(self.n_parts - 1)

    def precision_covariates(self, t: int) -> np.ndarray:
        return np.ones(1)

    def covariate_array(self, t0: int, t1: int) -> np.ndarray:
        k = self.n_parts - 1
        out = np.zeros((t1 - t0, k, k))
        out[:] = np.eye(k)
        return out

    def precision_array(self, t0: int, t1: int) -> np.ndarray:
        return np.ones((t1 - t0, 1))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_parts": self.n_parts}


_DESIGN_REGISTRY: dict = {"identity": lambda d: IdentityDesign(d["n_parts"])}


def register_design(kind: str, loader) -> None:
    """Register a loader ``dict -> design`` for serialised model files."""
    _DESIGN_REGISTRY[kind] = loader


def design_from_dict(d: dict):
    try:
        loader = _DESIGN_REGISTRY[d["kind"]]
    except KeyError:
        raise ConfigError(f"unknown design kind {d.get('kind')!r}") from None
    return loader(d)


def model_to_json(spec: ModelSpec, design) -> str:
    return json.dumps({**spec.to_dict(), "design": design.to_dict()}, indent=2)


def model_from_json(text: str):
    d = json.loads(text)
    return ModelSpec.from_dict(d), design_from_dict(d["design"])


# ---------------------------------------------------------------------------
# Pointwise model functions


def precision_at(spec: ModelSpec, params: ParameterVector, design, t: int) -> float:
    """Precision phi_t = exp(z_t . gamma), guarded against exponent overflow."""
    expo = float(design.precision_covariates(t) @ params.gamma)
    if abs(expo) > _EXP_GUARD:
        raise PrecisionOverflowError(
            f"precision exponent {expo:.3g} outside +/-{_EXP_GUARD:g}", t=t
        )
    return float(np.exp(expo))


def linear_predictor(
    spec: ModelSpec,
    params: ParameterVector,
    design,
    alr_history: np.ndarray,
    eta_history: np.ndarray,
    t: int,
) -> np.ndarray:
    """ALR-scale predictor eta_t given histories through time t-1.

    ``alr_history[s]`` holds alr(y_s) and ``eta_history[s]`` the predictor at
    time ``s`` (defined as alr(y_s) for s < max lag).  Requires
    ``t >= max(P, Q)`` and histories covering every referenced lag.
    """
    m = spec.max_lag
    if t < m:
        raise ShapeError(f"predictor undefined before the max lag ({t} < {m})")
    alr_history = np.asarray(alr_history, dtype=float)
    eta_history = np.asarray(eta_history, dtype=float)
    if alr_history.shape[0] < t or eta_history.shape[0] < t:
        raise ShapeError("histories must cover all lags below t")
    eta = design.covariate_matrix(t) @ params.beta
    for p in range(1, spec.ar_order + 1):
        resid = alr_history[t - p] - design.covariate_matrix(t - p) @ params.beta
        eta = eta + params.ar[p - 1] @ resid
    for q in range(1, spec.ma_order + 1):
        innov = alr_history[t - q] - eta_history[t - q]
        eta = eta + params.ma[q - 1] @ innov
    return eta


# ---------------------------------------------------------------------------
# Likelihood


class DarmaLikelihood:
    """Log likelihood of a composition series under a fixed design.

    Precomputes the ALR-transformed series, log observations, and the dense
    covariate arrays, so repeated evaluations (as in MCMC) only pay for the
    recursion itself.
    """

    def __init__(self, spec: ModelSpec, design, series: np.ndarray):
        series = validate_compositions(series)
        if series.ndim != 2 or series.shape[1] != spec.n_parts:
            raise ShapeError(
                f"series has shape {series.shape}, expected (T, {spec.n_parts})"
            )
        if series.shape[0] <= spec.max_lag:
            raise ShapeError(
                f"series length {series.shape[0]} does not exceed max lag {spec.max_lag}"
            )
        if design.n_beta != spec.n_beta or design.n_gamma != spec.n_gamma:
            raise ConfigError(
                "design covariate counts do not match the model spec "
                f"({design.n_beta}/{design.n_gamma} vs {spec.n_beta}/{spec.n_gamma})"
            )
        self.spec = spec
        self.design = design
        self.series = series
        self.n_obs = series.shape[0]
        self.alr_y = alr(series)
        self.log_y = np.log(series)
        self.X = design.covariate_array(0, self.n_obs)
        self.z = design.precision_array(0, self.n_obs)
        if spec.ma_order > 0:
            self._init_banded()

    def _init_banded(self) -> None:
        """Index templates for the MA recursion as a banded linear solve.

        With innovations w_t = alr(y_t) - eta_t (zero before the max lag),
        the recursion eta_t = base_t + sum_q B_q w_{t-q} rearranges to the
        unit-lower-triangular block-banded system (I + L) eta = d, where
        block (i, i-q) of L equals B_q.  Solving it (and its transpose, for
        the gradient's adjoint sweep) replaces the sequential time loop.
        """
        spec = self.spec
        k = spec.n_alr
        n_rows = self.n_obs - spec.max_lag
        n = n_rows * k
        bw = (spec.ma_order + 1) * k - 1  # lower bandwidth of I + L
        self._band_n = n
        self._band_lower = bw
        a_idx, b_idx = np.divmod(np.arange(k * k), k)
        lower_pos, upper_pos, tiles = [], [], []
        for q in range(1, spec.ma_order + 1):
            blocks = np.arange(q, n_rows)
            rows = blocks[:, None] * k + a_idx[None, :]
            cols = (blocks[:, None] - q) * k + b_idx[None, :]
            # solve_banded stores entry (r, c) of the (l, u)-banded matrix at
            # ab[u + r - c, c]; flat positions index into ab.ravel()
            lower_pos.append(((rows - cols) * n + cols).ravel())
            upper_pos.append(((bw + cols - rows) * n + rows).ravel())
            tiles.append(len(blocks))
        self._band_lower_pos = lower_pos
        self._band_upper_pos = upper_pos
        self._band_tiles = tiles

    def _band_solve(self, params: ParameterVector, rhs: np.ndarray,
                    transpose: bool) -> np.ndarray:
        n, bw = self._band_n, self._band_lower
        ab = np.zeros((bw + 1, n))
        if transpose:
            ab[bw] = 1.0
            positions = self._band_upper_pos
            bands = (0, bw)
        else:
            ab[0] = 1.0
            positions = self._band_lower_pos
            bands = (bw, 0)
        flat = ab.reshape(-1)
        for q in range(self.spec.ma_order):
            # the position templates already encode the transposition
            flat[positions[q]] = np.tile(params.ma[q].ravel(), self._band_tiles[q])
        out = solve_banded(bands, ab, rhs.reshape(-1),
                           overwrite_ab=True, overwrite_b=False,
                           check_finite=False)
        return out.reshape(rhs.shape)

    # -- forward recursion -------------------------------------------------

    def _forward(self, params: ParameterVector):
        spec = self.spec
        m, T, k = spec.max_lag, self.n_obs, spec.n_alr
        xb = np.einsum("tjr,r->tj", self.X, params.beta)
        v = self.alr_y - xb
        base = xb[m:].copy()
        for p in range(1, spec.ar_order + 1):
            base += v[m - p:T - p] @ params.ar[p - 1].T
        if spec.ma_order == 0:
            eta = base
        else:
            # fold the alr(y) part of each MA term into the right-hand side;
            # terms whose lag falls before the max lag are zero by definition
            for q in range(1, spec.ma_order + 1):
                base[q:] += self.alr_y[m:T - q] @ params.ma[q - 1].T
            if not np.all(np.isfinite(base)):
                raise LikelihoodError("non-finite linear predictor", t=m)
            eta = self._band_solve(params, base, transpose=False)
        innov = self.alr_y[m:] - eta
        return xb, v, eta, innov

    def _precision(self, params: ParameterVector) -> np.ndarray:
        m = self.spec.max_lag
        expo = self.z[m:] @ params.gamma
        worst = np.abs(expo).max(initial=0.0)
        if not np.isfinite(worst) or worst > _EXP_GUARD:
            t = m + int(np.argmax(np.abs(expo)))
            raise PrecisionOverflowError(
                f"precision exponent magnitude {worst:.3g} exceeds {_EXP_GUARD:g} at t={t}",
                t=t,
            )
        return np.exp(expo)

    @staticmethod
    def _mean_rows(eta: np.ndarray) -> np.ndarray:
        """Exact softmax over (eta, 0) rows — no underflow floor.

        The likelihood gradient assumes the unmodified softmax Jacobian, so
        the floor used elsewhere (to keep sampled compositions positive)
        must not apply here: a mean component that underflows to zero makes
        the log density -inf, which the sampler treats as a rejection.
        """
        full = np.concatenate([eta, np.zeros((eta.shape[0], 1))], axis=1)
        full -= full.max(axis=1, keepdims=True)
        ex = np.exp(full)
        return ex / ex.sum(axis=1, keepdims=True)

    def _rowwise_terms(self, params: ParameterVector):
        m = self.spec.max_lag
        _, v, eta, innov = self._forward(params)
        phi = self._precision(params)
        mu = self._mean_rows(eta)
        alpha = phi[:, None] * mu
        logy = self.log_y[m:]
        rows = gammaln(phi) - gammaln(alpha).sum(axis=1) + ((alpha - 1.0) * logy).sum(axis=1)
        return v, eta, innov, phi, mu, alpha, rows

    def _check_rows(self, rows: np.ndarray) -> float:
        if not np.all(np.isfinite(rows)):
            t = self.spec.max_lag + int(np.argwhere(~np.isfinite(rows))[0][0])
            raise LikelihoodError(f"non-finite likelihood term at t={t}", t=t)
        return float(rows.sum())

    def log_likelihood(self, params: ParameterVector) -> float:
        """Sum of Dirichlet log densities over t = m+1 .. T."""
        params.check_shapes(self.spec)
        *_, rows = self._rowwise_terms(params)
        return self._check_rows(rows)

    def log_likelihood_grad(self, params: ParameterVector) -> tuple[float, np.ndarray]:
        """Value and gradient (flat, in packing order) of the log likelihood."""
        params.check_shapes(self.spec)
        spec = self.spec
        m, T, k = spec.max_lag, self.n_obs, spec.n_alr
        v, eta, innov, phi, mu, alpha, rows = self._rowwise_terms(params)
        value = self._check_rows(rows)

        logy = self.log_y[m:]
        g = dirichlet_grad_alpha_rows(alpha, logy)        # d row / d alpha
        s = (g * mu).sum(axis=1)                          # d row / d phi
        # d row / d eta via the softmax Jacobian (reference logit fixed at 0)
        deta = phi[:, None] * mu[:, :k] * (g[:, :k] - s[:, None])

        if spec.ma_order == 0:
            lam = deta
        else:
            lam = self._band_solve(params, deta, transpose=True)

        d_ar = np.empty_like(params.ar)
        for p in range(1, spec.ar_order + 1):
            d_ar[p - 1] = np.einsum("ti,tj->ij", lam, v[m - p:T - p])
        d_ma = np.empty_like(params.ma)
        innov_full = np.concatenate([np.zeros((m, k)), innov], axis=0)
        for q in range(1, spec.ma_order + 1):
            d_ma[q - 1] = np.einsum("ti,tj->ij", lam, innov_full[m - q:T - q])

        d_beta = np.einsum("tjr,tj->r", self.X[m:], lam)
        for p in range(1, spec.ar_order + 1):
            d_beta -= np.einsum("tjr,tj->r", self.X[m - p:T - p], lam @ params.ar[p - 1])
        d_gamma = self.z[m:].T @ (s * phi)

        grad = np.concatenate([d_ar.ravel(), d_ma.ravel(), d_beta, d_gamma])
        if not np.all(np.isfinite(grad)):
            raise LikelihoodError("non-finite likelihood gradient")
        return value, grad
