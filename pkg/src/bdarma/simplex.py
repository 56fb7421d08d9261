"""Simplex geometry and Dirichlet primitives.

Compositions are represented as plain float arrays whose entries are strictly
positive and sum to one.  The additive log-ratio (ALR) transform maps a
J-part composition to an unconstrained (J-1)-vector using the last part as
the reference; its inverse is a stabilised softmax with the reference logit
pinned at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .errors import InvalidCompositionError

# Entries this small are treated as numerically zero and lifted back onto the
# open simplex before renormalising.
_SHARE_FLOOR = 1e-12
# alr_inv never returns exact zeros; exponentials are floored here instead.
_EXP_FLOOR = 1e-300
_SUM_ATOL = 1e-10


def closure(x: np.ndarray) -> np.ndarray:
    """Rescale non-negative rows so each sums to one."""
    x = np.asarray(x, dtype=float)
    total = x.sum(axis=-1, keepdims=True)
    if np.any(total <= 0) or not np.all(np.isfinite(total)):
        raise InvalidCompositionError("cannot normalise rows with non-positive sum")
    return x / total


def clamp_shares(x: np.ndarray, floor: float = _SHARE_FLOOR) -> np.ndarray:
    """Lift entries below ``floor`` onto the open simplex and renormalise."""
    return closure(np.maximum(np.asarray(x, dtype=float), floor))


def validate_compositions(x: np.ndarray, atol: float = _SUM_ATOL) -> np.ndarray:
    """Check that rows of ``x`` are strictly positive and sum to one.

    Returns the validated float array.  Raises
    :class:`~bdarma.errors.InvalidCompositionError` on the first violated
    condition, identifying the offending row.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return validate_compositions(x[None, :], atol)[0]
    if x.ndim != 2 or x.shape[-1] < 2:
        raise InvalidCompositionError(
            f"expected rows with at least two parts, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        t = int(np.argwhere(~np.isfinite(x).all(axis=1))[0][0])
        raise InvalidCompositionError(f"non-finite entry in row {t}")
    if np.any(x <= 0):
        t = int(np.argwhere((x <= 0).any(axis=1))[0][0])
        raise InvalidCompositionError(f"non-positive entry in row {t}")
    sums = x.sum(axis=1)
    bad = np.abs(sums - 1.0) > atol
    if np.any(bad):
        t = int(np.argwhere(bad)[0][0])
        raise InvalidCompositionError(
            f"row {t} sums to {sums[t]:.12f}, expected 1 within {atol:g}"
        )
    return x


def alr(comps: np.ndarray) -> np.ndarray:
    """Additive log-ratio transform with the last part as reference.

    Parameters
    ----------
    comps : array, shape (..., J)
        Compositions (strictly positive rows summing to one).

    Returns
    -------
    array, shape (..., J-1)
        ``log(comps[..., j] / comps[..., J-1])`` for ``j < J-1``.
    """
    c = np.asarray(comps, dtype=float)
    if c.shape[-1] < 2:
        raise InvalidCompositionError("alr needs at least two parts")
    if not np.all(np.isfinite(c)):
        raise InvalidCompositionError("alr requires finite entries")
    if np.any(c <= 0):
        raise InvalidCompositionError("alr requires strictly positive entries")
    sums = c.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > _SUM_ATOL):
        raise InvalidCompositionError("alr rows must sum to 1 within 1e-10")
    logc = np.log(c)
    return logc[..., :-1] - logc[..., -1:]


def alr_inv(vals: np.ndarray) -> np.ndarray:
    """Inverse ALR: softmax of ``(vals, 0)``, stabilised against overflow.

    The output rows are strictly positive (entries floored at 1e-300 before a
    final renormalisation) and sum to one.
    """
    v = np.asarray(vals, dtype=float)
    z = np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], axis=-1)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.maximum(np.exp(z), _EXP_FLOOR)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class DirichletParams:
    """Dirichlet distribution in mean/precision form: ``alpha = precision * mean``."""

    mean: np.ndarray
    precision: float

    def __post_init__(self):
        object.__setattr__(self, "mean", validate_compositions(self.mean))
        if not (self.precision > 0 and np.isfinite(self.precision)):
            raise InvalidCompositionError("precision must be positive and finite")

    @property
    def alpha(self) -> np.ndarray:
        return self.precision * self.mean


def _as_alpha(p) -> np.ndarray:
    alpha = p.alpha if isinstance(p, DirichletParams) else np.asarray(p, dtype=float)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise InvalidCompositionError("Dirichlet concentration must be positive and finite")
    return alpha


def dirichlet_logpdf(y: np.ndarray, p) -> float:
    """Log density of a Dirichlet at composition ``y``.

    ``p`` is either a :class:`DirichletParams` or a raw concentration vector.
    """
    y = validate_compositions(y)
    alpha = _as_alpha(p)
    return float(
        gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1.0) * np.log(y)).sum()
    )


def dirichlet_logpdf_grad(y: np.ndarray, p) -> tuple[float, np.ndarray]:
    """Log density and its gradient with respect to the concentration vector.

    The gradient component for part ``j`` is
    ``digamma(sum(alpha)) - digamma(alpha_j) + log(y_j)``.
    """
    y = validate_compositions(y)
    alpha = _as_alpha(p)
    val = gammaln(alpha.sum()) - gammaln(alpha).sum() + ((alpha - 1.0) * np.log(y)).sum()
    grad = digamma(alpha.sum()) - digamma(alpha) + np.log(y)
    return float(val), grad


def dirichlet_logpdf_rows(alpha: np.ndarray, log_y: np.ndarray) -> np.ndarray:
    """Row-wise Dirichlet log density for pre-logged observations.

    Parameters
    ----------
    alpha : array, shape (T, J)
    log_y : array, shape (T, J)

    Returns
    -------
    array, shape (T,)
    """
    return (
        gammaln(alpha.sum(axis=-1))
        - gammaln(alpha).sum(axis=-1)
        + ((alpha - 1.0) * log_y).sum(axis=-1)
    )


def dirichlet_grad_alpha_rows(alpha: np.ndarray, log_y: np.ndarray) -> np.ndarray:
    """Row-wise gradient of :func:`dirichlet_logpdf_rows` w.r.t. ``alpha``."""
    return digamma(alpha.sum(axis=-1, keepdims=True)) - digamma(alpha) + log_y


def dirichlet_sample(p, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw compositions from a Dirichlet via normalised Gamma variates.

    Accepts a :class:`DirichletParams` or a concentration array of shape
    ``(..., J)``.  With ``size=n`` the concentration must be a single vector
    and the result has shape ``(n, J)``.  Draws are floored at 1e-12 and
    renormalised, so the output never contains exact zeros.
    """
    alpha = _as_alpha(p)
    if size is not None:
        if alpha.ndim != 1:
            raise InvalidCompositionError("size= requires a single concentration vector")
        alpha = np.broadcast_to(alpha, (size, alpha.shape[0]))
    g = rng.standard_gamma(alpha)
    g = np.maximum(g, _EXP_FLOOR)
    return clamp_shares(g / g.sum(axis=-1, keepdims=True))
