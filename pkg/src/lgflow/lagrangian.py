"""Linear-growth integrands f(x, xi) and their convex-analytic companions.

Every supported family is written in the canonical form

    f(x, xi) = sqrt(m**2 + |A(x) xi|**2),    A(x) = diag(a_1(x), ..., a_n(x)) > 0,

with ``m >= 0``.  Total variation is ``m = 0, A = I``; the area integrand is
``m = 1, A = I``; the weighted and anisotropic variants only change ``A``;
regularization by ``mu`` maps ``m -> sqrt(mu**2 + m**2)``.  From this form:

    recession   f_inf(x, xi) = |A xi|
    conjugate   f*(x, z)     = -m sqrt(1 - |A^-1 z|**2)   if |A^-1 z| <= 1, else +inf
    gradient    D_xi f       = A**2 xi / f                (undefined at xi = 0 when m = 0)

All functions broadcast over leading axes: ``xi`` and ``z`` have shape
``(..., n)`` and ``x`` (only consulted by the weighted family) has the same
leading shape.  Infeasible conjugate values are ``numpy.inf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import InvalidParam, NotDifferentiable

# |A^-1 z| may exceed 1 by rounding after a projection; treat that as the boundary.
FEASIBILITY_SLACK = 1e-12


class Kind(str, enum.Enum):
    TOTAL_VARIATION = "tv"
    AREA = "area"
    WEIGHTED_TV = "weighted_tv"
    ANISOTROPIC_TV = "anisotropic_tv"
    REGULARIZED = "regularized"


@dataclass(frozen=True, eq=False)
class LagrangianSpec:
    """An integrand from the supported linear-growth families.

    Use the constructors :func:`total_variation`, :func:`area`,
    :func:`weighted_tv`, :func:`anisotropic_tv` and :func:`regularize`
    rather than instantiating directly.

    ``weight`` (weighted family) is either a callable ``w(x)`` on points of
    shape ``(..., n)`` or an object with a ``sample(points)`` method, such as
    a :class:`lgflow.grid.ScalarField`.  ``weight_source`` records the field
    file path when the spec came from a config file.
    """

    kind: Kind
    lam: float
    big_lambda: float
    weight: Any = None
    axis_weights: Optional[tuple] = None
    inner: Optional["LagrangianSpec"] = None
    mu: float = 0.0
    weight_source: Optional[str] = field(default=None, compare=False)

    @property
    def m(self) -> float:
        """Constant under the square root of the canonical form."""
        if self.kind is Kind.REGULARIZED:
            return math.hypot(self.mu, self.inner.m)
        if self.kind is Kind.AREA:
            return 1.0
        return 0.0

    @property
    def base(self) -> "LagrangianSpec":
        """The unregularized family underneath any regularization layers."""
        spec = self
        while spec.kind is Kind.REGULARIZED:
            spec = spec.inner
        return spec

    @property
    def is_smooth(self) -> bool:
        return self.m > 0.0

    def axis_scale(self, x, n: int) -> np.ndarray:
        """Diagonal of A(x); shape ``(..., n)`` (``x`` leading shape) or ``(n,)``."""
        base = self.base
        if base.kind is Kind.ANISOTROPIC_TV:
            a = np.asarray(base.axis_weights, dtype=float)
            if a.shape != (n,):
                raise InvalidParam(f"axis_weights has {a.size} entries, need {n}")
            return a
        if base.kind is Kind.WEIGHTED_TV:
            if x is None:
                raise InvalidParam("weighted integrand needs the point x")
            w = _sample_weight(base.weight, np.asarray(x, dtype=float))
            return np.repeat(np.asarray(w, dtype=float)[..., None], n, axis=-1)
        return np.ones(n)

    def to_dict(self) -> dict:
        base = self.base
        out = {"kind": base.kind.value, "mu": float(self.mu if self.kind is Kind.REGULARIZED else 0.0)}
        if base.kind is Kind.ANISOTROPIC_TV:
            out["axis_weights"] = list(base.axis_weights)
        if base.kind is Kind.WEIGHTED_TV and base.weight_source is not None:
            out["weights"] = base.weight_source
        return out


def _sample_weight(weight, x: np.ndarray) -> np.ndarray:
    if hasattr(weight, "sample"):
        return weight.sample(x)
    if callable(weight):
        return np.asarray(weight(x), dtype=float)
    return np.full(x.shape[:-1], float(weight))


# ---------------------------------------------------------------- constructors

def total_variation() -> LagrangianSpec:
    return LagrangianSpec(Kind.TOTAL_VARIATION, 1.0, 1.0)


def area() -> LagrangianSpec:
    # |xi| <= sqrt(1 + |xi|^2) <= 1 + |xi|
    return LagrangianSpec(Kind.AREA, 1.0, 1.0)


def weighted_tv(weight, lam: Optional[float] = None, big_lambda: Optional[float] = None,
                weight_source: Optional[str] = None) -> LagrangianSpec:
    """``f(x, xi) = w(x) |xi|``.

    When the weight is a field the growth constants default to its min and
    max; for a callable they must be supplied.  A weight outside
    ``[lam, big_lambda]`` is rejected.
    """
    values = getattr(weight, "values", None)
    if values is not None:
        active = values[weight.grid.active] if hasattr(weight, "grid") else np.asarray(values)
        lo, hi = float(np.min(active)), float(np.max(active))
        lam = lo if lam is None else lam
        big_lambda = hi if big_lambda is None else big_lambda
        if lo < lam - 1e-15 or hi > big_lambda + 1e-15:
            raise InvalidParam(f"weight range [{lo}, {hi}] not inside [{lam}, {big_lambda}]")
    elif isinstance(weight, (int, float)):
        lam = float(weight) if lam is None else lam
        big_lambda = float(weight) if big_lambda is None else big_lambda
    if lam is None or big_lambda is None:
        raise InvalidParam("growth constants required for a callable weight")
    if not 0 < lam <= big_lambda:
        raise InvalidParam("need 0 < lam <= big_lambda")
    return LagrangianSpec(Kind.WEIGHTED_TV, float(lam), float(big_lambda), weight=weight,
                          weight_source=weight_source)


def anisotropic_tv(axis_weights: Sequence[float]) -> LagrangianSpec:
    """``f(xi) = sqrt(sum_j (a_j xi_j)^2)`` with per-axis weights ``a_j > 0``."""
    a = tuple(float(v) for v in axis_weights)
    if not a or min(a) <= 0:
        raise InvalidParam("axis weights must be positive")
    return LagrangianSpec(Kind.ANISOTROPIC_TV, min(a), max(a), axis_weights=a)


def regularize(spec: LagrangianSpec, mu: float) -> LagrangianSpec:
    """Return ``f_mu = sqrt(mu**2 + f**2)`` with recomputed growth constants."""
    if not mu > 0 or not math.isfinite(mu):
        raise InvalidParam(f"mu must be positive, got {mu}")
    if spec.kind is Kind.REGULARIZED:
        raise InvalidParam("spec is already regularized")
    m_new = math.hypot(mu, spec.m)
    # lam |xi| <= |A xi| <= f_mu <= m + |A xi| <= max(m, Lambda)(1 + |xi|)
    return LagrangianSpec(Kind.REGULARIZED, spec.lam, max(m_new, spec.big_lambda),
                          inner=spec, mu=float(mu))


def with_mu(spec: LagrangianSpec, mu: float) -> LagrangianSpec:
    """``spec`` itself for ``mu == 0``, otherwise the regularization of its base."""
    if mu == 0:
        return spec
    return regularize(spec.base, mu)


# ---------------------------------------------------------------- evaluation

def _prep(spec, x, v):
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    a = spec.axis_scale(x, n)
    return v, a


def evaluate(spec: LagrangianSpec, x, xi):
    """f(x, xi)."""
    xi, a = _prep(spec, x, xi)
    return _scalar(np.sqrt(spec.m ** 2 + np.sum((a * xi) ** 2, axis=-1)))


def recession(spec: LagrangianSpec, x, xi):
    """f_inf(x, xi) = |A(x) xi|; the constant ``m`` disappears under scaling."""
    xi, a = _prep(spec, x, xi)
    return _scalar(np.sqrt(np.sum((a * xi) ** 2, axis=-1)))


def grad(spec: LagrangianSpec, x, xi):
    """D_xi f(x, xi).

    Raises
    ------
    NotDifferentiable
        For ``m == 0`` families at ``xi == 0``.
    """
    xi, a = _prep(spec, x, xi)
    f = np.sqrt(spec.m ** 2 + np.sum((a * xi) ** 2, axis=-1))
    if np.any(f == 0.0):
        raise NotDifferentiable(f"{spec.kind.value} has a kink at xi = 0")
    return a ** 2 * xi / f[..., None]


def conjugate(spec: LagrangianSpec, x, z):
    """f*(x, z); ``numpy.inf`` outside the dual ball ``|A^-1 z| <= 1``."""
    z, a = _prep(spec, x, z)
    s2 = np.sum((z / a) ** 2, axis=-1)
    return _scalar(_conj_from_s2(spec.m, s2))


def _conj_from_s2(m: float, s2):
    s2 = np.asarray(s2, dtype=float)
    out = np.where(s2 <= (1.0 + FEASIBILITY_SLACK) ** 2,
                   -m * np.sqrt(np.clip(1.0 - s2, 0.0, None)), np.inf)
    return out


def fenchel_gap(spec: LagrangianSpec, x, xi, z):
    """f(x, xi) + f*(x, z) - z.xi >= 0, zero iff z is a subgradient at xi."""
    xi, a = _prep(spec, x, xi)
    z = np.asarray(z, dtype=float)
    f = np.sqrt(spec.m ** 2 + np.sum((a * xi) ** 2, axis=-1))
    fs = _conj_from_s2(spec.m, np.sum((z / a) ** 2, axis=-1))
    return _scalar(f + fs - np.sum(z * xi, axis=-1))


def sign0(a):
    """Sign with ``sign0(0) = 0``."""
    return np.sign(a)


def _scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def spec_from_dict(d: dict, grid=None, base_dir=None) -> LagrangianSpec:
    """Build a spec from the ``[lagrangian]`` config section.

    Keys: ``kind`` (tv | area | weighted_tv | anisotropic_tv), optional
    ``mu``, ``weights`` (field file path) and ``axis_weights``.
    """
    import os

    kind = str(d.get("kind", "tv"))
    if kind == Kind.TOTAL_VARIATION.value:
        spec = total_variation()
    elif kind == Kind.AREA.value:
        spec = area()
    elif kind == Kind.WEIGHTED_TV.value:
        path = d.get("weights")
        if path is None:
            raise InvalidParam("weighted_tv needs 'weights' (field file path)")
        from .grid import read_field

        full = path if base_dir is None or os.path.isabs(path) else os.path.join(base_dir, path)
        w = read_field(full)
        if grid is not None:
            w = w.on_grid(grid)
        spec = weighted_tv(w, weight_source=path)
    elif kind == Kind.ANISOTROPIC_TV.value:
        if "axis_weights" not in d:
            raise InvalidParam("anisotropic_tv needs 'axis_weights'")
        spec = anisotropic_tv(d["axis_weights"])
    else:
        raise InvalidParam(f"unknown lagrangian kind {kind!r}")
    mu = float(d.get("mu", 0.0))
    if mu < 0:
        raise InvalidParam("mu must be >= 0")
    return regularize(spec, mu) if mu > 0 else spec
