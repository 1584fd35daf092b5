"""Short-run equilibrium of the single-capability economy.

Output is revenue ``pi_p * (1 - q_p * (1 - r_c))``; labor is the only factor,
households have log utility over activities, and prices clear each market.
The price level is indeterminate, so prices are normalized to mean 1.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ecx.errors import DimensionError, NumericalError, ValidationError
from ecx.model import OutputMatrix
from ecx.oracle import sign_condition
from ecx.pipeline import SpecializationMatrix

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

DEFAULT_ETA = 0.1
DEFAULT_DT = 1.0


def _vec(x: ArrayLike, name: str) -> FloatArray:
    arr = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


def _prob(x: ArrayLike, name: str) -> FloatArray:
    arr = _vec(x, name)
    if arr.min() < 0 or arr.max() > 1:
        raise ValidationError(f"{name} entries must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class PriceVector:
    values: FloatArray

    def __post_init__(self) -> None:
        values = _vec(self.values, "prices")
        if not np.all(values > 0):
            raise ValidationError("prices must be strictly positive")
        object.__setattr__(self, "values", values)

    def normalized(self) -> PriceVector:
        return PriceVector(self.values / self.values.mean())

    @property
    def mean(self) -> float:
        return float(self.values.mean())


def _prices(pi: PriceVector | ArrayLike) -> FloatArray:
    return pi.values if isinstance(pi, PriceVector) else PriceVector(pi).values


@dataclass(frozen=True)
class PreferenceMatrix:
    """Log-utility weights ``B[c, p]``; only ratios within a row matter."""

    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionError("preference matrix must be two-dimensional")
        if values.min() < 0:
            raise ValidationError("preference weights must be nonnegative")
        if not np.all(values.sum(axis=1) > 0):
            raise ValidationError("every economy needs a positive preference total")
        object.__setattr__(self, "values", values)

    @property
    def row_means(self) -> FloatArray:
        return self.values.mean(axis=1)

    @classmethod
    def uniform(cls, n_c: int, n_p: int) -> PreferenceMatrix:
        return cls(np.ones((n_c, n_p)))


@dataclass(frozen=True)
class ConsumptionMatrix:
    values: FloatArray
    income: FloatArray

    def budget_residual(self, pi: PriceVector | ArrayLike) -> float:
        spent = self.values @ _prices(pi)
        return float(np.abs(spent - self.income).max())


@dataclass(frozen=True)
class EconomyAccounts:
    """Labor, wages, income ``Y_c = w_c L_c`` and physical output ``y_c``."""

    labor: FloatArray
    wages: FloatArray
    income: FloatArray
    physical_output: FloatArray


class WageSchedule(NamedTuple):
    wages: FloatArray
    slope: FloatArray  # dw*/dr_c


def physical_output(q: ArrayLike, r: ArrayLike) -> FloatArray:
    """``y_cp = 1 - q_p * (1 - r_c)``."""
    return 1.0 - np.outer(1.0 - _prob(r, "r"), _prob(q, "q"))


def accounts(pi: PriceVector | ArrayLike, q: ArrayLike, r: ArrayLike, labor: ArrayLike) -> EconomyAccounts:
    labor = _vec(labor, "labor")
    if not np.all(labor > 0):
        raise ValidationError("labor must be positive")
    y = physical_output(q, r)
    income = y @ _prices(pi)
    return EconomyAccounts(labor, income / labor, income, y.sum(axis=1))


def equilibrium_wages(
    pi: PriceVector | ArrayLike, q: ArrayLike, r: ArrayLike, labor: ArrayLike
) -> WageSchedule:
    """``w*_c = N_p (<pi> + <q pi> (r_c - 1)) / L_c`` and its slope in ``r_c``."""
    p = _prices(pi)
    q = _prob(q, "q")
    r = _prob(r, "r")
    labor = _vec(labor, "labor")
    if p.size != q.size or labor.size != r.size:
        raise DimensionError("prices/q and labor/r must have matching lengths")
    if not np.all(labor > 0):
        raise ValidationError("labor must be positive")
    n_p = q.size
    mean_pi = p.mean()
    mean_qpi = (q * p).mean()
    wages = n_p * (mean_pi + mean_qpi * (r - 1.0)) / labor
    return WageSchedule(wages, n_p * mean_qpi / labor)


def wage_relaxation_step(
    w: ArrayLike, w_star: ArrayLike, eta: float = DEFAULT_ETA, dt: float = DEFAULT_DT
) -> FloatArray:
    """One explicit Euler step of ``dw/dt = -eta (w - w*)``."""
    if eta <= 0 or dt <= 0:
        raise ValidationError("eta and dt must be positive")
    if eta * dt >= 1:
        warnings.warn(
            f"eta*dt = {eta * dt:g} >= 1: wage relaxation overshoots or diverges",
            RuntimeWarning,
            stacklevel=2,
        )
    w = _vec(w, "w")
    w_star = _vec(w_star, "w_star")
    return w - eta * dt * (w - w_star)


def relax_wages(
    w0: ArrayLike, w_star: ArrayLike, steps: int, eta: float = DEFAULT_ETA, dt: float = DEFAULT_DT
) -> FloatArray:
    """Trajectory of ``steps`` relaxation steps, shape ``(steps + 1, N_c)``."""
    path = [_vec(w0, "w0")]
    for _ in range(steps):
        path.append(wage_relaxation_step(path[-1], w_star, eta, dt))
    return np.stack(path)


def price_threshold(q: ArrayLike, pi: PriceVector | ArrayLike) -> float:
    """Activity cutoff ``<q> + cov(q, pi) / <pi>`` (equals ``<q pi> / <pi>``)."""
    q = _prob(q, "q")
    p = _prices(pi)
    cov = float(np.mean((q - q.mean()) * (p - p.mean())))
    return float(q.mean() + cov / p.mean())


def priced_specialization(
    r: ArrayLike, q: ArrayLike, pi: PriceVector | ArrayLike
) -> tuple[SpecializationMatrix, float]:
    """Sign condition ``(r_c - <r>)(q_p <pi> - <q pi>) >= 0`` and the activity threshold."""
    r = _prob(r, "r")
    q = _prob(q, "q")
    p = _prices(pi)
    if p.size != q.size:
        raise DimensionError("prices and q must have equal length")
    m = sign_condition(r - r.mean(), q * p.mean() - (q * p).mean())
    return SpecializationMatrix(m), price_threshold(q, p)


def consumption(
    prefs: PreferenceMatrix, pi: PriceVector | ArrayLike, q: ArrayLike, r: ArrayLike
) -> ConsumptionMatrix:
    """Log-utility demand ``C_cp = B_cp (<pi> - (1 - r_c) <q pi>) / (pi_p <B_c>)``."""
    p = _prices(pi)
    q = _prob(q, "q")
    r = _prob(r, "r")
    b = prefs.values
    if b.shape != (r.size, q.size) or p.size != q.size:
        raise DimensionError("preference matrix must be N_c x N_p matching r, q and prices")
    per_activity = p.mean() - (1.0 - r) * (q * p).mean()
    values = b * per_activity[:, None] / (p[None, :] * prefs.row_means[:, None])
    income = q.size * per_activity
    return ConsumptionMatrix(values, income)


def supply(q: ArrayLike, r: ArrayLike) -> FloatArray:
    """Global physical supply ``y_p = N_c (1 - q_p (1 - <r>))``."""
    q = _prob(q, "q")
    r = _prob(r, "r")
    return r.size * (1.0 - q * (1.0 - r.mean()))


def price_operator(prefs: PreferenceMatrix, q: ArrayLike, r: ArrayLike) -> FloatArray:
    """Matrix ``K`` with the market-clearing fixed point ``pi = K pi``.

    ``K[p, p'] = sum_c W_cp (1 - (1 - r_c) q_p') / (N_p y_p)`` with
    ``W = B / <B_c>``; it is nonnegative and ``y`` is a left eigenvector with
    eigenvalue 1, so the clearing prices are its Perron vector.
    """
    q = _prob(q, "q")
    r = _prob(r, "r")
    y = supply(q, r)
    if not np.all(y > 0):
        raise ValidationError("global supply must be positive for every activity")
    w = prefs.values / prefs.row_means[:, None]
    if w.shape != (r.size, q.size):
        raise DimensionError("preference matrix must be N_c x N_p")
    inner = 1.0 - np.outer(1.0 - r, q)  # (c, p')
    return (w.T @ inner) / (q.size * y[:, None])


def price_map(pi: ArrayLike, prefs: PreferenceMatrix, q: ArrayLike, r: ArrayLike) -> FloatArray:
    """Right-hand side of the clearing condition evaluated directly from its definition."""
    p = _vec(pi, "pi")
    q = _prob(q, "q")
    r = _prob(r, "r")
    w = prefs.values / prefs.row_means[:, None]
    per = p.mean() - (q * p).mean() * (1.0 - r)
    return (w * per[:, None]).sum(axis=0) / supply(q, r)


@dataclass(frozen=True)
class PriceSolution:
    prices: PriceVector
    iterations: int
    method: str
    fixed_point_residual: float
    clearing_residual: float


def solve_prices(
    prefs: PreferenceMatrix,
    q: ArrayLike,
    r: ArrayLike,
    init: ArrayLike | None = None,
    *,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    dense_max: int = 2000,
) -> PriceSolution:
    """Market-clearing prices with mean 1.

    Power iteration on the linear price operator with mean normalization at
    each step; falls back to a dense eigen-solve when it stalls.
    """
    k = price_operator(prefs, q, r)
    n_p = k.shape[0]
    p = np.ones(n_p) if init is None else _vec(init, "init")
    if p.size != n_p or not np.all(p > 0):
        raise ValidationError("initial prices must be positive with one entry per activity")
    p = p / p.mean()
    method = "power"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = k @ p
        nxt /= nxt.mean()
        if np.abs(nxt - p).max() < tol:
            p = nxt
            converged = True
            break
        p = nxt
    if not converged or np.any(p <= 0):
        if n_p > dense_max:
            raise NumericalError(
                f"price iteration did not converge in {max_iter} steps "
                f"(residual {np.abs(k @ p - p).max():.3e})"
            )
        log.info("price power iteration stalled; using dense eigen-solve")
        w, v = np.linalg.eig(k)
        idx = int(np.argmin(np.abs(w - 1.0)))
        p = np.real(v[:, idx])
        p = p / p.mean()
        method = "dense"
    if np.any(p <= 0):
        raise NumericalError("market-clearing prices are not strictly positive")
    # polish so the fixed point holds to round-off
    for _ in range(3):
        p = k @ p
        p /= p.mean()
    fp = float(np.abs(price_map(p, prefs, q, r) - p).max())
    demand = consumption(prefs, p, q, r).values.sum(axis=0)
    clearing = float(np.abs(demand - supply(q, r)).max())
    return PriceSolution(PriceVector(p), it, method, fp, clearing)


def priced_output(pi: PriceVector | ArrayLike, q: ArrayLike, r: ArrayLike) -> OutputMatrix:
    """Revenue matrix ``pi_p (1 - q_p (1 - r_c))`` in the given row/column order."""
    p = _prices(pi)
    y = physical_output(q, r)
    if p.size != y.shape[1]:
        raise DimensionError("prices and q must have equal length")
    return OutputMatrix(y * p[None, :])


def supply_residual(c: ConsumptionMatrix, q: ArrayLike, r: ArrayLike) -> FloatArray:
    """Per-economy gap ``sum_p C_cp - y_c`` (reported, not enforced)."""
    return c.values.sum(axis=1) - physical_output(q, r).sum(axis=1)
