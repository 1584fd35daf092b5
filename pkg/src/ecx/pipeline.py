"""Output matrix -> RCA -> specialization -> projection -> ECI/PCI.

All averages here are arithmetic means. Rows or columns whose marginals vanish
are never silently filled: ``rca`` marks them, ``binarize`` and the projections
drop them (logging a warning) or raise, depending on ``policy``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import rankdata

from ecx.errors import DimensionError, EmptyInputError, NumericalError, ValidationError
from ecx.model import OutputMatrix

log = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
Policy = Literal["drop", "error"]

# ties at exactly R = 1 are specialized; this absorbs round-off at model-generated ties
TIE_RTOL = 1e-10
DEGENERACY_TOL = 1e-9
COMPLEX_TOL = 1e-8
DENSE_MAX = 512
POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


@dataclass(frozen=True)
class RcaMatrix:
    """Balassa revealed comparative advantage.

    Entries in rows/columns with zero output are NaN and flagged in
    ``undefined_rows`` / ``undefined_cols``.
    """

    values: FloatArray
    economy_ids: tuple[str, ...]
    activity_ids: tuple[str, ...]
    undefined_rows: NDArray[np.bool_]
    undefined_cols: NDArray[np.bool_]

    @property
    def is_defined(self) -> bool:
        return not (self.undefined_rows.any() or self.undefined_cols.any())


@dataclass(frozen=True)
class SpecializationMatrix:
    """Binary ``M_cp`` with its diversity (row sums) and ubiquity (column sums)."""

    values: NDArray[np.int8]
    economy_ids: tuple[str, ...] = ()
    activity_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise DimensionError("specialization matrix must be two-dimensional")
        if not np.isin(values, (0, 1)).all():
            raise ValidationError("specialization matrix entries must be 0 or 1")
        object.__setattr__(self, "values", values.astype(np.int8))
        n_c, n_p = values.shape
        if not self.economy_ids:
            object.__setattr__(self, "economy_ids", tuple(f"c{i}" for i in range(n_c)))
        if not self.activity_ids:
            object.__setattr__(self, "activity_ids", tuple(f"p{j}" for j in range(n_p)))
        if len(self.economy_ids) != n_c or len(self.activity_ids) != n_p:
            raise DimensionError("id labels do not match matrix shape")

    @property
    def diversity(self) -> NDArray[np.int64]:
        return self.values.sum(axis=1, dtype=np.int64)

    @property
    def ubiquity(self) -> NDArray[np.int64]:
        return self.values.sum(axis=0, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def transpose(self) -> SpecializationMatrix:
        return SpecializationMatrix(self.values.T, self.activity_ids, self.economy_ids)

    def subset(self, rows: ArrayLike, cols: ArrayLike) -> SpecializationMatrix:
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return SpecializationMatrix(
            self.values[np.ix_(rows, cols)],
            tuple(self.economy_ids[i] for i in rows),
            tuple(self.activity_ids[j] for j in cols),
        )


@dataclass(frozen=True)
class ProjectionMatrix:
    """Row-stochastic similarity matrix between economies (or activities)."""

    values: FloatArray
    kind: Literal["economy", "activity"] = "economy"
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError("projection matrix must be square")
        object.__setattr__(self, "values", values)
        if not self.ids:
            object.__setattr__(self, "ids", tuple(str(i) for i in range(values.shape[0])))

    def row_sum_error(self) -> float:
        return float(np.abs(self.values.sum(axis=1) - 1.0).max())


@dataclass(frozen=True)
class ComplexityResult:
    """Second-eigenvector complexity scores.

    ``eci_raw`` is the unit-norm eigenvector (or last reflections iterate),
    ``eci`` its z-score. ``pci`` fields are filled only by :func:`complexity`.
    """

    eci: FloatArray
    eci_raw: FloatArray
    eigenvalues: FloatArray
    method: Literal["eigen", "reflections"]
    sign_anchor: str
    economy_ids: tuple[str, ...] = ()
    pci: FloatArray | None = None
    pci_raw: FloatArray | None = None
    activity_ids: tuple[str, ...] = ()
    degenerate: bool = False
    converged: bool = True
    iterations: int = 0
    flags: tuple[str, ...] = field(default_factory=tuple)

    @property
    def second_eigenvalue(self) -> float:
        return float(self.eigenvalues[1]) if self.eigenvalues.size > 1 else float("nan")


# ---------------------------------------------------------------------------
# RCA and binarization
# ---------------------------------------------------------------------------


def rca(y: OutputMatrix | ArrayLike) -> RcaMatrix:
    """``R_cp = Y_cp * Y / (Y_c * Y_p)``."""
    if isinstance(y, OutputMatrix):
        values, e_ids, a_ids = y.values, y.economy_ids, y.activity_ids
    else:
        out = OutputMatrix(np.asarray(y, dtype=float))
        values, e_ids, a_ids = out.values, out.economy_ids, out.activity_ids
    total = values.sum()
    if not total > 0:
        raise EmptyInputError("output matrix sums to zero")
    y_c = values.sum(axis=1)
    y_p = values.sum(axis=0)
    bad_rows = y_c <= 0
    bad_cols = y_p <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        r = values * total / np.outer(y_c, y_p)
    r[bad_rows, :] = np.nan
    r[:, bad_cols] = np.nan
    return RcaMatrix(r, tuple(e_ids), tuple(a_ids), bad_rows, bad_cols)


def binarize(
    r: RcaMatrix, threshold: float = 1.0, policy: Policy = "drop", rtol: float = TIE_RTOL
) -> SpecializationMatrix:
    """``M_cp = 1`` iff ``R_cp >= threshold`` (ties count as specialized).

    ``rtol`` widens the comparison by a relative hair so that analytically
    exact ties survive floating-point evaluation of the RCA ratio.
    """
    rows = np.flatnonzero(~r.undefined_rows)
    cols = np.flatnonzero(~r.undefined_cols)
    if not r.is_defined:
        if policy == "error":
            raise ValidationError("RCA matrix has undefined rows or columns")
        log.warning(
            "dropping %d zero-output economies and %d zero-output activities",
            r.undefined_rows.sum(),
            r.undefined_cols.sum(),
        )
    vals = r.values[np.ix_(rows, cols)]
    m = (vals >= threshold * (1.0 - rtol)).astype(np.int8)
    return SpecializationMatrix(
        m, tuple(r.economy_ids[i] for i in rows), tuple(r.activity_ids[j] for j in cols)
    )


def drop_empty(m: SpecializationMatrix, policy: Policy = "drop") -> SpecializationMatrix:
    """Remove zero-diversity economies and zero-ubiquity activities."""
    rows = np.flatnonzero(m.diversity > 0)
    cols = np.flatnonzero(m.ubiquity > 0)
    if rows.size == m.shape[0] and cols.size == m.shape[1]:
        return m
    if policy == "error":
        raise ValidationError("specialization matrix has zero-diversity rows or zero-ubiquity columns")
    log.warning(
        "dropping %d zero-diversity economies and %d zero-ubiquity activities",
        m.shape[0] - rows.size,
        m.shape[1] - cols.size,
    )
    if rows.size == 0 or cols.size == 0:
        raise EmptyInputError("specialization matrix is empty after dropping")
    return m.subset(rows, cols)


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------


def _project(values: NDArray[np.int8]) -> FloatArray:
    m = values.astype(float)
    k_rows = m.sum(axis=1)
    k_cols = m.sum(axis=0)
    return (m / k_rows[:, None]) @ (m / k_cols[None, :]).T


def project_economies(m: SpecializationMatrix, policy: Policy = "drop") -> ProjectionMatrix:
    """``M_cc' = (1/M_c) sum_p M_cp M_c'p / M_p``."""
    m = drop_empty(m, policy)
    return ProjectionMatrix(_project(m.values), "economy", m.economy_ids)


def project_activities(m: SpecializationMatrix, policy: Policy = "drop") -> ProjectionMatrix:
    """``M_pp' = (1/M_p) sum_c M_cp M_cp' / M_c``."""
    m = drop_empty(m, policy)
    return ProjectionMatrix(_project(m.values.T), "activity", m.activity_ids)


# ---------------------------------------------------------------------------
# Eigenvector complexity
# ---------------------------------------------------------------------------


def zscore(x: ArrayLike) -> FloatArray:
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if not sd > 0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def orient(v: FloatArray, anchor: ArrayLike | None = None, tol: float = 1e-12) -> tuple[FloatArray, str]:
    """Fix the sign of ``v``: nonnegative covariance with ``anchor``, else positive first entry."""
    scale = np.abs(v).max()
    if anchor is not None:
        a = np.asarray(anchor, dtype=float)
        cov = float(np.mean((v - v.mean()) * (a - a.mean())))
        spread = float(v.std() * a.std())
        if abs(cov) > tol * max(spread, 1e-300) and spread > 0:
            return (v if cov > 0 else -v), "covariance with anchor"
    nz = np.flatnonzero(np.abs(v) > tol * scale) if scale > 0 else np.array([], dtype=int)
    if nz.size and v[nz[0]] < 0:
        return -v, "first nonzero component positive"
    return v, "first nonzero component positive"


def _dense_second(p: FloatArray, anchor: ArrayLike | None) -> tuple[FloatArray, FloatArray, bool]:
    w, vecs = np.linalg.eig(p)
    order = np.lexsort((-w.imag, -w.real))
    w = w[order]
    vecs = vecs[:, order]
    n = p.shape[0]
    if abs(w[0] - 1.0) > 1e-8:
        raise NumericalError(f"leading eigenvalue {w[0]} is not 1; matrix is not row-stochastic")
    degenerate = abs(w[0] - w[1]) < DEGENERACY_TOL
    if degenerate:
        top = np.flatnonzero(np.abs(w - w[0]) < DEGENERACY_TOL)
        basis = np.real(vecs[:, top])
        ones = np.ones(n) / np.sqrt(n)
        # eigenspace minus the all-ones direction
        basis = basis - np.outer(ones, ones @ basis)
        u, s, _ = np.linalg.svd(basis, full_matrices=False)
        u = u[:, s > 1e-8 * max(s.max(), 1e-300)]
        if u.shape[1] == 0:
            raise NumericalError("degenerate top eigenspace has no direction orthogonal to ones")
        if anchor is not None and u.shape[1] > 1:
            a = np.asarray(anchor, dtype=float)
            v = u @ (u.T @ (a - a.mean()))
            if np.linalg.norm(v) < 1e-12:
                v = u[:, 0]
        else:
            v = u[:, 0]
    else:
        lam = w[1]
        if abs(lam.imag) > COMPLEX_TOL * max(abs(lam), 1e-300):
            raise NumericalError(
                f"second eigenvalue is complex: {lam!r} (spectrum head {w[:4]!r})"
            )
        v = vecs[:, 1]
        k = np.argmax(np.abs(v))
        v = np.real(v * np.exp(-1j * np.angle(v[k])))
    return np.real(w), v, degenerate


def _stationary(p: FloatArray, tol: float, max_iter: int) -> FloatArray:
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = 0.5 * (pi + pi @ p)
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < tol:
            return nxt
        pi = nxt
    return pi


def _power_second(
    p: FloatArray, anchor: ArrayLike | None, tol: float, max_iter: int
) -> tuple[FloatArray, FloatArray, bool, int]:
    n = p.shape[0]
    pi = _stationary(p, tol * 1e-2, max_iter)
    rng = np.random.Generator(np.random.PCG64(n))
    x = rng.standard_normal(n) if anchor is None else np.asarray(anchor, dtype=float).copy()
    x = x - (pi @ x)
    if np.linalg.norm(x) == 0:
        x = rng.standard_normal(n)
        x = x - (pi @ x)
    x /= np.linalg.norm(x)
    converged = False
    lam = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        y = 0.5 * (x + p @ x)  # shift keeps the spectrum in the right half of the unit disc
        y = y - (pi @ y)
        norm = np.linalg.norm(y)
        if norm == 0:
            break
        y /= norm
        lam = float(x @ (p @ x))
        if np.abs(y - x).max() < tol:
            x = y
            converged = True
            break
        x = y
    lam = float(x @ (p @ x))
    if not converged:
        log.warning("power iteration did not converge in %d iterations", max_iter)
    return np.array([1.0, lam]), x, converged, it


def eci_eigen(
    proj: ProjectionMatrix,
    anchor: ArrayLike | None = None,
    *,
    dense_max: int = DENSE_MAX,
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
) -> ComplexityResult:
    """Second eigenvector of a row-stochastic projection.

    When the unit eigenvalue is degenerate the result is the top-eigenspace
    vector orthogonal to the all-ones vector. ``anchor`` sets the global sign
    (nonnegative covariance); :func:`complexity` passes the diversity-seeded
    second reflections iterate.
    """
    p = proj.values
    n = p.shape[0]
    if n < 2:
        raise DimensionError("need at least two rows to extract a second eigenvector")
    converged, iterations = True, 0
    if n <= dense_max:
        eigenvalues, v, degenerate = _dense_second(p, anchor)
    else:
        eigenvalues, v, converged, iterations = _power_second(p, anchor, tol, max_iter)
        degenerate = abs(eigenvalues[1] - 1.0) < DEGENERACY_TOL
    v = v / np.linalg.norm(v)
    v, rule = orient(v, anchor)
    flags = () if converged else ("not_converged",)
    return ComplexityResult(
        eci=zscore(v),
        eci_raw=v,
        eigenvalues=eigenvalues,
        method="eigen",
        sign_anchor=rule,
        economy_ids=proj.ids,
        degenerate=degenerate,
        converged=converged,
        iterations=iterations,
        flags=flags + (("degenerate",) if degenerate else ()),
    )


def eci_reflections(
    m: SpecializationMatrix,
    iterations: int | None = None,
    *,
    tol: float = 1e-12,
    max_iterations: int = POWER_MAX_ITER,
    policy: Policy = "drop",
) -> ComplexityResult:
    """Method of reflections seeded with diversity and ubiquity.

    Each step averages the other side's scores and z-scores the result so the
    iteration does not collapse onto the constant vector. With ``iterations``
    given, exactly that many (even) steps run; otherwise steps continue in pairs
    until successive even iterates differ by less than ``tol``.
    """
    if iterations is not None and (iterations < 2 or iterations % 2):
        raise ValidationError("iterations must be an even integer >= 2")
    m = drop_empty(m, policy)
    a = m.values.astype(float)
    k_c = a.sum(axis=1)
    k_p = a.sum(axis=0)
    avg_c = a / k_c[:, None]
    avg_p = (a / k_p[None, :]).T
    kc, kp = zscore(k_c), zscore(k_p)
    flags: list[str] = []
    if not k_c.std() > 0:
        # diversity carries no direction; seed with a descending ramp, matching
        # the positive-first-component tie rule of the eigen route
        kc = zscore(np.linspace(1.0, -1.0, k_c.size))
        kp = zscore(avg_p @ kc)
        flags.append("constant_seed")
    budget = iterations if iterations is not None else max_iterations
    converged = iterations is not None
    prev = kc
    done = 0
    degenerate = False
    for step in range(1, budget + 1):
        kc, kp = zscore(avg_c @ kp), zscore(avg_p @ kc)
        done = step
        if not kc.any():
            degenerate = True
            break
        if step % 2 == 0:
            if iterations is None and np.abs(kc - prev).max() < tol:
                converged = True
                break
            prev = kc
    if degenerate:
        flags.append("degenerate")
        converged = False
    elif iterations is None and not converged:
        flags.append("not_converged")
        log.warning("reflections did not converge in %d iterations", budget)
    norm = np.linalg.norm(kc)
    raw = kc / norm if norm > 0 else kc
    pci_raw = kp / np.linalg.norm(kp) if np.linalg.norm(kp) > 0 else kp
    return ComplexityResult(
        eci=zscore(kc),
        eci_raw=raw,
        eigenvalues=np.array([]),
        method="reflections",
        sign_anchor="diversity seed, even iteration",
        economy_ids=m.economy_ids,
        pci=zscore(kp),
        pci_raw=pci_raw,
        activity_ids=m.activity_ids,
        degenerate=degenerate,
        converged=converged,
        iterations=done,
        flags=tuple(flags),
    )


def complexity(m: SpecializationMatrix, policy: Policy = "drop") -> ComplexityResult:
    """ECI and PCI from the eigenvectors of both projections.

    ECI is oriented to covary nonnegatively with the second reflections
    iterate (``M_cc'`` applied to diversity); PCI to covary nonnegatively with
    the average ECI of the economies specialized in each activity.
    """
    m = drop_empty(m, policy)
    p_cc = project_economies(m, policy)
    anchor = p_cc.values @ m.diversity.astype(float)
    eci = eci_eigen(p_cc, anchor)
    p_pp = project_activities(m, policy)
    a = m.values.astype(float)
    pci_anchor = (a / a.sum(axis=0)[None, :]).T @ eci.eci_raw
    pci = eci_eigen(p_pp, pci_anchor)
    return ComplexityResult(
        eci=eci.eci,
        eci_raw=eci.eci_raw,
        eigenvalues=eci.eigenvalues,
        method="eigen",
        sign_anchor=eci.sign_anchor,
        economy_ids=m.economy_ids,
        pci=pci.eci,
        pci_raw=pci.eci_raw,
        activity_ids=m.activity_ids,
        degenerate=eci.degenerate,
        converged=eci.converged and pci.converged,
        iterations=eci.iterations,
        flags=eci.flags,
    )


def spearman(x: ArrayLike, y: ArrayLike) -> float:
    """Spearman rank correlation with average ranks for ties; NaN if a side is constant."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise DimensionError("spearman needs equal-length vectors")
    if x.size < 2:
        raise DimensionError("spearman needs at least two observations")
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        return float("nan")
    return float(np.clip((rx @ ry) / denom, -1.0, 1.0))


@dataclass(frozen=True)
class PipelineRun:
    """Every intermediate of one pass through the pipeline."""

    output: OutputMatrix
    rca: RcaMatrix
    specialization: SpecializationMatrix
    projection: ProjectionMatrix
    result: ComplexityResult


def run_pipeline(y: OutputMatrix, policy: Policy = "drop") -> PipelineRun:
    r = rca(y)
    m = drop_empty(binarize(r, policy=policy), policy)
    p = project_economies(m, policy)
    res = complexity(m, policy)
    return PipelineRun(y, r, m, p, res)
