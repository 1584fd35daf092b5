"""Closed-form results for the single-capability and shifted separable models.

These are computed without the RCA pipeline and serve as its ground truth.
Projection entries are exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ecx.errors import NotCoveredError, ValidationError
from ecx.pipeline import ProjectionMatrix, SpecializationMatrix, rca

CaseKind = Literal["even_even", "odd_even", "even_odd", "odd_odd"]

# deviations this close to zero (relative to the spread) count as "at the mean"
AT_MEAN_RTOL = 1e-12


def _snap(x: NDArray[np.float64], rtol: float = AT_MEAN_RTOL) -> NDArray[np.float64]:
    scale = np.abs(x).max() if x.size else 0.0
    out = x.copy()
    out[np.abs(out) <= rtol * scale] = 0.0
    return out


def sign_condition(
    row_dev: ArrayLike, col_dev: ArrayLike, rtol: float = AT_MEAN_RTOL
) -> NDArray[np.int8]:
    """Binary matrix of ``row_dev[c] * col_dev[p] >= 0`` with near-zero deviations snapped to 0."""
    a = _snap(np.asarray(row_dev, dtype=float), rtol)
    b = _snap(np.asarray(col_dev, dtype=float), rtol)
    return (np.outer(np.sign(a), np.sign(b)) >= 0).astype(np.int8)


def _center(x: NDArray[np.float64], center: str) -> float:
    if center == "mean":
        return float(x.mean())
    if center == "median":
        return float(np.median(x))
    raise ValidationError("center must be 'mean' or 'median'")


def oracle_mcp(
    r: ArrayLike, q: ArrayLike, center: str = "mean", sort: bool = True
) -> SpecializationMatrix:
    """Quadrant specialization ``(r_c - <r>)(q_p - <q>) >= 0``.

    Rows/columns exactly at the center are completely filled. With ``sort``
    the rows follow descending ``r`` and columns ascending ``q``, matching the
    model generators.
    """
    r = np.asarray(r, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if r.size and (r.min() < 0 or r.max() > 1 or q.min() < 0 or q.max() > 1):
        raise ValidationError("r and q must lie in [0, 1]")
    if sort:
        r = r[np.argsort(-r, kind="stable")]
        q = q[np.argsort(q, kind="stable")]
    return SpecializationMatrix(sign_condition(r - _center(r, center), q - _center(q, center)))


@dataclass(frozen=True)
class ParityCase:
    """Group sizes of a symmetric single-capability configuration.

    ``n_high`` economies sit above the mean endowment, ``n_low`` below, and
    ``at_mean_rows`` (0 or 1) at it; activities likewise split into
    ``n_low_q`` / ``at_mean_cols`` / ``n_high_q``.
    """

    kind: CaseKind
    n_c: int
    n_p: int
    at_mean_rows: tuple[int, ...] = ()
    at_mean_cols: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.at_mean_rows) > 1 or len(self.at_mean_cols) > 1:
            raise NotCoveredError("closed forms cover at most one at-mean index per side")
        expected = {
            (False, False): "even_even",
            (True, False): "odd_even",
            (False, True): "even_odd",
            (True, True): "odd_odd",
        }[(bool(self.at_mean_rows), bool(self.at_mean_cols))]
        if self.kind != expected:
            raise ValidationError(f"kind {self.kind!r} inconsistent with at-mean indices ({expected})")
        if (self.n_c - len(self.at_mean_rows)) % 2 or (self.n_p - len(self.at_mean_cols)) % 2:
            raise NotCoveredError("closed forms need equally many entries above and below the mean")
        if self.n_c < 2 or self.n_p < 2:
            raise ValidationError("need at least two economies and two activities")

    @classmethod
    def from_sizes(cls, n_c: int, n_p: int) -> ParityCase:
        """Case produced by evenly spaced ``r`` and ``q`` of the given lengths."""
        rows = (n_c // 2,) if n_c % 2 else ()
        cols = (n_p // 2,) if n_p % 2 else ()
        kind = {
            (False, False): "even_even",
            (True, False): "odd_even",
            (False, True): "even_odd",
            (True, True): "odd_odd",
        }[(bool(rows), bool(cols))]
        return cls(kind, n_c, n_p, rows, cols)

    @property
    def groups(self) -> tuple[int, int, int, int, int, int]:
        """``(high, mid, low)`` economy counts and ``(low_q, mid_q, high_q)`` activity counts."""
        m = len(self.at_mean_rows)
        mc = len(self.at_mean_cols)
        h = (self.n_c - m) // 2
        a = (self.n_p - mc) // 2
        return h, m, h, a, mc, a


def oracle_mcp_case(case: ParityCase) -> SpecializationMatrix:
    """Block specialization matrix of a parity case (sorted convention)."""
    h, m, l, b, mc, a = case.groups
    row_group = np.repeat([1, 0, -1], [h, m, l])
    col_group = np.repeat([-1, 0, 1], [b, mc, a])
    return SpecializationMatrix(sign_condition(row_group, col_group))


def oracle_mcc_exact(case: ParityCase) -> list[list[Fraction]]:
    """Exact ``M_cc'`` of a parity case.

    High-endowment rows specialize in the high-requirement activities and the
    at-mean activity; the at-mean row specializes in everything. Ubiquities are
    ``h + m`` (high and low activities) and ``N_c`` (at-mean activity);
    diversities are ``a + mc`` and ``N_p``.
    """
    h, m, l, b, mc, a = case.groups
    n_c, n_p = case.n_c, case.n_p
    F = Fraction
    mid_col = F(mc, n_c)
    hi_share = F(a, h + m) if a else F(0)
    lo_share = F(b, l + m) if b else F(0)
    div_hi = a + mc
    div_lo = b + mc
    group = ["H"] * h + ["M"] * m + ["L"] * l
    out: list[list[Fraction]] = []
    for g in group:
        row = []
        for g2 in group:
            if g == "H":
                row.append((hi_share + mid_col if g2 in "HM" else mid_col) / div_hi)
            elif g == "L":
                row.append((lo_share + mid_col if g2 in "LM" else mid_col) / div_lo)
            elif g2 == "H":
                row.append((hi_share + mid_col) / n_p)
            elif g2 == "L":
                row.append((lo_share + mid_col) / n_p)
            else:
                row.append((hi_share + lo_share + mid_col) / n_p)
        out.append(row)
    return out


def oracle_mcc(case: ParityCase) -> ProjectionMatrix:
    exact = oracle_mcc_exact(case)
    return ProjectionMatrix(np.array([[float(x) for x in row] for row in exact]), "economy")


def oracle_eci(case: ParityCase) -> NDArray[np.int64]:
    """Sign pattern of the second eigenvector: +1 above the mean, 0 at it, -1 below."""
    h, m, l, *_ = case.groups
    return np.repeat([1, 0, -1], [h, m, l]).astype(np.int64)


def sign_pattern(v: ArrayLike, rtol: float = 1e-8) -> NDArray[np.int64]:
    v = np.asarray(v, dtype=float)
    return np.sign(_snap(v, rtol)).astype(np.int64)


def matches_up_to_sign(v: ArrayLike, pattern: ArrayLike) -> bool:
    s = sign_pattern(v)
    pattern = np.asarray(pattern)
    return bool(np.array_equal(s, pattern) or np.array_equal(s, -pattern))


def check_separable_rca(f: ArrayLike, g: ArrayLike, shift: float = 0.0) -> tuple[bool, float]:
    """Whether the RCA of ``shift + f_c * g_p`` is identically 1; returns (holds, max |R - 1|).

    Only the unshifted separable form is expected to hold.
    """
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if np.any(f <= 0) or np.any(g <= 0) or shift < 0:
        raise ValidationError("f and g must be strictly positive and the shift nonnegative")
    dev = float(np.abs(rca(shift + np.outer(f, g)).values - 1.0).max())
    return dev < 1e-10, dev


def shifted_condition(f: ArrayLike, g: ArrayLike, shift: float = 1.0) -> SpecializationMatrix:
    """Specialization of ``B + f_c g_p``: ``(f_c - <f>)(g_p - <g>) >= 0``.

    The condition is on function values, not raw factors. It holds as stated
    for ``B > 0``; a negative ``B`` reverses it, and ``B = 0`` makes every RCA
    exactly 1.
    """
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise ValidationError("f and g must be finite")
    if shift == 0:
        return SpecializationMatrix(np.ones((f.size, g.size), dtype=np.int8))
    return SpecializationMatrix(sign_condition(np.sign(shift) * (f - f.mean()), g - g.mean()))
