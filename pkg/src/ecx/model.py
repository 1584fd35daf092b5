"""Capability endowments, requirements and output matrices.

Rows of every economy-side matrix are economies, columns of every
activity-side matrix are activities. Generators that have a natural ordering
(``linspace``, ``gaussian-minmax``, ``mixed``) return output matrices with rows
sorted by descending endowment and columns by ascending requirement; the
original positions are kept in ``row_order`` / ``col_order``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray

from ecx.errors import DimensionError, ValidationError
from ecx.rng import substream

FloatArray = NDArray[np.float64]

KINDS = ("linspace", "gaussian-minmax", "mixed", "circulant", "block")


def _ids(prefix: str, n: int) -> tuple[str, ...]:
    width = len(str(max(n - 1, 0)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(n))


def _as_probabilities(values: ArrayLike, name: str) -> FloatArray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValidationError(f"{name} entries must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class EndowmentMatrix:
    """Probability ``values[c, b]`` that economy ``c`` holds capability ``b``."""

    values: FloatArray
    economy_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = _as_probabilities(self.values, "endowment")
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 1:
            raise DimensionError("endowment matrix needs N_c >= 2 rows and N_b >= 1 columns")
        object.__setattr__(self, "values", values)
        ids = tuple(self.economy_ids) or _ids("c", values.shape[0])
        if len(ids) != values.shape[0]:
            raise DimensionError("economy_ids length does not match rows")
        object.__setattr__(self, "economy_ids", ids)

    @property
    def n_capabilities(self) -> int:
        return self.values.shape[1]

    def average(self) -> FloatArray:
        """Average endowment of each economy across capabilities."""
        return self.values.mean(axis=1)


@dataclass(frozen=True)
class RequirementMatrix:
    """Probability ``values[p, b]`` that activity ``p`` requires capability ``b``."""

    values: FloatArray
    activity_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = _as_probabilities(self.values, "requirement")
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 2 or values.shape[1] < 1:
            raise DimensionError("requirement matrix needs N_p >= 2 rows and N_b >= 1 columns")
        object.__setattr__(self, "values", values)
        ids = tuple(self.activity_ids) or _ids("p", values.shape[0])
        if len(ids) != values.shape[0]:
            raise DimensionError("activity_ids length does not match rows")
        object.__setattr__(self, "activity_ids", ids)

    @property
    def n_capabilities(self) -> int:
        return self.values.shape[1]

    def average(self) -> FloatArray:
        return self.values.mean(axis=1)


@dataclass(frozen=True)
class OutputMatrix:
    """Nonnegative output of each economy (row) in each activity (column).

    ``row_order[i]`` is the position in the generating endowment matrix of
    row ``i`` (likewise ``col_order``), so sorted matrices can be mapped back.
    """

    values: FloatArray
    scale: float = 1.0
    economy_ids: tuple[str, ...] = ()
    activity_ids: tuple[str, ...] = ()
    row_order: NDArray[np.int64] | None = None
    col_order: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionError("output matrix must be two-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValidationError("output matrix contains non-finite entries")
        if values.size and values.min() < 0.0:
            raise ValidationError("output matrix has negative entries")
        if not self.scale > 0:
            raise ValidationError("scale A must be positive")
        object.__setattr__(self, "values", values)
        n_c, n_p = values.shape
        object.__setattr__(self, "economy_ids", tuple(self.economy_ids) or _ids("c", n_c))
        object.__setattr__(self, "activity_ids", tuple(self.activity_ids) or _ids("p", n_p))
        if len(self.economy_ids) != n_c or len(self.activity_ids) != n_p:
            raise DimensionError("id labels do not match matrix shape")
        for name, n in (("row_order", n_c), ("col_order", n_p)):
            order = getattr(self, name)
            order = np.arange(n) if order is None else np.asarray(order, dtype=np.int64)
            object.__setattr__(self, name, order)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class FactorVectors:
    """Economy factor values ``f``, activity factor values ``g`` and shift ``B``."""

    f: FloatArray
    g: FloatArray
    shift: float = 0.0
    exponent: float | None = None
    k_c: FloatArray | None = None
    k_p: FloatArray | None = None

    def __post_init__(self) -> None:
        for name in ("f", "g"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        for name in ("k_c", "k_p"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float).ravel()
                if np.any(arr <= 0):
                    raise ValidationError(f"{name} must be strictly positive")
                object.__setattr__(self, name, arr)

    @classmethod
    def cobb_douglas(
        cls, k_c: ArrayLike, k_p: ArrayLike, gamma: float, shift: float = 0.0
    ) -> FactorVectors:
        """Relative factor intensity form: ``f = K_c**gamma``, ``g = K_p**-gamma``."""
        k_c = np.asarray(k_c, dtype=float)
        k_p = np.asarray(k_p, dtype=float)
        if np.any(k_c <= 0) or np.any(k_p <= 0):
            raise ValidationError("factor endowments and intensities must be positive")
        return cls(k_c**gamma, k_p ** (-gamma), shift, gamma, k_c, k_p)


# ---------------------------------------------------------------------------
# Parameter generators
# ---------------------------------------------------------------------------


def gen_linspace(n: int) -> FloatArray:
    """Evenly spaced probabilities ``0, 1/(n-1), ..., 1``."""
    if n < 2:
        raise DimensionError("linspace needs at least two points")
    # i/(n-1) is correctly rounded, so 0.1 comes out as the literal 0.1
    return np.arange(n, dtype=float) / (n - 1)


def gen_gaussian_minmax(n: int, rng: np.random.Generator) -> FloatArray:
    """Standard normal draws rescaled so the minimum is 0 and the maximum is 1."""
    if n < 2:
        raise DimensionError("gaussian-minmax needs at least two points")
    while True:
        z = rng.standard_normal(n)
        lo, hi = z.min(), z.max()
        if hi > lo:
            break
    out = (z - lo) / (hi - lo)
    out[np.argmin(z)] = 0.0
    out[np.argmax(z)] = 1.0
    return out


def _mix(base: ArrayLike, alpha: float, n_b: int, rng: np.random.Generator) -> FloatArray:
    base = _as_probabilities(base, "base").ravel()
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    if n_b < 1:
        raise DimensionError("need at least one capability")
    noise = rng.random((base.size, n_b))
    return np.clip(alpha * base[:, None] + (1.0 - alpha) * noise, 0.0, 1.0)


def mix_endowments(
    base: ArrayLike, alpha: float, n_b: int, rng: np.random.Generator
) -> EndowmentMatrix:
    """``r[c, b] = alpha * base[c] + (1 - alpha) * U(0, 1)``."""
    return EndowmentMatrix(_mix(base, alpha, n_b, rng))


def mix_requirements(
    base: ArrayLike, alpha: float, n_b: int, rng: np.random.Generator
) -> RequirementMatrix:
    """Activity-side twin of :func:`mix_endowments`."""
    return RequirementMatrix(_mix(base, alpha, n_b, rng))


def circulant_profile(n: int, width: float | None = None) -> FloatArray:
    """Symmetric profile peaking at 1 on the center column ``n // 2``.

    Values fall linearly with circular distance from the center and reach 0 at
    ``width`` columns away. ``width`` defaults to ``n / 2`` (a full triangle).
    Odd ``n`` is centered on column 0 because no odd-length vector is both
    centered on a middle column and circulant-symmetric.
    """
    if n < 2:
        raise DimensionError("profile needs at least two columns")
    width = n / 2 if width is None else float(width)
    if width <= 0:
        raise ValidationError("profile width must be positive")
    center = n // 2 if n % 2 == 0 else 0
    k = np.arange(n)
    dist = np.abs(k - center)
    dist = np.minimum(dist, n - dist)
    return np.clip(1.0 - dist / width, 0.0, 1.0)


def gen_circulant_endowments(
    n: int,
    profile: ArrayLike | None,
    alpha: float,
    rng: np.random.Generator,
    n_rows: int | None = None,
) -> EndowmentMatrix:
    """Circulant matrix whose row ``i`` is ``profile`` rotated by ``i``, mixed with noise.

    With ``n_rows != n`` the rotation is ``round(i * n / n_rows)`` so the band
    still wraps exactly once.
    """
    profile = circulant_profile(n) if profile is None else _as_probabilities(profile, "profile")
    if profile.shape != (n,):
        raise DimensionError("profile length must equal n")
    if not np.array_equal(profile, profile[(-np.arange(n)) % n]):
        raise ValidationError("profile must be symmetric about its center column")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    n_rows = n if n_rows is None else int(n_rows)
    shifts = np.rint(np.arange(n_rows) * n / n_rows).astype(int)
    circ = np.stack([np.roll(profile, s) for s in shifts])
    noise = rng.random(circ.shape)
    values = np.clip(alpha * circ + (1.0 - alpha) * noise, 0.0, 1.0)
    return EndowmentMatrix(values)


def block_labels(n: int, k: int) -> NDArray[np.int64]:
    """Block index of each of ``n`` items split into ``k`` blocks (remainder to the last)."""
    if k < 1 or k > n:
        raise ValidationError("block count must lie in [1, n]")
    size = n // k
    return np.minimum(np.arange(n) // size, k - 1)


def gen_block_endowments(
    n: int, n_b: int, k: int, alpha: float, rng: np.random.Generator
) -> EndowmentMatrix:
    """Block-diagonal indicator mixed with uniform noise: ``alpha * I + (1 - alpha) * U``."""
    if k > min(n, n_b):
        raise ValidationError("more blocks than rows or capabilities")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    ind = (block_labels(n, k)[:, None] == block_labels(n_b, k)[None, :]).astype(float)
    noise = rng.random(ind.shape)
    return EndowmentMatrix(np.clip(alpha * ind + (1.0 - alpha) * noise, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Production functions
# ---------------------------------------------------------------------------


def _sorted_output(
    values: FloatArray,
    scale: float,
    row_key: FloatArray,
    col_key: FloatArray,
    economy_ids: Sequence[str],
    activity_ids: Sequence[str],
    sort: bool,
) -> OutputMatrix:
    if sort:
        rows = np.argsort(-row_key, kind="stable")
        cols = np.argsort(col_key, kind="stable")
    else:
        rows = np.arange(values.shape[0])
        cols = np.arange(values.shape[1])
    return OutputMatrix(
        values[np.ix_(rows, cols)],
        scale,
        tuple(economy_ids[i] for i in rows),
        tuple(activity_ids[j] for j in cols),
        rows,
        cols,
    )


def output_single(r: ArrayLike, q: ArrayLike, scale: float = 1.0, sort: bool = True) -> OutputMatrix:
    """Single-capability output ``A * (1 - q_p * (1 - r_c))``."""
    r = _as_probabilities(r, "r").ravel()
    q = _as_probabilities(q, "q").ravel()
    if not scale > 0:
        raise ValidationError("scale A must be positive")
    values = scale * (1.0 - np.outer(1.0 - r, q))
    return _sorted_output(values, scale, r, q, _ids("c", r.size), _ids("p", q.size), sort)


def output_multi(
    endowments: EndowmentMatrix,
    requirements: RequirementMatrix,
    scale: float = 1.0,
    sort: bool = True,
) -> OutputMatrix:
    """Multi-capability output ``A * prod_b (1 - q[p,b] * (1 - r[c,b]))``.

    Sorting uses the average endowment and average requirement.
    """
    r = endowments.values
    q = requirements.values
    if r.shape[1] != q.shape[1]:
        raise DimensionError(
            f"capability count mismatch: {r.shape[1]} endowments vs {q.shape[1]} requirements"
        )
    if not scale > 0:
        raise ValidationError("scale A must be positive")
    values = np.ones((r.shape[0], q.shape[0]))
    for b in range(r.shape[1]):
        values *= 1.0 - np.outer(1.0 - r[:, b], q[:, b])
    values *= scale
    return _sorted_output(
        values,
        scale,
        endowments.average(),
        requirements.average(),
        endowments.economy_ids,
        requirements.activity_ids,
        sort,
    )


def output_shifted(fv: FactorVectors, scale: float = 1.0) -> OutputMatrix:
    """Shifted separable output ``B + f_c * g_p`` (``B = 0`` gives the separable form)."""
    values = fv.shift + np.outer(fv.f, fv.g)
    if values.min() < 0:
        raise ValidationError("shifted production function yields negative output")
    return OutputMatrix(values * scale, scale)


# ---------------------------------------------------------------------------
# Generator specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to regenerate a model instance.

    ``kind`` selects the parameter generator. ``mixed`` blends a ``base``
    profile (``linspace`` or ``gaussian-minmax``) with uniform noise at weight
    ``alpha``; ``circulant`` and ``block`` build the network-shape endowments.
    """

    kind: str = "linspace"
    n_economies: int = 10
    n_activities: int = 20
    n_capabilities: int = 1
    seed: int = 0
    alpha: float = 1.0
    base: str = "linspace"
    width: float | None = None
    k: int = 2
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        if self.base not in ("linspace", "gaussian-minmax"):
            raise ValidationError("base must be 'linspace' or 'gaussian-minmax'")
        if min(self.n_economies, self.n_activities) < 2 or self.n_capabilities < 1:
            raise DimensionError("dims must satisfy N_c, N_p >= 2 and N_b >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        if self.kind == "block" and self.k > min(
            self.n_economies, self.n_activities, self.n_capabilities
        ):
            raise ValidationError("block count exceeds a dimension")
        if self.kind == "circulant" and self.n_capabilities < 2:
            raise DimensionError("circulant model needs at least two capabilities")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_economies, self.n_activities, self.n_capabilities)

    @property
    def sorted_output(self) -> bool:
        return self.kind in ("linspace", "gaussian-minmax", "mixed")

    def replace(self, **changes: Any) -> GeneratorSpec:
        return dataclasses.replace(self, **changes)

    def _base(self, kind: str, n: int, seed: int, path: tuple[int, ...], role: str) -> FloatArray:
        if kind == "linspace":
            return gen_linspace(n)
        return gen_gaussian_minmax(n, substream(seed, *path, role))

    def generate(self, *path: int) -> tuple[EndowmentMatrix, RequirementMatrix]:
        """Draw endowments and requirements; ``path`` keys the replicate substream."""
        n_c, n_p, n_b = self.dims
        seed = self.seed
        if self.kind in ("linspace", "gaussian-minmax"):
            r = self._base(self.kind, n_c, seed, path, "r_base")
            q = self._base(self.kind, n_p, seed, path, "q_base")
            return EndowmentMatrix(np.repeat(r[:, None], n_b, axis=1)), RequirementMatrix(
                np.repeat(q[:, None], n_b, axis=1)
            )
        if self.kind == "mixed":
            r = self._base(self.base, n_c, seed, path, "r_base")
            q = self._base(self.base, n_p, seed, path, "q_base")
            return (
                mix_endowments(r, self.alpha, n_b, substream(seed, *path, "r_noise")),
                mix_requirements(q, self.alpha, n_b, substream(seed, *path, "q_noise")),
            )
        if self.kind == "circulant":
            profile = circulant_profile(n_b, self.width)
            r = gen_circulant_endowments(
                n_b, profile, self.alpha, substream(seed, *path, "r_noise"), n_rows=n_c
            )
            q = gen_circulant_endowments(
                n_b, profile, self.alpha, substream(seed, *path, "q_noise"), n_rows=n_p
            )
            return r, RequirementMatrix(q.values)
        r = gen_block_endowments(n_c, n_b, self.k, self.alpha, substream(seed, *path, "r_noise"))
        q = gen_block_endowments(n_p, n_b, self.k, self.alpha, substream(seed, *path, "q_noise"))
        return r, RequirementMatrix(q.values)

    def output(self, *path: int) -> tuple[OutputMatrix, EndowmentMatrix, RequirementMatrix]:
        r, q = self.generate(*path)
        if self.n_capabilities == 1:
            y = output_single(r.values[:, 0], q.values[:, 0], self.scale, sort=self.sorted_output)
        else:
            y = output_multi(r, q, self.scale, sort=self.sorted_output)
        return y, r, q

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GeneratorSpec:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown generator fields: {sorted(unknown)}")
        typed: dict[str, Any] = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            value = data[f.name]
            if value is None:
                typed[f.name] = None
            elif f.name in ("kind", "base"):
                typed[f.name] = str(value)
            elif f.name in ("n_economies", "n_activities", "n_capabilities", "seed", "k"):
                typed[f.name] = int(value)
            else:
                typed[f.name] = float(value)
        return cls(**typed)

    def dumps(self) -> str:
        """Plain ``key = value`` text, one field per line."""
        lines = []
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> GeneratorSpec:
        """Parse either ``key = value`` lines or a YAML mapping."""
        return cls.from_dict(parse_config_text(text))

    @classmethod
    def load(cls, path: str | Path) -> GeneratorSpec:
        return cls.loads(Path(path).read_text())


def parse_config_text(text: str) -> dict[str, Any]:
    """Read a flat config written either as ``key = value`` lines or as YAML."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if lines and all("=" in ln for ln in lines):
        out: dict[str, Any] = {}
        for ln in lines:
            key, value = (s.strip() for s in ln.split("=", 1))
            out[key] = None if value.lower() in ("none", "null", "") else yaml.safe_load(value)
        return out
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping of field names to values")
    return data


__all__ = [
    "EndowmentMatrix",
    "RequirementMatrix",
    "OutputMatrix",
    "FactorVectors",
    "GeneratorSpec",
    "gen_linspace",
    "gen_gaussian_minmax",
    "mix_endowments",
    "mix_requirements",
    "circulant_profile",
    "gen_circulant_endowments",
    "block_labels",
    "gen_block_endowments",
    "output_single",
    "output_multi",
    "output_shifted",
    "parse_config_text",
]
