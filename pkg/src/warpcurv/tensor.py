"""Coordinate metric charts and pointwise curvature.

Only the metric entries are symbolic.  Everything downstream of the metric
and its first two partial derivatives is computed numerically at one point.

Curvature sign convention
-------------------------
``R^l_{ijk} = d_j Gamma^l_{ik} - d_k Gamma^l_{ij} + Gamma^m_{ik} Gamma^l_{mj}
- Gamma^m_{ij} Gamma^l_{mk}``, ``R_{hijk} = g_{hl} R^l_{ijk}`` and
``S_{jk} = g^{il} R_{ijkl}``.  With this choice the round 2-sphere has
``R_{th ph ph th} = -sin^2(th)`` and scalar curvature ``-2``, and the
warped-product block formulas hold as ``R_{a alpha b beta} = f T_ab
g~_{alpha beta}``.  Constant curvature reads ``R = kappa / (n (n-1)) G`` in
any sign convention.

Indices are 0-based in arrays and 1-based in files and reports.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .expr import (
    FUNCTIONS,
    EvaluationError,
    Expr,
    ExprSyntaxError,
    Number,
    compile_many,
    differentiate,
    parse,
    simplify_basic,
)

DET_FLOOR = 1e-12


class SingularMetricError(ArithmeticError):
    pass


class ChartFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.reason = message
        self.line = line


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Tolerances:
    """Zero test: ``max|T| <= abs_tol + rel_tol * scale``."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-8

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")

    def is_zero(self, values, scale: float) -> bool:
        return float(np.max(np.abs(values), initial=0.0)) <= self.abs_tol + self.rel_tol * scale


@dataclass(frozen=True, eq=False)
class MetricChart:
    """An n-dimensional coordinate chart with a symbolic metric.

    ``entries`` maps 0-based ``(i, j)`` with ``i <= j`` to an expression;
    missing pairs are zero.
    """

    coords: tuple[str, ...]
    entries: Mapping[tuple[int, int], Expr]
    params: Mapping[str, float] = field(default_factory=dict)
    domain: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        n = len(self.coords)
        if n < 1:
            raise ValueError("chart needs at least one coordinate")
        if len(set(self.coords)) != n:
            raise ValueError("duplicate coordinate names")
        clash = set(self.coords) & set(self.params)
        if clash:
            raise ValueError(f"names used as both coordinate and parameter: {sorted(clash)}")
        normalized = {}
        for (i, j), e in self.entries.items():
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"entry index ({i}, {j}) out of range")
            key = (min(i, j), max(i, j))
            if key in normalized and normalized[key] != e:
                raise ValueError(f"conflicting expressions for g[{key[0] + 1},{key[1] + 1}]")
            normalized[key] = e
        known = set(self.coords) | set(self.params)
        for key, e in normalized.items():
            unknown = e.free_names() - known
            if unknown:
                raise ValueError(f"entry {key} uses undeclared names {sorted(unknown)}")
        object.__setattr__(self, "entries", normalized)
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "domain", {k: (float(a), float(b)) for k, (a, b) in self.domain.items()})

    @property
    def n(self) -> int:
        return len(self.coords)

    def entry(self, i: int, j: int) -> Expr:
        return self.entries.get((min(i, j), max(i, j)), Number(0.0))

    def scaled(self, factor: float) -> "MetricChart":
        """The chart of ``factor * g``."""
        entries = {k: simplify_basic(Number(float(factor)) * e) for k, e in self.entries.items()}
        return MetricChart(self.coords, entries, dict(self.params), dict(self.domain))

    def contains(self, point: Mapping[str, float]) -> bool:
        return all(self.domain[c][0] <= point[c] <= self.domain[c][1] for c in self.coords)

    @cached_property
    def _derivative_program(self):
        n = self.n
        keys = sorted(self.entries)
        exprs, slots = [], []
        for (i, j) in keys:
            e = self.entries[(i, j)]
            exprs.append(e)
            slots.append(("g", i, j, None, None))
            first = [differentiate(e, c) for c in self.coords]
            for k in range(n):
                exprs.append(first[k])
                slots.append(("dg", i, j, k, None))
                for m in range(k, n):
                    exprs.append(differentiate(first[k], self.coords[m]))
                    slots.append(("d2g", i, j, k, m))
        order = list(self.coords) + sorted(self.params)
        return compile_many(exprs, order), slots, order

    def metric_at(self, point: Mapping[str, float]):
        """Numeric ``g``, ``dg[k,i,j] = d_k g_ij`` and ``d2g[k,m,i,j] = d_k d_m g_ij``."""
        return metric_at(self, point)


def metric_at(chart: MetricChart, point: Mapping[str, float]):
    n = chart.n
    fn, slots, order = chart._derivative_program
    values = [float(point[c]) for c in chart.coords] + [chart.params[p] for p in sorted(chart.params)]
    out = fn(values)
    g = np.zeros((n, n))
    dg = np.zeros((n, n, n))
    d2g = np.zeros((n, n, n, n))
    for val, (kind, i, j, k, m) in zip(out, slots):
        if kind == "g":
            g[i, j] = g[j, i] = val
        elif kind == "dg":
            dg[k, i, j] = dg[k, j, i] = val
        else:
            d2g[k, m, i, j] = d2g[k, m, j, i] = val
            d2g[m, k, i, j] = d2g[m, k, j, i] = val
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(dg)) or not np.all(np.isfinite(d2g)):
        raise SingularMetricError("non-finite metric data")
    gmax = float(np.max(np.abs(g)))
    det = float(np.linalg.det(g))
    if not abs(det) > DET_FLOOR * gmax ** n:
        raise SingularMetricError(f"metric is singular at point (det {det:.3e})")
    return g, dg, d2g


# ---------------------------------------------------------------------------
# Chart files
# ---------------------------------------------------------------------------


def parse_chart(text: str) -> MetricChart:
    """Parse the line-oriented metric chart format.

    ::

        dim 2
        coords th ph
        param a = 1.0
        domain th 0.5 2.5
        domain ph 0 6
        g 1 1 : a
        g 2 2 : a * sin(th)^2
    """
    dim = None
    coords: list[str] | None = None
    params: dict[str, float] = {}
    domain: dict[str, tuple[float, float]] = {}
    domain_lines: dict[str, int] = {}
    coords_line = None
    g_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "dim":
            try:
                dim = int(rest)
            except ValueError:
                raise ChartFormatError(f"bad dimension {rest!r}", lineno) from None
            if dim < 1:
                raise ChartFormatError("dimension must be positive", lineno)
        elif head == "coords":
            coords = rest.split()
            coords_line = lineno
            for c in coords:
                _check_name(c, lineno)
        elif head == "param":
            name, eq, value = rest.partition("=")
            name = name.strip()
            if not eq:
                raise ChartFormatError("expected 'param NAME = VALUE'", lineno)
            _check_name(name, lineno)
            try:
                params[name] = float(value)
            except ValueError:
                raise ChartFormatError(f"bad parameter value {value.strip()!r}", lineno) from None
        elif head == "domain":
            parts = rest.split()
            if len(parts) != 3:
                raise ChartFormatError("expected 'domain NAME LO HI'", lineno)
            try:
                lo, hi = float(parts[1]), float(parts[2])
            except ValueError:
                raise ChartFormatError("bad domain bounds", lineno) from None
            if not lo < hi:
                raise ChartFormatError("empty domain interval", lineno)
            domain[parts[0]] = (lo, hi)
            domain_lines[parts[0]] = lineno
        elif head == "g":
            idx, colon, src = rest.partition(":")
            parts = idx.split()
            if not colon or len(parts) != 2:
                raise ChartFormatError("expected 'g I J : EXPR'", lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ChartFormatError("bad metric index", lineno) from None
            g_lines.append((lineno, i, j, src.strip()))
        else:
            raise ChartFormatError(f"unknown directive {head!r}", lineno)

    if coords is None:
        raise ChartFormatError("missing 'coords' line")
    if dim is None:
        dim = len(coords)
    if len(coords) != dim:
        raise ChartFormatError(f"dim {dim} but {len(coords)} coordinates", coords_line)
    if len(set(coords)) != len(coords):
        raise ChartFormatError("duplicate coordinate names", coords_line)
    for c in coords:
        if c not in domain:
            raise ChartFormatError(f"missing domain for coordinate '{c}'")
    for name in domain:
        if name not in coords:
            raise ChartFormatError(f"domain given for unknown coordinate '{name}'", domain_lines[name])

    entries: dict[tuple[int, int], Expr] = {}
    for lineno, i, j, src in g_lines:
        if not (1 <= i <= dim and 1 <= j <= dim):
            raise ChartFormatError(f"metric index ({i}, {j}) out of range", lineno)
        try:
            e = parse(src, coords, params)
        except ExprSyntaxError as exc:
            raise ChartFormatError(exc.reason, lineno) from None
        key = (min(i, j) - 1, max(i, j) - 1)
        if key in entries and entries[key] != e:
            raise ChartFormatError(f"conflicting expressions for g {i} {j}", lineno)
        entries[key] = e
    return MetricChart(tuple(coords), entries, params, domain)


def _check_name(name: str, lineno: int):
    if not name.isidentifier() or not name[0].isalpha() or name in FUNCTIONS:
        raise ChartFormatError(f"invalid name {name!r}", lineno)


def chart_to_text(chart: MetricChart, header: str | None = None) -> str:
    lines = []
    if header:
        lines += [f"# {h}" for h in header.splitlines()]
    lines.append(f"dim {chart.n}")
    lines.append("coords " + " ".join(chart.coords))
    for name in sorted(chart.params):
        lines.append(f"param {name} = {chart.params[name]!r}")
    for c in chart.coords:
        lo, hi = chart.domain[c]
        lines.append(f"domain {c} {lo!r} {hi!r}")
    for (i, j) in sorted(chart.entries):
        lines.append(f"g {i + 1} {j + 1} : {chart.entries[(i, j)].to_source()}")
    return "\n".join(lines) + "\n"


def read_chart(path) -> MetricChart:
    with open(path, encoding="utf-8") as fh:
        return parse_chart(fh.read())


# ---------------------------------------------------------------------------
# Curvature algebra
# ---------------------------------------------------------------------------


def christoffel(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """``Gamma[i, j, k] = Gamma^i_{jk}`` from the inverse metric and ``dg[k, i, j]``."""
    lowered = np.einsum("jlk->ljk", dg) + np.einsum("klj->ljk", dg) - dg
    return 0.5 * np.einsum("il,ljk->ijk", ginv, lowered)


def christoffel_derivative(ginv: np.ndarray, dg: np.ndarray, d2g: np.ndarray) -> np.ndarray:
    """``dGamma[m, i, j, k] = d_m Gamma^i_{jk}`` using ``d_m g^-1 = -g^-1 (d_m g) g^-1``."""
    lowered = np.einsum("jlk->ljk", dg) + np.einsum("klj->ljk", dg) - dg
    dlowered = np.einsum("mjlk->mljk", d2g) + np.einsum("mklj->mljk", d2g) - d2g
    dginv = -np.einsum("ia,mab,bl->mil", ginv, dg, ginv)
    return 0.5 * (np.einsum("mil,ljk->mijk", dginv, lowered) + np.einsum("il,mljk->mijk", ginv, dlowered))


def riemann(g: np.ndarray, gamma: np.ndarray, dgamma: np.ndarray) -> np.ndarray:
    """Covariant curvature ``R[h, i, j, k]`` in the module's sign convention."""
    rup = (
        np.einsum("jlik->lijk", dgamma)
        - np.einsum("klij->lijk", dgamma)
        + np.einsum("mik,lmj->lijk", gamma, gamma)
        - np.einsum("mij,lmk->lijk", gamma, gamma)
    )
    return np.einsum("hl,lijk->hijk", g, rup)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def ricci_family(R: np.ndarray, g: np.ndarray, ginv: np.ndarray | None = None):
    """Ricci tensors of levels 1-4 and the two scalar invariants.

    Returns ``(S, kappa, S2, S3, S4, kappa2)`` with ``S^{k+1} = S^k g^-1 S``
    and ``kappa2 = tr(S^2)``.
    """
    if ginv is None:
        ginv = np.linalg.inv(g)
    S = _sym(np.einsum("il,ijkl->jk", ginv, R))
    S2 = _sym(S @ ginv @ S)
    S3 = _sym(S2 @ ginv @ S)
    S4 = _sym(S3 @ ginv @ S)
    kappa = float(np.einsum("jk,jk->", ginv, S))
    kappa2 = float(np.einsum("jk,jk->", ginv, S2))
    return S, kappa, S2, S3, S4, kappa2


def kulkarni_nomizu(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``(A ^ B)_{ijkl} = A_il B_jk + A_jk B_il - A_ik B_jl - A_jl B_ik``."""
    return (
        np.einsum("il,jk->ijkl", A, B)
        + np.einsum("jk,il->ijkl", A, B)
        - np.einsum("ik,jl->ijkl", A, B)
        - np.einsum("jl,ik->ijkl", A, B)
    )


def gaussian(g: np.ndarray) -> np.ndarray:
    return 0.5 * kulkarni_nomizu(g, g)


def conformal(R: np.ndarray, S: np.ndarray, kappa: float, g: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    if n < 3:
        raise ValueError("conformal curvature needs dimension >= 3")
    return R - kulkarni_nomizu(g, S) / (n - 2) + kappa / (2 * (n - 1) * (n - 2)) * kulkarni_nomizu(g, g)


# ---------------------------------------------------------------------------
# Canonical vectorization
# ---------------------------------------------------------------------------


def pair_classes(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def sym4_index(n: int) -> list[tuple[int, int, int, int]]:
    """Index classes ``(i<j), (k<l), (i,j) <=lex (k,l)`` in lexicographic order."""
    pairs = pair_classes(n)
    return [(i, j, k, l) for a, (i, j) in enumerate(pairs) for (k, l) in pairs[a:]]


def symmetry_defect(T: np.ndarray) -> float:
    """Largest violation of the generalized-curvature symmetries, unscaled."""
    return max(
        float(np.max(np.abs(T + T.transpose(1, 0, 2, 3)), initial=0.0)),
        float(np.max(np.abs(T + T.transpose(0, 1, 3, 2)), initial=0.0)),
        float(np.max(np.abs(T - T.transpose(2, 3, 0, 1)), initial=0.0)),
        float(np.max(np.abs(bianchi_sum(T)), initial=0.0)),
    )


def bianchi_sum(T: np.ndarray) -> np.ndarray:
    """``T_ijkl + T_jkil + T_kijl``."""
    return T + np.einsum("jkil->ijkl", T) + np.einsum("kijl->ijkl", T)


def sym4_vectorize(T: np.ndarray, tol: Tolerances | None = None) -> np.ndarray:
    n = T.shape[0]
    if tol is not None:
        scale = float(np.max(np.abs(T), initial=0.0))
        if symmetry_defect(T) > tol.abs_tol + tol.rel_tol * scale:
            raise ValueError("tensor lacks curvature symmetries")
    idx = np.array(sym4_index(n), dtype=int).reshape(-1, 4)
    return T[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]]


def sym2_vectorize(A: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(A.shape[0])
    return A[iu]


# ---------------------------------------------------------------------------
# Pointwise bundle
# ---------------------------------------------------------------------------


@dataclass
class CurvatureSample:
    point: dict[str, float]
    g: np.ndarray
    ginv: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    gamma: np.ndarray
    dgamma: np.ndarray
    R: np.ndarray
    S: np.ndarray
    S2: np.ndarray
    S3: np.ndarray
    S4: np.ndarray
    kappa: float
    kappa2: float
    G: np.ndarray
    C: np.ndarray | None

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def scale(self) -> float:
        """Curvature scale used by the zero test."""
        return float(np.max(np.abs(self.R), initial=0.0))

    def ricci_powers(self) -> list[np.ndarray]:
        return [self.g, self.S, self.S2, self.S3, self.S4]


def curvature_from_metric(g, dg, d2g, point=None) -> CurvatureSample:
    ginv = np.linalg.inv(g)
    gamma = christoffel(ginv, dg)
    dgamma = christoffel_derivative(ginv, dg, d2g)
    R = riemann(g, gamma, dgamma)
    S, kappa, S2, S3, S4, kappa2 = ricci_family(R, g, ginv)
    n = g.shape[0]
    C = conformal(R, S, kappa, g) if n >= 3 else None
    return CurvatureSample(dict(point or {}), g, ginv, dg, d2g, gamma, dgamma, R, S, S2, S3, S4,
                           kappa, kappa2, gaussian(g), C)


def curvature_sample(chart: MetricChart, point: Mapping[str, float]) -> CurvatureSample:
    g, dg, d2g = metric_at(chart, point)
    return curvature_from_metric(g, dg, d2g, {c: float(point[c]) for c in chart.coords})


def symmetry_residuals(sample: CurvatureSample) -> dict[str, float]:
    """Relative defects of the identities every sample must satisfy.

    Each value is divided by the relevant scale (``max|R|`` for four-index
    identities, ``max|S|`` for Ricci ones) or left absolute when that scale
    is below 1e-12.
    """
    R = sample.R
    scale = sample.scale
    rs = scale if scale > 1e-12 else 1.0
    s_scale = float(np.max(np.abs(sample.S), initial=0.0))
    ss = s_scale if s_scale > 1e-12 else 1.0
    out = {
        "antisym_12": float(np.max(np.abs(R + R.transpose(1, 0, 2, 3)))) / rs,
        "antisym_34": float(np.max(np.abs(R + R.transpose(0, 1, 3, 2)))) / rs,
        "pair_symmetry": float(np.max(np.abs(R - R.transpose(2, 3, 0, 1)))) / rs,
        "first_bianchi": float(np.max(np.abs(bianchi_sum(R)))) / rs,
        "ricci_symmetry": float(np.max(np.abs(sample.S - sample.S.T))) / ss,
        "kappa_consistency": abs(sample.kappa - float(np.einsum("jk,jk->", sample.ginv, sample.S))) / max(abs(sample.kappa), 1.0),
        "gaussian": float(np.max(np.abs(sample.G - 0.5 * kulkarni_nomizu(sample.g, sample.g)))),
    }
    if sample.C is not None:
        trace = np.einsum("il,ijkl->jk", sample.ginv, sample.C)
        out["conformal_trace"] = float(np.max(np.abs(trace))) / rs
    return out


def draw_points(chart: MetricChart, count: int, rng: np.random.Generator, accept=None,
                max_retries: int = 100) -> list[tuple[dict[str, float], object]]:
    """Draw ``count`` accepted points uniformly from the chart's domain box.

    ``accept(point)`` returns a payload or raises an evaluation / singularity
    error to reject the point.  Each point gets ``max_retries`` redraws.
    """
    if accept is None:
        accept = lambda p: curvature_sample(chart, p)  # noqa: E731
    lows = np.array([chart.domain[c][0] for c in chart.coords])
    highs = np.array([chart.domain[c][1] for c in chart.coords])
    out = []
    for k in range(count):
        for _ in range(max_retries + 1):
            values = rng.uniform(lows, highs)
            point = {c: float(v) for c, v in zip(chart.coords, values)}
            try:
                payload = accept(point)
            except (EvaluationError, SingularMetricError, np.linalg.LinAlgError, OverflowError, ValueError):
                continue
            out.append((point, payload))
            break
        else:
            raise SamplingError(f"no acceptable point after {max_retries} retries (point {k + 1})")
    return out

