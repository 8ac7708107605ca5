"""Warped products ``B x_f F`` and their blockwise curvature.

Every (0,4) tensor built from the metric, the Ricci tensor and its square
splits into three blocks: all-base ``(abcd)``, mixed ``(a alpha b beta)`` and
all-fiber ``(alpha beta gamma delta)``.  Each block is a bilinear form in a
small set of ingredient tensors, so it is stored as a coefficient table:

* base ingredients ``[gB, SB, SB2, T, T2, SBT]`` (``SBT`` is the symmetrized
  ``SB gB^-1 T``), combined with Kulkarni-Nomizu products,
* fiber ingredients ``[gF, SF, SF2]``, combined the same way,
* mixed tables ``M[u, w]`` meaning ``X_{ab alpha beta} = sum M[u, w] x_u[a, b] y_w[alpha, beta]``
  where ``X_{ab alpha beta} = R_{a alpha b beta}``.

The tables are derived by substituting the block forms of ``g``, ``S`` and
``S^2`` into the product; ``verify_assembly`` checks them against direct
computation on the assembled chart.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .classify import ClassifyConfig, solve_grt
from .expr import Expr, ExprSyntaxError, Number, compile_many, differentiate, parse, simplify_basic
from .tensor import (
    ChartFormatError,
    CurvatureSample,
    MetricChart,
    Tolerances,
    curvature_sample,
    draw_points,
    kulkarni_nomizu,
    read_chart,
)

BASE_TERMS = ("g", "S", "S2", "T", "T2", "ST")
FIBER_TERMS = ("g", "S", "S2")
WEDGES = {
    "g^g": ("g", "g"),
    "g^S": ("g", "S"),
    "S^S": ("S", "S"),
    "g^S2": ("g", "S2"),
    "S^S2": ("S", "S2"),
    "S2^S2": ("S2", "S2"),
}
WEDGE_ORDER = tuple(WEDGES)
POSITIVITY_GRID = 5


class WarpError(ValueError):
    pass


class WarpSpecError(ChartFormatError):
    pass


@dataclass(frozen=True, eq=False)
class WarpedSpec:
    base: MetricChart
    fiber: MetricChart
    warp: Expr
    name: str = ""

    def __post_init__(self):
        clash = set(self.base.coords) & set(self.fiber.coords)
        if clash:
            raise WarpError(f"base and fiber share coordinate names {sorted(clash)}")
        merged = dict(self.base.params)
        for k, v in self.fiber.params.items():
            if k in merged and merged[k] != v:
                raise WarpError(f"parameter '{k}' has different values in base and fiber")
            merged[k] = v
        for name in set(merged) & (set(self.base.coords) | set(self.fiber.coords)):
            raise WarpError(f"'{name}' is both a parameter and a coordinate")
        extra = self.warp.free_names() - set(self.base.coords) - set(merged)
        if extra:
            raise WarpError(f"warp depends on names outside the base: {sorted(extra)}")

    @property
    def p(self) -> int:
        return self.base.n

    @property
    def q(self) -> int:
        return self.fiber.n

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def params(self) -> dict[str, float]:
        return {**self.base.params, **self.fiber.params}

    @property
    def coords(self) -> tuple[str, ...]:
        return self.base.coords + self.fiber.coords

    @cached_property
    def _warp_program(self):
        coords = self.base.coords
        first = [differentiate(self.warp, c) for c in coords]
        second = [differentiate(first[a], coords[b]) for a in range(self.p) for b in range(self.p)]
        order = list(coords) + sorted(self.params)
        return compile_many([self.warp] + first + second, order), order

    def warp_at(self, base_point: Mapping[str, float]):
        """``(f, grad f, hess f)`` at a base point, partial derivatives only."""
        fn, _ = self._warp_program
        params = self.params
        values = [float(base_point[c]) for c in self.base.coords] + [params[k] for k in sorted(params)]
        out = np.asarray(fn(values), dtype=float)
        p = self.p
        return float(out[0]), out[1:1 + p], out[1 + p:].reshape(p, p)

    def split(self, point: Mapping[str, float]):
        return ({c: float(point[c]) for c in self.base.coords},
                {c: float(point[c]) for c in self.fiber.coords})


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def _positivity_grid(chart: MetricChart):
    axes = [np.linspace(*chart.domain[c], POSITIVITY_GRID) for c in chart.coords]
    for combo in itertools.product(*axes):
        yield dict(zip(chart.coords, map(float, combo)))


def check_warp_positive(spec: WarpedSpec, points=None):
    """Raise ``WarpError`` at the first grid (or given) base point where ``f <= 0``."""
    for bp in points if points is not None else _positivity_grid(spec.base):
        f, _, _ = spec.warp_at(bp)
        if not f > 0:
            where = ", ".join(f"{k}={v:.6g}" for k, v in bp.items())
            raise WarpError(f"warp is not positive at {where} (f = {f:.6g})")


def assemble(spec: WarpedSpec, check: bool = True) -> MetricChart:
    """The chart of ``gB + f gF`` on the product of the two domain boxes."""
    if check:
        check_warp_positive(spec)
    p = spec.p
    entries = dict(spec.base.entries)
    for (i, j), e in spec.fiber.entries.items():
        entries[(p + i, p + j)] = simplify_basic(spec.warp * e)
    domain = {**spec.base.domain, **spec.fiber.domain}
    return MetricChart(spec.coords, entries, spec.params, domain)


# ---------------------------------------------------------------------------
# Pointwise warp data
# ---------------------------------------------------------------------------


@dataclass
class WarpScalars:
    f: float
    grad: np.ndarray
    T: np.ndarray
    trT: float
    P: float
    Q: float
    T2: np.ndarray
    ST: np.ndarray
    trT2: float
    trST: float
    base: CurvatureSample
    warnings: list[str] = field(default_factory=list)

    @property
    def rbar(self) -> float:
        return self.base.kappa

    @property
    def rbar2(self) -> float:
        return self.base.kappa2

    def ingredients(self) -> list[np.ndarray]:
        b = self.base
        return [b.g, b.S, b.S2, self.T, self.T2, self.ST]

    def to_json(self) -> dict:
        return {"f": self.f, "P": self.P, "Q": self.Q, "trT": self.trT,
                "T": self.T, "max_abs_T": float(np.max(np.abs(self.T)))}


def _chart_sample(chart: MetricChart, point) -> CurvatureSample:
    return curvature_sample(chart, point)


def warp_scalars(spec: WarpedSpec, base_point: Mapping[str, float], tol: Tolerances | None = None) -> WarpScalars:
    tol = tol or Tolerances()
    base = _chart_sample(spec.base, base_point)
    f, grad, hess = spec.warp_at(base_point)
    if not f > 0:
        raise WarpError(f"warp is not positive (f = {f:.6g})")
    ginv = base.ginv
    # covariant Hessian: d_b f_a - Gamma^c_ab f_c
    nabla = hess - np.einsum("cab,c->ab", base.gamma, grad)
    T = -(nabla - np.outer(grad, grad) / (2 * f)) / (2 * f)
    T = 0.5 * (T + T.T)
    trT = float(np.einsum("ab,ab->", ginv, T))
    P = float(grad @ ginv @ grad) / (4 * f * f)
    Q = f * ((spec.q - 1) * P - trT)
    T2 = T @ ginv @ T
    T2 = 0.5 * (T2 + T2.T)
    raw = base.S @ ginv @ T
    warnings = []
    skew = float(np.max(np.abs(raw - raw.T), initial=0.0))
    if skew > tol.abs_tol + tol.rel_tol * float(np.max(np.abs(raw), initial=0.0)):
        warnings.append(f"SB.T is not symmetric (skew {skew:.3e}); using its symmetric part")
    ST = 0.5 * (raw + raw.T)
    return WarpScalars(f, grad, T, trT, P, Q, T2, ST,
                       float(np.einsum("ab,ab->", ginv, T2)), float(np.einsum("ab,ab->", ginv, ST)),
                       base, warnings)


@dataclass
class WarpPoint:
    """Everything needed to predict blocks at one product point."""

    spec: WarpedSpec
    point: dict[str, float]
    ws: WarpScalars
    fiber: CurvatureSample

    @property
    def m(self) -> int:
        return self.spec.q

    def fiber_ingredients(self) -> list[np.ndarray]:
        return [self.fiber.g, self.fiber.S, self.fiber.S2]


def warp_point(spec: WarpedSpec, point: Mapping[str, float], tol: Tolerances | None = None) -> WarpPoint:
    bp, fp = spec.split(point)
    return WarpPoint(spec, {**bp, **fp}, warp_scalars(spec, bp, tol), _chart_sample(spec.fiber, fp))


# ---------------------------------------------------------------------------
# Coefficient tables
# ---------------------------------------------------------------------------


@dataclass
class BlockTables:
    """Blockwise coefficient tables plus optional non-tabulated base/fiber parts."""

    base: np.ndarray
    mixed: np.ndarray
    fiber: np.ndarray
    base_extra: np.ndarray | None = None
    fiber_extra: np.ndarray | None = None

    @classmethod
    def zeros(cls) -> "BlockTables":
        return cls(np.zeros((6, 6)), np.zeros((6, 3)), np.zeros((3, 3)))

    def __add__(self, other: "BlockTables") -> "BlockTables":
        def add(a, b):
            if a is None:
                return b
            return a if b is None else a + b
        return BlockTables(self.base + other.base, self.mixed + other.mixed, self.fiber + other.fiber,
                           add(self.base_extra, other.base_extra), add(self.fiber_extra, other.fiber_extra))

    def __mul__(self, c: float) -> "BlockTables":
        scale = lambda a: None if a is None else c * a  # noqa: E731
        return BlockTables(c * self.base, c * self.mixed, c * self.fiber,
                           scale(self.base_extra), scale(self.fiber_extra))

    __rmul__ = __mul__

    def __sub__(self, other: "BlockTables") -> "BlockTables":
        return self + (-1.0) * other


def factor_vectors(wp: WarpPoint) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Block components of ``g``, ``S``, ``S^2`` in ingredient coordinates.

    ``S_ab = SB - m T``, ``S_{alpha beta} = SF + Q gF``, and ``S^2`` is the
    square of those blocks taken with the full inverse metric.
    """
    m, f, Q = wp.m, wp.ws.f, wp.ws.Q
    e = np.eye(6)
    g_b, S_b = e[0], e[1] - m * e[3]
    S2_b = e[2] - 2 * m * e[5] + m * m * e[4]
    ef = np.eye(3)
    g_f = f * ef[0]
    S_f = ef[1] + Q * ef[0]
    S2_f = (ef[2] + 2 * Q * ef[1] + Q * Q * ef[0]) / f
    return {"g": (g_b, g_f), "S": (S_b, S_f), "S2": (S2_b, S2_f)}


def _sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (np.outer(a, b) + np.outer(b, a))


def wedge_tables(wp: WarpPoint, left: str, right: str) -> BlockTables:
    vec = factor_vectors(wp)
    (ab, af), (bb, bf) = vec[left], vec[right]
    return BlockTables(_sym_outer(ab, bb), -(np.outer(ab, bf) + np.outer(bb, af)), _sym_outer(af, bf))


def riemann_tables(wp: WarpPoint) -> BlockTables:
    """``R_abcd = RB``, ``R_{a alpha b beta} = f T_ab gF``, ``R_fiber = f RF + f^2 P GF``."""
    f, P = wp.ws.f, wp.ws.P
    mixed = np.zeros((6, 3))
    mixed[3, 0] = f
    fiber = np.zeros((3, 3))
    fiber[0, 0] = 0.5 * f * f * P
    return BlockTables(np.zeros((6, 6)), mixed, fiber, wp.ws.base.R.copy(), f * wp.fiber.R)


def combination_tables(wp: WarpPoint, coeffs: Sequence[float]) -> BlockTables:
    """Tables of ``sum_k L_k W_k`` over the six wedge products (shorter vectors pad with zeros)."""
    out = BlockTables.zeros()
    for c, name in zip(coeffs, WEDGE_ORDER):
        if c != 0.0:
            out = out + float(c) * wedge_tables(wp, *WEDGES[name])
    return out


def _kn_form(table: np.ndarray, xs: list[np.ndarray]) -> np.ndarray:
    d = xs[0].shape[0]
    out = np.zeros((d, d, d, d))
    for i, x in enumerate(xs):
        y = sum(table[i, j] * xs[j] for j in range(len(xs)) if table[i, j] != 0.0)
        if not isinstance(y, int):
            out += kulkarni_nomizu(x, y)
    return out


def block_tensors(wp: WarpPoint, tables: BlockTables):
    """``(base, mixed, fiber)`` tensors; ``mixed[a, b, alpha, beta] = R_{a alpha b beta}``."""
    xs, ys = wp.ws.ingredients(), wp.fiber_ingredients()
    base = _kn_form(tables.base, xs)
    if tables.base_extra is not None:
        base = base + tables.base_extra
    mixed = np.einsum("uw,uab,wcd->abcd", tables.mixed, np.array(xs), np.array(ys))
    fiber = _kn_form(tables.fiber, ys)
    if tables.fiber_extra is not None:
        fiber = fiber + tables.fiber_extra
    return base, mixed, fiber


def embed_blocks(base: np.ndarray, mixed: np.ndarray, fiber: np.ndarray) -> np.ndarray:
    p, q = base.shape[0], fiber.shape[0]
    n = p + q
    full = np.zeros((n, n, n, n))
    B, F = slice(0, p), slice(p, n)
    full[B, B, B, B] = base
    full[F, F, F, F] = fiber
    full[B, F, B, F] = mixed.transpose(0, 2, 1, 3)
    full[F, B, F, B] = mixed.transpose(2, 0, 3, 1)
    full[B, F, F, B] = -mixed.transpose(0, 2, 3, 1)
    full[F, B, B, F] = -mixed.transpose(2, 0, 1, 3)
    return full


def tables_to_tensor(wp: WarpPoint, tables: BlockTables) -> np.ndarray:
    return embed_blocks(*block_tensors(wp, tables))


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    p, q = a.shape[0], b.shape[0]
    out = np.zeros((p + q, p + q))
    out[:p, :p] = a
    out[p:, p:] = b
    return out


# ---------------------------------------------------------------------------
# Predictions
# ---------------------------------------------------------------------------


def predicted_riemann(wp: WarpPoint) -> np.ndarray:
    return tables_to_tensor(wp, riemann_tables(wp))


def predicted_ricci_scalar(wp: WarpPoint):
    """``(S, kappa, S^2)`` of the product from base and fiber data."""
    ws, fib, m = wp.ws, wp.fiber, wp.m
    S = _block_diag(ws.base.S - m * ws.T, fib.S + ws.Q * fib.g)
    kappa = ws.base.kappa + fib.kappa / ws.f + m * ((m - 1) * ws.P - 2 * ws.trT)
    S2 = _block_diag(ws.base.S2 - 2 * m * ws.ST + m * m * ws.T2,
                     (fib.S2 + 2 * ws.Q * fib.S + ws.Q ** 2 * fib.g) / ws.f)
    return S, kappa, S2


def predicted_wedges(wp: WarpPoint) -> dict[str, np.ndarray]:
    return {name: tables_to_tensor(wp, wedge_tables(wp, *pair)) for name, pair in WEDGES.items()}


def printed_display_wedges(wp: WarpPoint) -> dict[str, np.ndarray]:
    """The wedge and ``S^2`` blocks exactly as typeset in the source displays.

    Kept only to quantify how far the typeset forms drift from the
    substitution-derived ones.
    """
    m, f, Q = wp.m, wp.ws.f, wp.ws.Q
    ws, fib = wp.ws, wp.fiber
    e, ef = np.eye(6), np.eye(3)
    s2_b = e[2] + m * e[5] + m * m * e[4]
    out = {}
    out["S2"] = _block_diag(ws.base.S2 + m * ws.ST + m * m * ws.T2,
                            (fib.S2 + 2 * Q * fib.S + Q * Q * fib.g) / f)
    vec = factor_vectors(wp)
    t = wedge_tables(wp, "S", "S")
    t.fiber = _sym_outer(ef[1], ef[1]) + Q * _sym_outer(ef[1], ef[0]) + Q * Q * _sym_outer(ef[0], ef[0])
    out["S^S"] = tables_to_tensor(wp, t)
    g_b, g_f = vec["g"]
    S_b, S_f = vec["S"]
    _, s2_f = vec["S2"]
    out["g^S2"] = tables_to_tensor(wp, BlockTables(
        _sym_outer(g_b, s2_b), -(np.outer(g_b, s2_f) + np.outer(s2_b, g_f)), _sym_outer(g_f, s2_f)))
    fib_ssq = (_sym_outer(ef[1], ef[2]) + 4 * Q * _sym_outer(ef[1], ef[1]) + Q * Q * _sym_outer(ef[1], ef[0])
               + Q * _sym_outer(ef[0], ef[2]) + 2 * Q * Q * _sym_outer(ef[0], ef[1])
               + 2 * Q ** 3 * _sym_outer(ef[0], ef[0])) / f
    out["S^S2"] = tables_to_tensor(wp, BlockTables(
        _sym_outer(S_b, s2_b), -(np.outer(S_b, s2_f) + np.outer(s2_b, S_f)), fib_ssq))
    out["S2^S2"] = tables_to_tensor(wp, BlockTables(
        _sym_outer(s2_b, s2_b), -2 * np.outer(s2_b, s2_f), _sym_outer(s2_f, s2_f)))
    return out


# ---------------------------------------------------------------------------
# Printed coefficient tables (cross-check only)
# ---------------------------------------------------------------------------


def printed_grt_tables(L: Sequence[float], f: float, Q: float, P: float, n: int, p: int):
    """The typeset GRT characterization tables as (base 6x6, mixed 6x3, fiber 3x3)."""
    L1, L2, L3, L4, L5, L6 = map(float, L)
    m, d = n - p, p - n
    base = np.array([
        [L1, L2 / 2, L4 / 2, L2 * d / 2, L4 * m ** 2 / 2, L4 * m / 2],
        [L2 / 2, L4, L5 / 2, L4 * d, L5 * m ** 2 / 2, L5 * m / 2],
        [L4 / 2, L5 / 2, L6, L5 * d / 2, L6 * m ** 2, L6 * m],
        [L2 * d / 2, L3 * d, L5 * d / 2, L3 * m ** 2, -L5 * m ** 3 / 2, -L5 * m ** 2 / 2],
        [L4 * m ** 2 / 2, L5 * m ** 2 / 2, L6 * m ** 2, -L5 * m ** 3 / 2, L6 * m ** 4, L6 * m ** 3],
        [L4 * m / 2, L5 * m / 2, L6 * m, -L5 * m ** 2 / 2, L6 * m ** 3, L6 * m ** 2],
    ])
    k = L4 * f * f + L5 * Q * f + 2 * L6 * Q * Q
    mixed = np.array([
        [-L4 * Q * Q / f - L2 * Q - 2 * f * L1, -L2 - 2 * L4 * Q / f, -L4 / f],
        [-L5 * Q * Q / f - 2 * L3 * Q - f * L2, -2 * (f * L3 + L5 * Q) / f, -L5 / f],
        [-2 * L6 * Q * Q / f - L5 * Q - f * L4, -L5 - 4 * L6 * Q / f, -2 * L6 / f],
        [f * (L2 * d - 1) + L5 * Q * Q * d / f + 2 * L3 * Q * d, -2 * m * (f * L3 + L5 * Q) / f, L5 * d / f],
        [-m ** 2 * k / f, -m ** 2 * (f * L5 + 4 * L6 * Q) / f, -2 * L6 * m ** 2 / f],
        [-m * k / f, -m * (f * L5 + 4 * L6 * Q) / f, 2 * L6 * d / f],
    ])
    gS = (L3 + L4) * Q + (L2 * f ** 3 + 3 * L5 * Q * Q * f + 4 * L6 * Q ** 3) / (2 * f * f)
    gS2 = 0.5 * (L4 + Q * (f * L5 + 2 * L6 * Q) / (f * f))
    SS2 = (f * L5 + 4 * L6 * Q) / (2 * f * f)
    fiber = np.array([
        [L6 * Q ** 4 / f ** 2 + L5 * Q ** 3 / f + (L3 + L4) * Q * Q + f * L2 * Q + f * f * L1 - f * P / 2, gS, gS2],
        [gS, L3 + 2 * Q * (f * L5 + 2 * L6 * Q) / (f * f), SS2],
        [gS2, SS2, L6 / (f * f)],
    ])
    return base, mixed, fiber


def printed_rt_tables(N: Sequence[float], f: float, Q: float, P: float, n: int, p: int):
    """The typeset Roter characterization tables, re-indexed to the GRT layout.

    Base rows/columns are ``[gB, SB, T]``; the mixed table is returned as
    base rows ``[gB, SB, T]`` by fiber columns ``[gF, SF]``.
    """
    N1, N2, N3 = map(float, N)
    m, d = n - p, p - n
    base = np.array([
        [N1, N2 / 2, N2 * d / 2],
        [N2 / 2, N3, N3 * d],
        [N2 * d / 2, N3 * d, N3 * m * m],
    ])
    mixed = np.array([
        [-2 * f * N1 - N2 * Q, -f * N2 - 2 * N3 * Q, -f * (1 + N2 * m) - 2 * N3 * Q * m],
        [-N2, -2 * N3, 2 * N3 * d],
    ]).T
    fiber = np.array([
        [N1 * f * f + N2 * Q * f + N3 * Q * Q - f * P / 2, f * N2 / 2 + N3 * Q],
        [f * N2 / 2 + N3 * Q, N3],
    ])
    return base, mixed, fiber


def derived_condition_tables(wp: WarpPoint, coeffs: Sequence[float]):
    """Substitution-derived tables in the typeset layout.

    base: ``RB = sum``; mixed: ``sum - R`` must vanish; fiber: ``f RF = sum - (f^2 P / 2) gF ^ gF``.
    """
    combo = combination_tables(wp, coeffs)
    R = riemann_tables(wp)
    fiber = combo.fiber.copy()
    fiber[0, 0] -= 0.5 * wp.ws.f ** 2 * wp.ws.P
    return combo.base, combo.mixed - R.mixed, fiber


def _compare_tables(label: str, printed: np.ndarray, derived: np.ndarray, rows, cols, symmetric: bool,
                    rel: float = 1e-9) -> list[str]:
    if symmetric:
        printed = 0.5 * (printed + printed.T)
    scale = max(1.0, float(np.max(np.abs(derived))), float(np.max(np.abs(printed))))
    out = []
    for i, j in itertools.product(range(printed.shape[0]), range(printed.shape[1])):
        if symmetric and j < i:
            continue
        if abs(printed[i, j] - derived[i, j]) > rel * scale:
            out.append(f"{label} [{rows[i]}, {cols[j]}]: printed {printed[i, j]:.10g}, substitution {derived[i, j]:.10g}")
    return out


BASE_LABELS = ("gB", "SB", "SB2", "T", "T2", "SB.T")
FIBER_LABELS = ("gF", "SF", "SF2")


def cross_check_tables(wp: WarpPoint, coeffs: Sequence[float]) -> list[str]:
    """Entry-by-entry comparison of typeset tables with the derived ones (warnings only)."""
    spec, ws = wp.spec, wp.ws
    coeffs = list(coeffs)
    db, dm, dfib = derived_condition_tables(wp, coeffs + [0.0] * (6 - len(coeffs)))
    if len(coeffs) == 3:
        pb, pm, pf = printed_rt_tables(coeffs, ws.f, ws.Q, ws.P, spec.n, spec.p)
        sel = [0, 1, 3]
        db, dm, dfib = db[np.ix_(sel, sel)], dm[np.ix_(sel, [0, 1])], dfib[:2, :2]
        brows, frows, tag = [BASE_LABELS[i] for i in sel], FIBER_LABELS[:2], "printed RT table"
    else:
        pb, pm, pf = printed_grt_tables(coeffs, ws.f, ws.Q, ws.P, spec.n, spec.p)
        brows, frows, tag = BASE_LABELS, FIBER_LABELS, "printed GRT table"
    return (_compare_tables(f"{tag} (base)", pb, db, brows, brows, True)
            + _compare_tables(f"{tag} (mixed)", pm, dm, brows, frows, False)
            + _compare_tables(f"{tag} (fiber)", pf, dfib, frows, frows, True))


# ---------------------------------------------------------------------------
# Block equations
# ---------------------------------------------------------------------------


@dataclass
class BlockCheck:
    base: float
    mixed: float
    fiber: float
    passed: bool
    warnings: list[str] = field(default_factory=list)

    def residuals(self) -> dict[str, float]:
        return {"base": self.base, "mixed": self.mixed, "fiber": self.fiber}

    def to_json(self) -> dict:
        return {**self.residuals(), "passed": self.passed}


def _block_residuals(wp: WarpPoint, coeffs: Sequence[float], tol: Tolerances) -> BlockCheck:
    R = riemann_tables(wp)
    res = combination_tables(wp, coeffs) - R
    rb, rm, rf = block_tensors(wp, res)
    full_R = tables_to_tensor(wp, R)
    # each mixed entry appears four times in the full tensor
    norm = float(np.linalg.norm(full_R))
    scale = norm if norm > tol.abs_tol else 1.0
    out = (float(np.linalg.norm(rb)) / scale, 2.0 * float(np.linalg.norm(rm)) / scale,
           float(np.linalg.norm(rf)) / scale)
    limit = tol.abs_tol / scale + tol.rel_tol if norm > tol.abs_tol else tol.abs_tol
    return BlockCheck(*out, passed=all(r <= limit for r in out))


def check_grt_blocks(wp: WarpPoint, L: Sequence[float], tol: Tolerances | None = None,
                     cross_check: bool = True) -> BlockCheck:
    """Relative residual of each block of ``R = sum L_k W_k``.

    Residuals are Frobenius norms of the block part of the difference over
    ``|R|``, so the three squared residuals add up to the full one.
    """
    tol = tol or Tolerances()
    L = [float(x) for x in L]
    if len(L) != 6:
        raise ValueError("need six coefficients")
    out = _block_residuals(wp, L, tol)
    if cross_check:
        out.warnings = cross_check_tables(wp, L)
    return out


def check_rt_blocks(wp: WarpPoint, N: Sequence[float], tol: Tolerances | None = None,
                    cross_check: bool = True) -> BlockCheck:
    tol = tol or Tolerances()
    N = [float(x) for x in N]
    if len(N) != 3:
        raise ValueError("need three coefficients")
    out = _block_residuals(wp, N + [0.0, 0.0, 0.0], tol)
    if cross_check:
        out.warnings = cross_check_tables(wp, N)
    return out


def conformal_coefficients(n: int, kappa: float) -> tuple[float, float, float]:
    return (-kappa / (2 * (n - 1) * (n - 2)), 1.0 / (n - 2), 0.0)


def check_cflat_warp(wp: WarpPoint, tol: Tolerances | None = None) -> BlockCheck:
    """Block equations of conformal flatness, with ``kappa`` from the warped formula."""
    n = wp.spec.n
    if n < 4:
        raise ValueError("conformal flatness check needs dimension >= 4")
    _, kappa, _ = predicted_ricci_scalar(wp)
    return check_rt_blocks(wp, conformal_coefficients(n, kappa), tol, cross_check=False)


def best_fit_blocks(wp: WarpPoint, blocks: Sequence[str] = ("base", "mixed", "fiber"), size: int = 6):
    """Least-squares coefficients minimizing the chosen block residuals.

    Returns ``(coefficients, BlockCheck)``; the check is evaluated on all
    three blocks with the fitted coefficients.
    """
    R = riemann_tables(wp)
    targets = block_tensors(wp, R)
    cols = [block_tensors(wp, wedge_tables(wp, *WEDGES[name])) for name in WEDGE_ORDER[:size]]
    pick = {"base": 0, "mixed": 1, "fiber": 2}

    def vec(parts):
        chunks = []
        for b in blocks:
            k = pick[b]
            t = parts[k]
            chunks.append(2.0 * t.ravel() if k == 1 else t.ravel())
        return np.concatenate(chunks)

    A = np.column_stack([vec(c) for c in cols])
    y = vec(targets)
    coeffs, *_ = np.linalg.lstsq(A, y, rcond=1e-12)
    padded = list(coeffs) + [0.0] * (6 - size)
    return coeffs, _block_residuals(wp, padded, Tolerances())


# ---------------------------------------------------------------------------
# Corollary scalars
# ---------------------------------------------------------------------------


@dataclass
class CorollaryScalars:
    J0: float
    J1: float
    J2: float
    fiber_roter: bool
    fiber_constant_curvature: bool
    fiber_conformally_flat: bool
    cflat_expression: float | None
    printed_J1: float
    printed_J2: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _near_zero(value: float, terms: Sequence[float], tol: Tolerances) -> bool:
    return bool(abs(value) <= tol.abs_tol + tol.rel_tol * float(sum(abs(t) for t in terms)))


def corollary_scalars(wp: WarpPoint, L: Sequence[float], tol: Tolerances | None = None) -> CorollaryScalars:
    """Trace of the mixed block equation and the fiber predicates it implies.

    Contracting ``sum_k L_k W_k - R = 0`` on the mixed block with ``gB^-1``
    gives ``J0 gF + J2 SF + J1 SF^2 = 0`` on the fiber.  ``J1 != 0`` makes
    the fiber Ein(2), hence Roter type; ``J1 = 0, J2 != 0`` makes it
    Einstein, hence of constant curvature.
    """
    tol = tol or Tolerances()
    L = [float(x) for x in L] + [0.0] * (6 - len(L))
    ws, spec = wp.ws, wp.spec
    ginv = ws.base.ginv
    traces = np.array([float(np.einsum("ab,ab->", ginv, x)) for x in ws.ingredients()])
    M = combination_tables(wp, L).mixed - riemann_tables(wp).mixed
    terms = M * traces[:, None]
    J0, J2, J1 = (float(v) for v in terms.sum(axis=0))
    J1_zero = _near_zero(J1, terms[:, 2], tol)
    J2_zero = _near_zero(J2, terms[:, 1], tol)

    fiber_roter = not J1_zero
    fiber_cc = J1_zero and not J2_zero
    expression = None
    cflat = False
    if not J1_zero:
        F = combination_tables(wp, L).fiber
        a = -J2 / J1
        parts = [F[1, 1], 2 * F[1, 2] * a, F[2, 2] * a * a]
        expression = float(sum(parts))
        cflat = _near_zero(expression, parts, tol)

    L1, L2, L3, L4, L5, L6 = L
    f, Q, p, m = ws.f, ws.Q, spec.p, spec.q
    inner = m * (ws.trT2 * m + ws.trST) + ws.rbar2
    printed_J1 = -(L5 * ws.rbar + 2 * L6 * inner + L4 * p + L5 * ws.trT * m) / f
    printed_J2 = -(2 * ws.rbar * (f * L3 + L5 * Q) + (f * L5 + 4 * L6 * Q) * inner
                   + p * (f * L2 + 2 * L4 * Q) + 2 * ws.trT * m * (f * L3 + L5 * Q)) / f
    return CorollaryScalars(J0, J1, J2, fiber_roter, fiber_cc, cflat, expression, printed_J1, printed_J2)


# ---------------------------------------------------------------------------
# Verification harness
# ---------------------------------------------------------------------------


def _rel_dev(pred, direct, abs_floor: float = 1e-12) -> float:
    pred, direct = np.asarray(pred, dtype=float), np.asarray(direct, dtype=float)
    diff = float(np.max(np.abs(pred - direct), initial=0.0))
    scale = float(np.max(np.abs(direct), initial=0.0))
    return diff / scale if scale > abs_floor else diff


def formula_deviations(wp: WarpPoint, direct: CurvatureSample) -> dict[str, float]:
    S, kappa, S2 = predicted_ricci_scalar(wp)
    out = {
        "R": _rel_dev(predicted_riemann(wp), direct.R),
        "S": _rel_dev(S, direct.S),
        "kappa": _rel_dev(kappa, direct.kappa),
        "S2": _rel_dev(S2, direct.S2),
    }
    g, S_d, S2_d = direct.g, direct.S, direct.S2
    mats = {"g": g, "S": S_d, "S2": S2_d}
    for name, tensor in predicted_wedges(wp).items():
        a, b = WEDGES[name]
        out[name] = _rel_dev(tensor, kulkarni_nomizu(mats[a], mats[b]))
    return out


def printed_display_deviations(wp: WarpPoint, direct: CurvatureSample) -> dict[str, float]:
    mats = {"g": direct.g, "S": direct.S, "S2": direct.S2}
    out = {}
    for name, tensor in printed_display_wedges(wp).items():
        if name == "S2":
            out[name] = _rel_dev(tensor, direct.S2)
        else:
            a, b = WEDGES[name]
            out[name] = _rel_dev(tensor, kulkarni_nomizu(mats[a], mats[b]))
    return out


@dataclass
class AssemblyReport:
    name: str
    config: ClassifyConfig
    points: list[dict[str, float]]
    formula_deviations: dict[str, float]
    printed_display_deviations: dict[str, float]
    table_cross_check_warnings: list[str]
    block_checks: list[dict]
    warp_extremes: dict[str, float]
    warnings: list[str]

    def max_deviation(self) -> float:
        return max(self.formula_deviations.values())

    def to_json(self) -> dict:
        return {
            "input": self.name,
            "config": self.config.to_json(),
            "formula_deviations": self.formula_deviations,
            "printed_display_deviations": self.printed_display_deviations,
            "table_cross_check_warnings": self.table_cross_check_warnings,
            "block_checks": self.block_checks,
            "warp_extremes": self.warp_extremes,
            "points": self.points,
            "warnings": self.warnings,
        }


def verify_assembly(spec: WarpedSpec, config: ClassifyConfig | None = None, block_check: bool = True) -> AssemblyReport:
    """Compare every blockwise prediction with direct curvature of the assembled chart."""
    config = config or ClassifyConfig()
    tol = config.tolerances
    chart = assemble(spec)
    rng = np.random.Generator(np.random.PCG64(config.seed))

    def accept(point):
        direct = curvature_sample(chart, point)
        return direct, warp_point(spec, point, tol)

    drawn = draw_points(chart, config.points, rng, accept)
    check_warp_positive(spec, [spec.split(pt)[0] for pt, _ in drawn])
    worst: dict[str, float] = {}
    printed: dict[str, float] = {}
    tables: list[str] = []
    seen_entries: set[str] = set()
    blocks = []
    extremes = {"max_abs_T": 0.0, "max_abs_P": 0.0, "max_abs_Q": 0.0}
    warnings: list[str] = []
    for pt, (direct, wp) in drawn:
        for k, v in formula_deviations(wp, direct).items():
            worst[k] = max(worst.get(k, 0.0), v)
        for k, v in printed_display_deviations(wp, direct).items():
            printed[k] = max(printed.get(k, 0.0), v)
        extremes["max_abs_T"] = max(extremes["max_abs_T"], float(np.max(np.abs(wp.ws.T))))
        extremes["max_abs_P"] = max(extremes["max_abs_P"], abs(wp.ws.P))
        extremes["max_abs_Q"] = max(extremes["max_abs_Q"], abs(wp.ws.Q))
        for w in wp.ws.warnings:
            if w not in warnings:
                warnings.append(w)
        if block_check and spec.n >= 3:
            verdict = solve_grt(direct, tol)
            chk = check_grt_blocks(wp, verdict.coefficients, tol)
            for w in chk.warnings:
                entry = w.split(":", 1)[0]
                if entry not in seen_entries:
                    seen_entries.add(entry)
                    tables.append(w)
            blocks.append({"grt_passed": verdict.passed, "coeffs": verdict.coefficients, **chk.residuals()})
    for name, dev in worst.items():
        if dev > tol.rel_tol:
            warnings.append(f"{name}: predicted block deviates by {dev:.3e}")
    return AssemblyReport(spec.name, config, [pt for pt, _ in drawn], worst, printed, tables, blocks, extremes, warnings)


# ---------------------------------------------------------------------------
# Spec files
# ---------------------------------------------------------------------------


def parse_warp_spec(text: str, base_dir: str = ".", name: str = "") -> WarpedSpec:
    """Parse ``base PATH`` / ``fiber PATH`` / ``warp : EXPR`` lines; paths are relative to ``base_dir``."""
    base = fiber = None
    warp_src = None
    warp_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head in ("base", "fiber"):
            if not rest:
                raise WarpSpecError(f"missing path after '{head}'", lineno)
            path = rest if os.path.isabs(rest) else os.path.join(base_dir, rest)
            try:
                chart = read_chart(path)
            except OSError as exc:
                raise WarpSpecError(f"cannot read {head} chart '{rest}': {exc.strerror}", lineno) from None
            except ChartFormatError as exc:
                raise WarpSpecError(f"{head} chart '{rest}': {exc}", lineno) from None
            if head == "base":
                base = chart
            else:
                fiber = chart
        elif head.startswith("warp"):
            _, colon, src = line.partition(":")
            if not colon or line[:line.index(":")].strip() != "warp":
                raise WarpSpecError("expected 'warp : EXPR'", lineno)
            warp_src, warp_line = src.strip(), lineno
        else:
            raise WarpSpecError(f"unknown directive {head!r}", lineno)
    if base is None or fiber is None or warp_src is None:
        missing = [k for k, v in (("base", base), ("fiber", fiber), ("warp", warp_src)) if v is None]
        raise WarpSpecError(f"missing {', '.join(missing)} line")
    params = {**base.params, **fiber.params}
    try:
        warp = parse(warp_src, base.coords, params)
    except ExprSyntaxError as exc:
        raise WarpSpecError(exc.reason, warp_line) from None
    try:
        return WarpedSpec(base, fiber, warp, name)
    except WarpError as exc:
        raise WarpSpecError(str(exc), warp_line) from None


def read_warp_spec(path) -> WarpedSpec:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_warp_spec(text, os.path.dirname(os.path.abspath(path)), os.path.basename(path))


def warp_spec_to_text(base_path: str, fiber_path: str, warp: Expr, header: str | None = None) -> str:
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [f"base {base_path}", f"fiber {fiber_path}", f"warp : {warp.to_source()}"]
    return "\n".join(lines) + "\n"


def product_spec(base: MetricChart, fiber: MetricChart, name: str = "") -> WarpedSpec:
    return WarpedSpec(base, fiber, Number(1.0), name)
