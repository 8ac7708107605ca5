"""Pointwise curvature-structure classification.

Each structure is tested by minimum-norm least squares of the vectorized
curvature tensor against a Kulkarni-Nomizu basis, or by a rank test on
stacked Ricci powers.  Verdicts are certificates over finitely many sampled
points, not proofs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import (
    CurvatureSample,
    MetricChart,
    Tolerances,
    curvature_sample,
    draw_points,
    kulkarni_nomizu,
    sym2_vectorize,
    sym4_vectorize,
)

RANK_THRESHOLD = 1e-9
ROTER_NAMES = ("N1", "N2", "N3")
GRT_NAMES = ("L1", "L2", "L3", "L4", "L5", "L6")
GENERATOR = "numpy.random.PCG64"
CERTIFICATE_NOTE = ("structure flags are sampled certificates: each PASS means the pointwise "
                    "condition held at every accepted sample point")


@dataclass
class DependenceVerdict:
    """Least-squares fit of a target tensor by a list of basis tensors."""

    coefficients: np.ndarray
    residual_rel: float
    basis_rank: int
    singular_values: list[float]
    passed: bool
    names: tuple[str, ...] = ()
    relative: bool = True
    target_norm: float = 0.0
    basis_norms: list[float] = field(default_factory=list)

    @property
    def degenerate_basis(self) -> bool:
        return self.basis_rank < len(self.coefficients)

    def coefficient_map(self) -> dict[str, float]:
        return {n: float(c) for n, c in zip(self.names, self.coefficients)}

    def to_json(self) -> dict:
        return {
            "coeffs": [float(c) for c in self.coefficients],
            "residual_rel": self.residual_rel,
            "rank": self.basis_rank,
            "degenerate_basis": self.degenerate_basis,
            "passed": self.passed,
        }


def matrix_rank(columns: np.ndarray, threshold: float = RANK_THRESHOLD) -> tuple[int, np.ndarray]:
    s = np.linalg.svd(columns, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s / s[0] > threshold)), s


def solve_span(target: np.ndarray, basis: Sequence[np.ndarray], tol: Tolerances | None = None,
               names: Sequence[str] = ()) -> DependenceVerdict:
    """Minimum-norm least-squares coefficients of ``target`` over ``basis``.

    Singular values below ``RANK_THRESHOLD * sigma_max`` are discarded, which
    both counts the rank and regularizes degenerate bases.
    """
    if len(basis) == 0:
        raise ValueError("empty basis")
    tol = tol or Tolerances()
    A = np.column_stack([np.asarray(b, dtype=float).ravel() for b in basis])
    b = np.asarray(target, dtype=float).ravel()
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s / s[0] > RANK_THRESHOLD)) if s[0] > 0 else 0
    coeffs = Vt[:rank].T @ ((U[:, :rank].T @ b) / s[:rank]) if rank else np.zeros(A.shape[1])
    resid = float(np.linalg.norm(A @ coeffs - b))
    tnorm = float(np.linalg.norm(b))
    relative = tnorm >= tol.abs_tol
    residual = resid / tnorm if relative else resid
    passed = resid <= tol.abs_tol + tol.rel_tol * tnorm
    return DependenceVerdict(coeffs, residual, rank, [float(x) for x in s], passed, tuple(names),
                             relative, tnorm, [float(np.linalg.norm(A[:, k])) for k in range(A.shape[1])])


def roter_basis(sample: CurvatureSample) -> list[np.ndarray]:
    g, S = sample.g, sample.S
    return [kulkarni_nomizu(g, g), kulkarni_nomizu(g, S), kulkarni_nomizu(S, S)]


def grt_basis(sample: CurvatureSample) -> list[np.ndarray]:
    g, S, S2 = sample.g, sample.S, sample.S2
    return roter_basis(sample) + [kulkarni_nomizu(g, S2), kulkarni_nomizu(S, S2), kulkarni_nomizu(S2, S2)]


def _require_dim(sample: CurvatureSample):
    if sample.n < 3:
        raise ValueError("structure tests need dimension >= 3")


def solve_roter(sample: CurvatureSample, tol: Tolerances | None = None) -> DependenceVerdict:
    _require_dim(sample)
    vec = lambda T: sym4_vectorize(T)  # noqa: E731
    return solve_span(vec(sample.R), [vec(T) for T in roter_basis(sample)], tol, ROTER_NAMES)


def solve_grt(sample: CurvatureSample, tol: Tolerances | None = None) -> DependenceVerdict:
    _require_dim(sample)
    vec = lambda T: sym4_vectorize(T)  # noqa: E731
    return solve_span(vec(sample.R), [vec(T) for T in grt_basis(sample)], tol, GRT_NAMES)


def reconstruction_error(sample: CurvatureSample, verdict: DependenceVerdict) -> float:
    """Full-tensor relative error of the fitted combination, independent of vectorization."""
    basis = roter_basis(sample) if verdict.names == ROTER_NAMES else grt_basis(sample)
    fitted = sum(c * T for c, T in zip(verdict.coefficients, basis))
    err = float(np.max(np.abs(fitted - sample.R)))
    scale = sample.scale
    return err / scale if scale > 1e-12 else err


def check_constant_curvature(sample: CurvatureSample, tol: Tolerances | None = None) -> tuple[bool, float]:
    """``R - kappa / (n (n-1)) G`` against the zero test; returns (flag, relative residual)."""
    tol = tol or Tolerances()
    n = sample.n
    diff = sample.R - sample.kappa / (n * (n - 1)) * sample.G
    scale = sample.scale
    res = float(np.max(np.abs(diff)))
    return tol.is_zero(diff, scale), (res / scale if scale > tol.abs_tol else res)


def check_conformally_flat(sample: CurvatureSample, tol: Tolerances | None = None):
    """Vanishing of C; dimension 3 is reported as ``"indeterminate"``."""
    tol = tol or Tolerances()
    n = sample.n
    if n < 3:
        raise ValueError("conformal flatness needs dimension >= 3")
    scale = sample.scale
    res = float(np.max(np.abs(sample.C)))
    rel = res / scale if scale > tol.abs_tol else res
    if n == 3:
        return "indeterminate", rel
    return tol.is_zero(sample.C, scale), rel


def check_ein(sample: CurvatureSample, level: int) -> tuple[bool, int, list[float]]:
    """Ein(level): ``g, S, ..., S^level`` linearly dependent at the point."""
    if not 1 <= level <= 4:
        raise ValueError("level must be 1..4")
    cols = np.column_stack([sym2_vectorize(A) for A in sample.ricci_powers()[: level + 1]])
    rank, s = matrix_rank(cols)
    return rank < level + 1, rank, [float(x) for x in s]


def exceptional_coefficients(names: tuple[str, ...], sample: CurvatureSample, L4: float = 0.0) -> np.ndarray:
    """Coefficient values for which the contracted condition holds identically."""
    n, kappa, kappa2 = sample.n, sample.kappa, sample.kappa2
    if names == ROTER_NAMES:
        return np.array([-kappa / (2 * (n * n - 3 * n + 2)), 1.0 / (n - 2), 0.0])
    L1 = 0.5 * (L4 * (kappa ** 2 - kappa2) / (n - 1) - kappa / (n * n - 3 * n + 2))
    return np.array([L1, 1.0 / (n - 2) - L4 * kappa, 0.5 * L4 * (n - 2), L4, 0.0, 0.0])


def exceptional_locus_flags(verdict: DependenceVerdict, sample: CurvatureSample,
                            tol: Tolerances | None = None, coef_tol: float = 1e-6) -> bool:
    """True iff the fitted coefficients sit on the exceptional values.

    With a degenerate basis the coefficients are not unique, so the test asks
    whether the exceptional vector is itself an admissible solution.
    """
    tol = tol or Tolerances()
    if not verdict.passed or not verdict.relative:
        return False
    c = np.asarray(verdict.coefficients)
    L4 = float(c[3]) if len(c) == 6 else 0.0
    exc = exceptional_coefficients(verdict.names, sample, L4)
    if not verdict.degenerate_basis:
        return bool(np.all(np.abs(c - exc) <= coef_tol * max(1.0, float(np.max(np.abs(exc))))))
    basis = roter_basis(sample) if verdict.names == ROTER_NAMES else grt_basis(sample)
    fitted = sum(e * T for e, T in zip(exc, basis))
    return tol.is_zero(fitted - sample.R, sample.scale)


def preferred_grt_coefficients(sample: CurvatureSample, tol: Tolerances | None = None):
    """A six-coefficient representation taken from the lowest structure that fits.

    Conformally flat samples (n >= 4) use the conformal coefficients, Roter
    samples use their three coefficients padded with zeros, and everything
    else uses the minimum-norm generalized fit.  Returns ``(label, L)``;
    ``L`` is ``None`` when even the generalized fit fails.
    """
    tol = tol or Tolerances()
    n = sample.n
    if n >= 4:
        flag, _ = check_conformally_flat(sample, tol)
        if flag is True:
            return "conformally_flat", exceptional_coefficients(GRT_NAMES, sample, 0.0)
    rt = solve_roter(sample, tol)
    if rt.passed:
        return "roter", np.concatenate([rt.coefficients, np.zeros(3)])
    grt = solve_grt(sample, tol)
    if grt.passed:
        return "grt", grt.coefficients
    return "none", None


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifyConfig:
    points: int = 25
    seed: int = 42
    abs_tol: float = 1e-12
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("points must be >= 1")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(self.abs_tol, self.rel_tol)

    def to_json(self) -> dict:
        return {"points": self.points, "seed": self.seed, "abs_tol": self.abs_tol,
                "rel_tol": self.rel_tol, "generator": GENERATOR}


@dataclass
class PointResult:
    coords: dict[str, float]
    sample: CurvatureSample
    flat: bool
    constant_curvature: bool
    cc_residual: float
    conformally_flat: bool | str
    conformal_residual: float
    roter: DependenceVerdict
    grt: DependenceVerdict
    ein: list[bool]
    ein_ranks: list[int]
    exceptional_roter: bool
    exceptional_grt: bool
    reconstruction: dict[str, float]

    def to_json(self) -> dict:
        return {
            "coords": self.coords,
            "flat": self.flat,
            "constant_curvature": {"passed": self.constant_curvature, "residual_rel": self.cc_residual},
            "conformally_flat": {"passed": self.conformally_flat, "residual_rel": self.conformal_residual},
            "roter": self.roter.to_json(),
            "grt": self.grt.to_json(),
            "ein": {"ranks": self.ein_ranks, "holds": self.ein},
            "exceptional": {"roter": self.exceptional_roter, "grt": self.exceptional_grt},
            "kappa": self.sample.kappa,
        }


@dataclass
class ClassificationReport:
    input: str
    config: ClassifyConfig
    n: int
    points: list[PointResult]
    flags: dict
    special_vanishing: list[str]
    exceptional_locus: dict[str, bool]
    warnings: list[str]

    def to_json(self) -> dict:
        return {
            "input": self.input,
            "config": self.config.to_json(),
            "dimension": self.n,
            "flags": self.flags,
            "per_point": [p.to_json() for p in self.points],
            "special_vanishing": self.special_vanishing,
            "exceptional_locus": self.exceptional_locus,
            "warnings": self.warnings,
            "note": CERTIFICATE_NOTE,
        }

    def coefficient_ranges(self, which: str) -> dict[str, tuple[float, float]]:
        out = {}
        for p in self.points:
            v = getattr(p, which)
            for name, c in v.coefficient_map().items():
                lo, hi = out.get(name, (c, c))
                out[name] = (min(lo, c), max(hi, c))
        return out


def analyze_sample(sample: CurvatureSample, tol: Tolerances) -> PointResult:
    scale = sample.scale
    flat = tol.is_zero(sample.R, 0.0) or scale <= tol.abs_tol
    cc, cc_res = check_constant_curvature(sample, tol)
    cf, cf_res = check_conformally_flat(sample, tol)
    rt = solve_roter(sample, tol)
    grt = solve_grt(sample, tol)
    ein = [check_ein(sample, k) for k in range(1, 5)]
    return PointResult(
        coords=dict(sample.point),
        sample=sample,
        flat=bool(flat),
        constant_curvature=bool(cc),
        cc_residual=cc_res,
        conformally_flat=cf if cf == "indeterminate" else bool(cf),
        conformal_residual=cf_res,
        roter=rt,
        grt=grt,
        ein=[bool(e[0]) for e in ein],
        ein_ranks=[e[1] for e in ein],
        exceptional_roter=exceptional_locus_flags(rt, sample, tol),
        exceptional_grt=exceptional_locus_flags(grt, sample, tol),
        reconstruction={"roter": reconstruction_error(sample, rt), "grt": reconstruction_error(sample, grt)},
    )


def _special_vanishing(results: list[PointResult], which: str, tol: Tolerances) -> list[str]:
    # Under a degenerate basis this describes the minimum-norm representative.
    verdicts = [getattr(r, which) for r in results]
    if not verdicts or not all(v.passed and v.relative for v in verdicts):
        return []
    names = verdicts[0].names
    out = []
    for k, name in enumerate(names):
        if all(abs(v.coefficients[k]) * v.basis_norms[k] <= tol.abs_tol + tol.rel_tol * v.target_norm
               for v in verdicts):
            out.append(name)
    return out


def aggregate(results: list[PointResult], n: int, tol: Tolerances) -> tuple[dict, list[str], list[str], dict]:
    warnings: list[str] = []
    every = lambda attr: all(getattr(r, attr) for r in results)  # noqa: E731
    flat = every("flat")
    cc = every("constant_curvature")
    if n == 3:
        cf: bool | str = "indeterminate"
    else:
        cf = all(r.conformally_flat is True for r in results)
    roter = all(r.roter.passed for r in results)
    grt = all(r.grt.passed for r in results)
    ein = [all(r.ein[k] for r in results) for k in range(4)]

    # Implication chain; a raw disagreement is reported, then repaired upward.
    chain = [("flat", flat), ("constant_curvature", cc)]
    if cf != "indeterminate":
        chain.append(("conformally_flat", cf))
    chain += [("roter", roter), ("grt", grt)]
    fixed = dict(chain)
    holding = False
    for name, value in chain:
        if holding and not value:
            warnings.append(f"hierarchy: {name} failed numerically although a stronger structure passed")
            fixed[name] = True
        holding = holding or fixed[name]
    for k in range(3):
        if ein[k] and not ein[k + 1]:
            warnings.append(f"hierarchy: Ein({k + 2}) failed although Ein({k + 1}) passed")
            ein[k + 1] = True
    level = next((k + 1 for k in range(4) if ein[k]), None)
    flags = {
        "flat": fixed["flat"],
        "constant_curvature": fixed["constant_curvature"],
        "conformally_flat": cf if cf == "indeterminate" else fixed["conformally_flat"],
        "roter": fixed["roter"],
        "grt": fixed["grt"],
        "ein_level": level,
    }
    special = []
    if not flat:
        special = _special_vanishing(results, "roter", tol) if fixed["roter"] else []
        special += _special_vanishing(results, "grt", tol) if fixed["grt"] else []
    for r in results:
        for which in ("roter", "grt"):
            v = getattr(r, which)
            if v.passed and v.relative and r.reconstruction[which] > max(tol.rel_tol * 100, 1e-6):
                warnings.append(f"{which}: reconstruction error {r.reconstruction[which]:.3e} at {r.coords}")
    exceptional = {
        "roter": bool(results) and all(r.exceptional_roter for r in results),
        "grt": bool(results) and all(r.exceptional_grt for r in results),
    }
    return flags, special, warnings, exceptional


def sample_chart(chart: MetricChart, config: ClassifyConfig) -> list[CurvatureSample]:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    return [payload for _, payload in draw_points(chart, config.points, rng, lambda p: curvature_sample(chart, p))]


def classify(chart: MetricChart, config: ClassifyConfig | None = None, input_name: str = "") -> ClassificationReport:
    config = config or ClassifyConfig()
    if chart.n < 3:
        raise ValueError("classification needs dimension >= 3")
    tol = config.tolerances
    samples = sample_chart(chart, config)
    results = [analyze_sample(s, tol) for s in samples]
    flags, special, warnings, exceptional = aggregate(results, chart.n, tol)
    if any(r.roter.degenerate_basis or r.grt.degenerate_basis for r in results) and not flags["flat"]:
        warnings.append("degenerate basis at some points: reported coefficients are minimum-norm, not unique")
    return ClassificationReport(input_name, config, chart.n, results, flags, special, exceptional, warnings)
