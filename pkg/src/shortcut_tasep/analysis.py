"""Mean-field diagnostics and phase classification of measured profiles.

The effective entry/exit rates are evaluated on measured site densities,
so they ignore correlations between neighbouring sites; they are reported
next to the measured fluxes, never fed back into the dynamics.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, Variant

EPS_RHO = 0.05
EPS_J = 0.015
MAX_TRIM = 5


class PhaseLabel(str, enum.Enum):
    LOW_DENSITY = "LowDensity"
    HIGH_DENSITY = "HighDensity"
    MAXIMAL_CURRENT = "MaximalCurrent"
    INDETERMINATE = "Indeterminate"

    @property
    def letter(self) -> str:
        return {"LowDensity": "L", "HighDensity": "H",
                "MaximalCurrent": "M", "Indeterminate": "?"}[self.value]


class DegenerateError(ValueError):
    """A quantity is undefined for these inputs (e.g. a zero rate in a denominator)."""


@dataclass(frozen=True)
class TasepPhase:
    label: PhaseLabel
    J: float
    rho_bulk: float
    rho_1: float
    rho_L: float


def analytic_tasep(alpha: float, beta: float) -> TasepPhase:
    """Large-L open TASEP phase, current and boundary densities.

    On the coexistence line alpha = beta < 1/2 the bulk density is not a
    single number; the label is Indeterminate and ``rho_bulk`` is NaN.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("rates must be nonnegative")
    # alpha < beta keeps beta > 0 here, beta < alpha keeps alpha > 0 below
    if alpha < 0.5 and alpha < beta:
        J = alpha * (1 - alpha)
        return TasepPhase(PhaseLabel.LOW_DENSITY, J, alpha, alpha, J / beta)
    if beta < 0.5 and beta < alpha:
        J = beta * (1 - beta)
        return TasepPhase(PhaseLabel.HIGH_DENSITY, J, 1 - beta, 1 - J / alpha, 1 - beta)
    if alpha >= 0.5 and beta >= 0.5:
        return TasepPhase(PhaseLabel.MAXIMAL_CURRENT, 0.25, 0.5,
                          1 - 1 / (4 * alpha), 1 / (4 * beta))
    J = alpha * (1 - alpha)
    return TasepPhase(PhaseLabel.INDETERMINATE, J, math.nan, alpha, 1 - beta)


@dataclass
class EffectiveRates:
    alpha_eff: list[float]
    beta_eff: list[float]
    J_sc_mf: list[float]

    def to_dict(self) -> dict:
        return {"alpha_eff": self.alpha_eff, "beta_eff": self.beta_eff, "J_sc_mf": self.J_sc_mf}


def _bracket(p, rho_m):
    # chance the jump is not held back by the merge: 1 if k-1 empty, p if occupied
    return 1 - rho_m + p * rho_m


def effective_rates(spec: ModelSpec, site_density) -> EffectiveRates:
    """Mean-field entry/exit rate of every segment and flux of every shortcut.

    In Advanced1 the exit rate of segment 4 uses the upstream source density
    (site k3) inside the bracket, mirroring segment 2's exit rate.
    """
    rho = np.asarray(site_density, dtype=float)
    if rho.size != spec.L:
        raise ValueError(f"need {spec.L} densities, got {rho.size}")
    r = lambda site: float(rho[site - 1])  # noqa: E731
    a, b = spec.alpha, spec.beta
    v = spec.variant

    if v is Variant.PLAIN:
        return EffectiveRates([a], [b], [])

    if v.is_basic or v is Variant.ADVANCED1:
        forks = [(spec.k[0], spec.k[1], spec.q[0], spec.p[0])]
        if v is Variant.ADVANCED1:
            forks.append((spec.k[2], spec.k[3], spec.q[1], spec.p[1]))
        alpha_eff, beta_eff, jsc = [a], [], []
        for k1, k2, q, p in forks:
            r1, r1n, r2m, r2 = r(k1), r(k1 + 1), r(k2 - 1), r(k2)
            br = _bracket(p, r2m)
            if v is Variant.BASIC2:
                be_up = (1 - r1n) + q * r1n * (1 - r2) * br
                ae_mid = r1 * (r2 + (1 - r2) * (1 - q * br))
            else:
                be_up = (1 - r1n) * r2 + (1 - r2) * (1 - r1n) * (1 - q) + q * (1 - r2) * br
                ae_mid = r1 * (r2 + (1 - r2) * (1 - q))
            be_mid = (1 - r2) * ((1 - r1) + q * (1 - p) * r1 + (1 - q) * r1)
            ae_down = r1 * (1 - r2m) * q + r2m * (1 - r1) + r1 * r2m
            beta_eff += [be_up, be_mid]
            alpha_eff += [ae_mid, ae_down]
            jsc.append(q * r1 * (1 - r2) * br)
        beta_eff.append(b)
        return EffectiveRates(alpha_eff, beta_eff, jsc)

    k1, k2, k3 = spec.k
    q1, q2 = spec.q
    p1, p2 = spec.p
    r1, r1n = r(k1), r(k1 + 1)
    r2m, r2 = r(k2 - 1), r(k2)
    r3m, r3 = r(k3 - 1), r(k3)
    g1 = q1 * _bracket(p1, r2m)
    g2 = q2 * _bracket(p2, r3m)
    be1 = ((1 - r1n) * r2 * r3
           + (1 - r2) * r1n * r3 * g1
           + (1 - r3) * r1n * r2 * g2
           + (1 - r1n) * (1 - r2) * r3 * (1 - q1 + g1)
           + (1 - r1n) * (1 - r3) * r2 * (1 - q2 + g2)
           + r1n * (1 - r2) * (1 - r3) * (g1 + g2)
           + (1 - r1n) * (1 - r2) * (1 - r3) * (1 - q1 - q2 + g1 + g2))
    ae2 = r1 * (r2 * r3 + (1 - r2) * r3 * (1 - q1) + (1 - r3) * r2 * (1 - q2)
                + (1 - r2) * (1 - r3) * (1 - q1 - q2))
    be2 = (1 - r2) * ((1 - r1) + q1 * (1 - p1) * r1 + (1 - q1) * r1)
    ae3 = r1 * (1 - r2m) * q1 + r2m * (1 - r1) + r1 * r2m
    be3 = (1 - r3) * ((1 - r1) + q2 * (1 - p2) * r1 + (1 - q2) * r1)
    ae4 = r1 * (1 - r3m) * q2 + r3m * (1 - r1) + r1 * r3m
    jsc = [g1 * r1 * (1 - r2), g2 * r1 * (1 - r3)]
    return EffectiveRates([a, ae2, ae3, ae4], [be1, be2, be3, b], jsc)


@dataclass
class SegmentStats:
    segment: int
    first: int
    last: int
    bulk_density: float
    density_stderr: float
    trim: int
    trim_reduced: bool = False

    def to_dict(self) -> dict:
        return {
            "segment": self.segment,
            "first": self.first,
            "last": self.last,
            "bulk_density": self.bulk_density,
            "density_stderr": self.density_stderr,
            "trim": self.trim,
            "trim_reduced": self.trim_reduced,
        }


def trim_width(length: int) -> tuple[int, bool]:
    """Sites dropped at each segment end, and whether the trim had to be cut to 0."""
    trim = min(MAX_TRIM, length // 4)
    if length < 2 * trim + 1:
        return 0, True
    return trim, False


def segment_stats(spec: ModelSpec, report) -> list[SegmentStats]:
    """Boundary-trimmed bulk density per segment.

    ``report`` needs ``site_density``; if it also carries ``batch_density``
    the standard error is the batch-means error of the trimmed mean,
    otherwise it is 0 (exact solutions).
    """
    rho = np.asarray(report.site_density)
    if rho.size != spec.L:
        raise ValueError("report does not match spec")
    batches = getattr(report, "batch_density", None)
    out = []
    for n, (first, last) in enumerate(spec.segments, start=1):
        trim, reduced = trim_width(last - first + 1)
        lo, hi = first - 1 + trim, last - trim
        bulk = float(rho[lo:hi].mean())
        if batches is not None:
            per_batch = np.asarray(batches)[:, lo:hi].mean(axis=1)
            se = float(per_batch.std(ddof=1) / math.sqrt(per_batch.size))
        else:
            se = 0.0
        out.append(SegmentStats(n, first, last, bulk, se, trim, reduced))
    return out


def segment_fluxes(spec: ModelSpec, report) -> list[float]:
    """Current carried by each segment.

    The first and last segments use the injection and extraction rates;
    interior segments average the bond fluxes inside the segment.
    """
    segs = spec.segments
    out = []
    for n, (first, last) in enumerate(segs):
        if n == 0:
            out.append(float(report.J_in))
        elif n == len(segs) - 1:
            out.append(float(report.J_out))
        else:
            bonds = np.asarray(report.J_bond)[first - 1: last - 1] if last > first \
                else np.asarray(report.J_bond)[first - 2: first - 1]
            out.append(float(bonds.mean()))
    return out


def classify_segment(stats: SegmentStats | float, J: float,
                     eps_rho: float = EPS_RHO, eps_J: float = EPS_J) -> PhaseLabel:
    bulk = stats.bulk_density if isinstance(stats, SegmentStats) else float(stats)
    if bulk < 0.5 - eps_rho:
        return PhaseLabel.LOW_DENSITY
    if bulk > 0.5 + eps_rho:
        return PhaseLabel.HIGH_DENSITY
    if abs(J - 0.25) <= eps_J:
        return PhaseLabel.MAXIMAL_CURRENT
    return PhaseLabel.INDETERMINATE


def phase_tuple(spec: ModelSpec, report, eps_rho: float = EPS_RHO,
                eps_J: float = EPS_J) -> tuple[PhaseLabel, ...]:
    stats = segment_stats(spec, report)
    fluxes = segment_fluxes(spec, report)
    return tuple(classify_segment(s, J, eps_rho, eps_J) for s, J in zip(stats, fluxes))


def tuple_string(labels) -> str:
    return "(" + ",".join(lab.letter for lab in labels) + ")"


def conservation_residuals(spec: ModelSpec, report) -> dict[str, float]:
    """Relative mismatch of the junction flux balances, keyed by balance name.

    Raises :class:`DegenerateError` when nothing is injected.
    """
    J_in = float(report.J_in)
    if J_in <= 0:
        raise DegenerateError("J_in = 0: residuals undefined")
    bond = lambda i: float(report.J_bond[i - 1])  # noqa: E731
    sc = [float(x) for x in report.J_sc]
    k, L, v = spec.k, spec.L, spec.variant
    res: dict[str, float] = {}

    def put(name, value):
        res[name] = abs(value - J_in) / J_in

    put("J_out", float(report.J_out))
    if v is Variant.PLAIN:
        for i in range(1, L):
            put(f"bond{i}", bond(i))
        return res
    if v.is_basic:
        k1, k2 = k
        put("J2_entry+J_sc", bond(k1) + sc[0])
        put("J2_exit+J_sc", bond(k2 - 1) + sc[0])
        if k2 < L:
            put("J3", bond(k2))
    elif v is Variant.ADVANCED1:
        k1, k2, k3, k4 = k
        put("J2_entry+J_sc1", bond(k1) + sc[0])
        put("J2_exit+J_sc1", bond(k2 - 1) + sc[0])
        put("J3", bond(k2))
        put("J4_entry+J_sc2", bond(k3) + sc[1])
        put("J4_exit+J_sc2", bond(k4 - 1) + sc[1])
        if k4 < L:
            put("J5", bond(k4))
    else:
        k1, k2, k3 = k
        J2a, J2b = bond(k1), bond(k2 - 1)
        J3a, J3b = bond(k2), bond(k3 - 1)
        put("J2_entry+J_sc1+J_sc2", J2a + sc[0] + sc[1])
        put("J3_entry+J_sc2", J3a + sc[1])
        put("J3_exit+J_sc2", J3b + sc[1])
        if k3 < L:
            put("J4", bond(k3))
        # J3 = J2 + J_sc1, relative to J_in like the others
        res["J3-J2-J_sc1"] = abs(J3a - J2b - sc[0]) / J_in
    return res


@dataclass
class Summary:
    """Everything the analysis layer derives from one report."""

    segments: list[SegmentStats]
    fluxes: list[float]
    labels: tuple[PhaseLabel, ...]
    rates: EffectiveRates
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def tuple(self) -> str:
        return tuple_string(self.labels)

    def to_dict(self) -> dict:
        return {
            "segments": [s.to_dict() for s in self.segments],
            "segment_fluxes": self.fluxes,
            "labels": [lab.value for lab in self.labels],
            "phase_tuple": self.tuple,
            "effective_rates": self.rates.to_dict(),
            "residuals": self.residuals,
        }


def summarize(spec: ModelSpec, report, eps_rho: float = EPS_RHO, eps_J: float = EPS_J) -> Summary:
    segs = segment_stats(spec, report)
    fluxes = segment_fluxes(spec, report)
    labels = tuple(classify_segment(s, J, eps_rho, eps_J) for s, J in zip(segs, fluxes))
    try:
        residuals = conservation_residuals(spec, report)
    except DegenerateError:
        residuals = {}
    return Summary(segs, fluxes, labels, effective_rates(spec, report.site_density), residuals)
