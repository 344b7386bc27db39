"""Stationary-state simulation by the Gillespie direct method.

``run`` drives the compiled kernel in :mod:`shortcut_tasep._kernel`;
``gillespie_step`` is the slow reference step built directly on
:func:`shortcut_tasep.model.transition_rates`.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .model import (
    LatticeState,
    ModelSpec,
    Move,
    Variant,
    apply,
    transition_rates,
)

log = logging.getLogger(__name__)

N_BATCHES = 20

_VARIANT_CODE = {
    Variant.PLAIN: _kernel.PLAIN,
    Variant.BASIC1: _kernel.BASIC1,
    Variant.BASIC2: _kernel.BASIC2,
    Variant.ADVANCED1: _kernel.ADVANCED1,
    Variant.ADVANCED2: _kernel.ADVANCED2,
}


class AbsorbingStateError(RuntimeError):
    """No move is enabled: the lattice is empty and alpha = 0."""


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator for run ``stream`` of a sweep seeded with ``seed``.

    The stream index enters through ``SeedSequence.spawn_key``, which hashes
    it together with the seed, so streams of one sweep are independent and any
    single run can be regenerated on its own.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    t_burn: float = 1e6
    t_meas: float = 1e7
    init: str = "Empty"
    rho0: float = 0.5
    stream: int = 0
    n_batches: int = N_BATCHES

    def validate(self) -> list[str]:
        errors = []
        if not self.t_burn >= 0:
            errors.append(f"t_burn: must be >= 0, got {self.t_burn}")
        if not self.t_meas > 0:
            errors.append(f"t_meas: must be > 0, got {self.t_meas}")
        if self.init not in ("Empty", "Full", "Uniform"):
            errors.append(f"init: must be Empty, Full or Uniform, got {self.init!r}")
        if not 0.0 <= self.rho0 <= 1.0:
            errors.append(f"rho0: must lie in [0, 1], got {self.rho0}")
        if not 0 <= int(self.seed) < 2**64:
            errors.append(f"seed: must be an unsigned 64-bit integer, got {self.seed}")
        if self.n_batches < 2:
            errors.append(f"n_batches: need at least 2, got {self.n_batches}")
        return errors

    def initial_state(self, L: int, rng: np.random.Generator) -> LatticeState:
        if self.init == "Empty":
            return LatticeState.empty(L)
        if self.init == "Full":
            return LatticeState.full(L)
        return LatticeState((rng.random(L) < self.rho0).astype(np.int8))


def _batch_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and batch-means standard error along axis 0."""
    n = x.shape[0]
    return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(n)


@dataclass
class StationaryReport:
    """Time averages over the measurement window of one trajectory.

    ``J_bond[i - 1]`` is the crossing rate of bond i -> i+1, whether the hop
    is an ordinary one or comes out of a junction rule.  ``batch_density``
    keeps the per-batch site averages so derived quantities (segment means)
    can get batch-means errors too.
    """

    spec: ModelSpec
    config: SimConfig
    site_density: np.ndarray
    site_stderr: np.ndarray
    J_in: float
    J_in_stderr: float
    J_out: float
    J_out_stderr: float
    J_bond: np.ndarray
    J_bond_stderr: np.ndarray
    J_sc: np.ndarray
    J_sc_stderr: np.ndarray
    total_time: float
    event_count: int
    batch_density: np.ndarray = field(repr=False)
    initial_count: int = 0
    final_count: int = 0
    net_injections: int = 0
    final_state: LatticeState | None = field(default=None, repr=False)
    wall_time: float = 0.0

    def bond(self, i: int) -> float:
        """Flux across bond i -> i+1 (1-based)."""
        return float(self.J_bond[i - 1])

    def bond_stderr(self, i: int) -> float:
        return float(self.J_bond_stderr[i - 1])

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "seed": int(self.config.seed),
            "stream": int(self.config.stream),
            "t_burn": self.config.t_burn,
            "t_meas": self.config.t_meas,
            "init": self.config.init,
            "J_in": self.J_in,
            "J_in_stderr": self.J_in_stderr,
            "J_out": self.J_out,
            "J_out_stderr": self.J_out_stderr,
            "J_sc": self.J_sc.tolist(),
            "J_sc_stderr": self.J_sc_stderr.tolist(),
            "J_bond": self.J_bond.tolist(),
            "J_bond_stderr": self.J_bond_stderr.tolist(),
            "site_density": self.site_density.tolist(),
            "site_stderr": self.site_stderr.tolist(),
            "total_time": self.total_time,
            "event_count": self.event_count,
        }


def gillespie_step(spec: ModelSpec, s: LatticeState, rng: np.random.Generator
                   ) -> tuple[Move, float, LatticeState]:
    """One exact step: exponential dwell at the total rate, move picked by rate."""
    table = transition_rates(spec, s)
    if not len(table):
        raise AbsorbingStateError("empty transition table: absorbing state")
    rates = np.array([r for _, r in table])
    total = rates.sum()
    dwell = rng.standard_exponential() / total
    u = rng.random() * total
    j = min(int(np.searchsorted(np.cumsum(rates), u, side="right")), len(rates) - 1)
    move = table.entries[j][0]
    return move, float(dwell), apply(s, move)


class KernelArgs:
    """Array form of a ModelSpec for the compiled kernel."""

    def __init__(self, spec: ModelSpec):
        L = spec.L
        self.variant = _VARIANT_CODE[spec.variant]
        self.L = L
        self.k = np.zeros(4, np.int64)
        self.k[: len(spec.k)] = spec.k
        self.q = np.zeros(2)
        self.q[: len(spec.q)] = spec.q
        self.p = np.zeros(2)
        self.p[: len(spec.p)] = spec.p
        self.alpha = spec.alpha
        self.beta = spec.beta

        self.ordinary = np.ones(L, np.bool_)
        self.ordinary[L - 1] = False
        for s in spec.special_sources:
            self.ordinary[s - 1] = False

        self.watch = np.zeros(L, np.bool_)
        self.watch[0] = True
        self.watch[L - 1] = True
        for a, b in spec.shortcuts:
            for site in (a, a + 1, b - 1, b):
                self.watch[site - 1] = True

        self.sc_src = np.array([a - 1 for a, _ in spec.shortcuts], np.int64)
        self.sc_dst = np.array([b - 1 for _, b in spec.shortcuts], np.int64)

    def special_moves(self, occ: np.ndarray):
        src = np.empty(_kernel.MAX_SPECIAL, np.int64)
        dst = np.empty(_kernel.MAX_SPECIAL, np.int64)
        rate = np.empty(_kernel.MAX_SPECIAL)
        n = _kernel.special_moves(self.variant, self.L, self.k, self.q, self.p,
                                  self.alpha, self.beta, np.asarray(occ, np.int8),
                                  src, dst, rate)
        return src[:n].copy(), dst[:n].copy(), rate[:n].copy()


def _simulate(spec: ModelSpec, cfg: SimConfig, occ: np.ndarray, rng,
              max_events: int = -1, n_trace: int = 0):
    ka = KernelArgs(spec)
    nb = cfg.n_batches
    L = spec.L
    out = dict(
        dens_acc=np.zeros((nb, L)),
        n_in=np.zeros(nb, np.int64),
        n_out=np.zeros(nb, np.int64),
        bond_cnt=np.zeros((nb, max(L - 1, 1)), np.int64),
        sc_cnt=np.zeros((nb, max(len(ka.sc_src), 1)), np.int64),
        trace_src=np.zeros(n_trace, np.int64),
        trace_dst=np.zeros(n_trace, np.int64),
        trace_total=np.zeros(n_trace),
    )
    events, net, t_end = _kernel.simulate(
        ka.variant, L, ka.k, ka.q, ka.p, ka.alpha, ka.beta, ka.ordinary, ka.watch,
        ka.sc_src, ka.sc_dst, occ, rng, float(cfg.t_burn), float(cfg.t_meas), nb,
        int(max_events), out["dens_acc"], out["n_in"], out["n_out"], out["bond_cnt"],
        out["sc_cnt"], out["trace_src"], out["trace_dst"], out["trace_total"])
    return int(events), int(net), float(t_end), out


def run(spec: ModelSpec, cfg: SimConfig) -> StationaryReport:
    """Simulate from ``cfg.init`` for ``t_burn``, then measure for ``t_meas``.

    Raises :class:`~shortcut_tasep.model.SpecError` (or ``ValueError`` for a
    bad config) before any simulation happens.
    """
    spec.validated()
    errors = cfg.validate()
    if errors:
        raise ValueError("; ".join(errors))

    rng = make_rng(cfg.seed, cfg.stream)
    init = cfg.initial_state(spec.L, rng)
    occ = init.occ.copy()
    t0 = time.perf_counter()
    events, net, _, acc = _simulate(spec, cfg, occ, rng)
    wall = time.perf_counter() - t0
    log.info("%s L=%d: %d events in %.1fs", spec.variant.value, spec.L, events, wall)

    t_b = cfg.t_meas / cfg.n_batches
    batch_density = acc["dens_acc"] / t_b
    rho, rho_se = _batch_stats(batch_density)
    j_in, j_in_se = _batch_stats(acc["n_in"] / t_b)
    j_out, j_out_se = _batch_stats(acc["n_out"] / t_b)
    j_bond, j_bond_se = _batch_stats(acc["bond_cnt"][:, : spec.L - 1] / t_b)
    n_sc = len(spec.shortcuts)
    j_sc, j_sc_se = _batch_stats(acc["sc_cnt"][:, :n_sc] / t_b)

    final = LatticeState(occ)
    return StationaryReport(
        spec=spec,
        config=cfg,
        site_density=rho,
        site_stderr=rho_se,
        J_in=float(j_in),
        J_in_stderr=float(j_in_se),
        J_out=float(j_out),
        J_out_stderr=float(j_out_se),
        J_bond=j_bond,
        J_bond_stderr=j_bond_se,
        J_sc=j_sc,
        J_sc_stderr=j_sc_se,
        total_time=float(cfg.t_meas),
        event_count=events,
        batch_density=batch_density,
        initial_count=init.count(),
        final_count=final.count(),
        net_injections=net,
        final_state=final,
        wall_time=wall,
    )
