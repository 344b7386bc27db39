"""Exact stationary state of the master equation for small lattices.

Configurations are indexed by bitmask: site i is bit (i - 1).  The generator
``Q`` is row-oriented (``Q[s, s']`` is the rate s -> s'), so the stationary
distribution solves ``pi Q = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .model import LatticeState, ModelSpec, MoveKind, transition_rates

L_MAX = 14
L_DENSE = 12
DENSE_TOL = 1e-10
ITER_TOL = 1e-8


class ExactSolverError(RuntimeError):
    pass


class ReducibleChainError(ExactSolverError):
    """alpha = 0 or beta = 0: the empty or the full lattice is absorbing."""


class NonConvergenceError(ExactSolverError):
    pass


# move codes in the enumerated transition list
_INJECT, _EXTRACT, _HOP, _JUMP = 0, 1, 2, 3
_KIND_CODE = {MoveKind.INJECT: _INJECT, MoveKind.EXTRACT: _EXTRACT,
              MoveKind.HOP: _HOP, MoveKind.SHORTCUT_JUMP: _JUMP}


@dataclass
class Transitions:
    """Every (state, move, rate) triple of the chain, as flat arrays."""

    n_states: int
    frm: np.ndarray
    to: np.ndarray
    rate: np.ndarray
    kind: np.ndarray
    src: np.ndarray  # 1-based source site, 0 for Inject
    dst: np.ndarray  # 1-based destination site, 0 for Extract


def enumerate_transitions(spec: ModelSpec, L_max: int = L_MAX) -> Transitions:
    spec.validated()
    L = spec.L
    if L > L_max:
        raise ExactSolverError(f"L={L} exceeds L_max={L_max} for the exact solver")
    frm, to, rate, kind, src, dst = [], [], [], [], [], []
    for mask in range(1 << L):
        s = LatticeState.from_mask(mask, L)
        for move, r in transition_rates(spec, s):
            target = mask
            if move.src is not None:
                target &= ~(1 << (move.src - 1))
            if move.dst is not None:
                target |= 1 << (move.dst - 1)
            frm.append(mask)
            to.append(target)
            rate.append(r)
            kind.append(_KIND_CODE[move.kind])
            src.append(move.src or 0)
            dst.append(move.dst or 0)
    return Transitions(
        n_states=1 << L,
        frm=np.array(frm, np.int64),
        to=np.array(to, np.int64),
        rate=np.array(rate),
        kind=np.array(kind, np.int8),
        src=np.array(src, np.int64),
        dst=np.array(dst, np.int64),
    )


def _generator(tr: Transitions) -> sp.csr_matrix:
    n = tr.n_states
    off = sp.coo_matrix((tr.rate, (tr.frm, tr.to)), shape=(n, n)).tocsr()
    out = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(out)).tocsr()


def build_generator(spec: ModelSpec, L_max: int = L_MAX) -> sp.csr_matrix:
    """Sparse 2^L x 2^L generator; every row sums to zero."""
    return _generator(enumerate_transitions(spec, L_max))


@dataclass
class ExactSolution:
    spec: ModelSpec
    pi: np.ndarray
    site_density: np.ndarray
    J_in: float
    J_out: float
    J_sc: np.ndarray
    J_bond: np.ndarray
    residual: float
    method: str
    iterations: int = 0

    def bond(self, i: int) -> float:
        return float(self.J_bond[i - 1])

    def to_dict(self, with_pi: bool = True) -> dict:
        d = {
            "spec": self.spec.to_dict(),
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "n_states": int(self.pi.size),
            "site_density": self.site_density.tolist(),
            "J_in": self.J_in,
            "J_out": self.J_out,
            "J_sc": self.J_sc.tolist(),
            "J_bond": self.J_bond.tolist(),
        }
        if with_pi:
            d["pi"] = self.pi.tolist()
        return d


def _solve_dense(Q: sp.csr_matrix) -> np.ndarray:
    A = Q.T.toarray()
    A[-1, :] = 1.0
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    lu = scipy.linalg.lu_factor(A)
    return scipy.linalg.lu_solve(lu, b)


def _solve_uniformized(Q: sp.csr_matrix, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Power iteration on P = I + Q / Lambda."""
    n = Q.shape[0]
    lam = 1.05 * float(np.max(-Q.diagonal()))
    PT = (sp.identity(n, format="csr") + Q / lam).T.tocsr()
    QT = Q.T.tocsr()
    pi = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        pi = PT @ pi
        if it % 50 == 0:
            pi /= pi.sum()
            if np.abs(QT @ pi).max() <= tol:
                return pi, it
    raise NonConvergenceError(f"power iteration did not reach {tol:g} in {max_iter} steps")


def solve_stationary(spec: ModelSpec, L_max: int = L_MAX, max_iter: int = 500_000) -> ExactSolution:
    """Stationary distribution with exact densities and fluxes.

    Dense LU for L <= 12, uniformized power iteration above that.
    """
    if spec.alpha <= 0 or spec.beta <= 0:
        raise ReducibleChainError(
            f"chain is reducible for alpha={spec.alpha}, beta={spec.beta} (need both > 0)")
    tr = enumerate_transitions(spec, L_max)
    Q = _generator(tr)
    L = spec.L
    if L <= L_DENSE:
        pi = _solve_dense(Q)
        method, iterations = "dense-lu", 0
    else:
        pi, iterations = _solve_uniformized(Q, ITER_TOL, max_iter)
        method = "uniformization"
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(Q.T @ pi).max())
    tol = DENSE_TOL if method == "dense-lu" else ITER_TOL
    if residual > tol:
        raise NonConvergenceError(f"stationarity residual {residual:.3g} above {tol:g}")

    masks = np.arange(tr.n_states)
    bits = (masks[:, None] >> np.arange(L)[None, :]) & 1
    rho = pi @ bits

    w = pi[tr.frm] * tr.rate
    J_in = float(w[tr.kind == _INJECT].sum())
    J_out = float(w[tr.kind == _EXTRACT].sum())
    hops = tr.kind == _HOP
    J_bond = np.bincount(tr.src[hops] - 1, weights=w[hops], minlength=L - 1)[: L - 1]
    J_sc = np.zeros(len(spec.shortcuts))
    jumps = tr.kind == _JUMP
    for n, (a, b) in enumerate(spec.shortcuts):
        sel = jumps & (tr.src == a) & (tr.dst == b)
        J_sc[n] = w[sel].sum()
    return ExactSolution(spec, pi, rho, J_in, J_out, J_sc, J_bond, residual, method, iterations)
