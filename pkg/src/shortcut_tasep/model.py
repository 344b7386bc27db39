"""Model variants, lattice states and state-dependent transition rules.

Sites are 1-based throughout, so ``k`` values and move endpoints read the
same way as the anchor labels ``k1 .. k4`` of the model definitions.  The
occupancy vector itself is a 0-based numpy array: site ``i`` lives at
``occ[i - 1]``.

The rule tables are continuous-time: a rule "moves with probability r dt"
is an exponential clock of rate ``r``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class Variant(str, enum.Enum):
    PLAIN = "Plain"
    BASIC1 = "Basic1"
    BASIC2 = "Basic2"
    ADVANCED1 = "Advanced1"
    ADVANCED2 = "Advanced2"

    @property
    def n_anchors(self) -> int:
        return {"Plain": 0, "Basic1": 2, "Basic2": 2, "Advanced1": 4, "Advanced2": 3}[self.value]

    @property
    def n_shortcuts(self) -> int:
        return {"Plain": 0, "Basic1": 1, "Basic2": 1, "Advanced1": 2, "Advanced2": 2}[self.value]

    @property
    def is_basic(self) -> bool:
        return self in (Variant.BASIC1, Variant.BASIC2)


class SpecError(ValueError):
    """Raised for a ModelSpec that violates one or more invariants."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant
    L: int
    k: tuple[int, ...]
    alpha: float
    beta: float
    q: tuple[float, ...]
    p: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "k", tuple(int(x) for x in self.k))
        object.__setattr__(self, "q", _as_tuple(self.q))
        object.__setattr__(self, "p", _as_tuple(self.p))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    def validated(self) -> "ModelSpec":
        errors = validate(self)
        if errors:
            raise SpecError(errors)
        return self

    def replace(self, **changes) -> "ModelSpec":
        data = self.to_dict()
        data.update(changes)
        return ModelSpec.from_dict(data)

    @property
    def shortcuts(self) -> tuple[tuple[int, int], ...]:
        """Declared (source, destination) site pairs, one per shortcut."""
        k = self.k
        if self.variant is Variant.PLAIN:
            return ()
        if self.variant.is_basic:
            return ((k[0], k[1]),)
        if self.variant is Variant.ADVANCED1:
            return ((k[0], k[1]), (k[2], k[3]))
        return ((k[0], k[1]), (k[0], k[2]))

    @property
    def special_sources(self) -> tuple[int, ...]:
        """Sites whose outgoing moves follow the rule tables instead of a plain hop."""
        k = self.k
        if self.variant is Variant.PLAIN:
            return ()
        if self.variant.is_basic:
            return (k[0], k[1] - 1)
        if self.variant is Variant.ADVANCED1:
            return (k[0], k[1] - 1, k[2], k[3] - 1)
        return (k[0], k[1] - 1, k[2] - 1)

    @property
    def segments(self) -> tuple[tuple[int, int], ...]:
        """Inclusive (first, last) site ranges of the lattice segments."""
        k, L = self.k, self.L
        if self.variant is Variant.PLAIN:
            return ((1, L),)
        if self.variant.is_basic:
            return ((1, k[0]), (k[0] + 1, k[1] - 1), (k[1], L))
        if self.variant is Variant.ADVANCED1:
            return ((1, k[0]), (k[0] + 1, k[1] - 1), (k[1], k[2]),
                    (k[2] + 1, k[3] - 1), (k[3], L))
        return ((1, k[0]), (k[0] + 1, k[1] - 1), (k[1], k[2] - 1), (k[2], L))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "L": self.L,
            "k": list(self.k),
            "alpha": self.alpha,
            "beta": self.beta,
            "q": list(self.q),
            "p": list(self.p),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(
            variant=Variant(data["variant"]),
            L=int(data["L"]),
            k=tuple(data["k"]),
            alpha=data["alpha"],
            beta=data["beta"],
            q=data["q"],
            p=data["p"],
        )


def _as_tuple(x) -> tuple[float, ...]:
    if np.isscalar(x):
        return (float(x),)
    return tuple(float(v) for v in x)


def plain_tasep(L: int, alpha: float, beta: float) -> "ModelSpec":
    """An open TASEP of length L without shortcuts."""
    return ModelSpec(Variant.PLAIN, L, (), alpha, beta, (), ())


def validate(spec: ModelSpec) -> list[str]:
    """Return every violated ModelSpec invariant; an empty list means valid."""
    errors: list[str] = []
    v, L, k = spec.variant, spec.L, spec.k
    n_par = v.n_shortcuts

    if not isinstance(L, (int, np.integer)) or L < 1:
        errors.append(f"L: must be a positive integer, got {L!r}")
    if not (spec.alpha >= 0):
        errors.append(f"alpha: must be >= 0, got {spec.alpha}")
    if not (spec.beta >= 0):
        errors.append(f"beta: must be >= 0, got {spec.beta}")
    if len(spec.q) != n_par:
        errors.append(f"q: {v.value} takes {n_par} value(s), got {len(spec.q)}")
    if len(spec.p) != n_par:
        errors.append(f"p: {v.value} takes {n_par} value(s), got {len(spec.p)}")
    for name, vals in (("q", spec.q), ("p", spec.p)):
        for i, x in enumerate(vals):
            if not (0.0 <= x <= 1.0):
                errors.append(f"{name}[{i}]: must lie in [0, 1], got {x}")
    if len(k) != v.n_anchors:
        errors.append(f"k: {v.value} takes {v.n_anchors} anchor sites, got {len(k)}")
        return errors

    if v is Variant.PLAIN:
        pass
    elif v.is_basic:
        k1, k2 = k
        if not 1 < k1:
            errors.append(f"k: segment 1 must hold at least 2 sites (need 1 < k1, got k1={k1})")
        if not k1 + 1 < k2 - 1:
            errors.append(
                f"k: segment 2 empty / special sites coincide (need k1+1 < k2-1, got k1={k1}, k2={k2})")
        if not k2 < L:
            errors.append(f"k: segment 3 must hold at least 2 sites (need k2 < L, got k2={k2}, L={L})")
    elif v is Variant.ADVANCED1:
        k1, k2, k3, k4 = k
        if not 1 <= k1:
            errors.append(f"k: segment 1 empty (need k1 >= 1, got {k1})")
        if not k1 + 1 < k2 - 1:
            errors.append(
                f"k: segment 2 empty / special sites coincide (need k1+1 < k2-1, got k1={k1}, k2={k2})")
        if not k2 < k3:
            errors.append(f"k: segment 3 too short / special sites coincide (need k2 < k3, got k2={k2}, k3={k3})")
        if not k3 + 1 < k4 - 1:
            errors.append(
                f"k: segment 4 empty / special sites coincide (need k3+1 < k4-1, got k3={k3}, k4={k4})")
        if not k4 <= L:
            errors.append(f"k: segment 5 empty (need k4 <= L, got k4={k4}, L={L})")
    else:
        k1, k2, k3 = k
        if not 1 <= k1:
            errors.append(f"k: segment 1 empty (need k1 >= 1, got {k1})")
        if not k1 + 1 < k2 - 1:
            errors.append(
                f"k: segment 2 empty / special sites coincide (need k1+1 < k2-1, got k1={k1}, k2={k2})")
        if not k2 < k3 - 1:
            errors.append(
                f"k: segment 3 empty / special sites coincide (need k2 < k3-1, got k2={k2}, k3={k3})")
        if not k3 <= L:
            errors.append(f"k: segment 4 empty (need k3 <= L, got k3={k3}, L={L})")
        if len(spec.q) == 2 and spec.q[0] + spec.q[1] > 1.0:
            errors.append(f"q: q1+q2 > 1 (got {spec.q[0]} + {spec.q[1]})")
    return errors


class LatticeState:
    """Immutable occupancy vector of L sites with hard-core exclusion."""

    __slots__ = ("_occ",)

    def __init__(self, occ: Sequence[int] | np.ndarray):
        arr = np.array(occ, dtype=np.int8)
        if arr.ndim != 1:
            raise ValueError("occupancy must be one-dimensional")
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError("occupancies must be 0 or 1")
        arr.setflags(write=False)
        self._occ = arr

    @classmethod
    def empty(cls, L: int) -> "LatticeState":
        return cls(np.zeros(L, dtype=np.int8))

    @classmethod
    def full(cls, L: int) -> "LatticeState":
        return cls(np.ones(L, dtype=np.int8))

    @classmethod
    def from_mask(cls, mask: int, L: int) -> "LatticeState":
        """Site i maps to bit (i - 1) of ``mask``."""
        return cls([(mask >> i) & 1 for i in range(L)])

    @property
    def occ(self) -> np.ndarray:
        return self._occ

    @property
    def L(self) -> int:
        return int(self._occ.size)

    @property
    def mask(self) -> int:
        return int(sum(int(b) << i for i, b in enumerate(self._occ)))

    def __getitem__(self, site: int) -> int:
        """Occupancy of 1-based ``site``."""
        if not 1 <= site <= self.L:
            raise IndexError(f"site {site} outside 1..{self.L}")
        return int(self._occ[site - 1])

    def __len__(self):
        return self.L

    def __eq__(self, other):
        return isinstance(other, LatticeState) and np.array_equal(self._occ, other._occ)

    def __hash__(self):
        return hash(self._occ.tobytes())

    def __repr__(self):
        return f"LatticeState('{''.join(map(str, self._occ))}')"

    def count(self) -> int:
        return int(self._occ.sum())


class MoveKind(str, enum.Enum):
    INJECT = "Inject"
    EXTRACT = "Extract"
    HOP = "Hop"
    SHORTCUT_JUMP = "ShortcutJump"


@dataclass(frozen=True, order=True)
class Move:
    kind: MoveKind
    src: int | None = None
    dst: int | None = None

    def __str__(self):
        if self.kind is MoveKind.INJECT:
            return "Inject"
        if self.kind is MoveKind.EXTRACT:
            return "Extract"
        return f"{self.kind.value} {self.src}->{self.dst}"


INJECT = Move(MoveKind.INJECT, None, 1)


def hop(i: int) -> Move:
    return Move(MoveKind.HOP, i, i + 1)


def jump(i: int, j: int) -> Move:
    return Move(MoveKind.SHORTCUT_JUMP, i, j)


def extract(L: int) -> Move:
    return Move(MoveKind.EXTRACT, L, None)


@dataclass(frozen=True)
class TransitionTable:
    entries: tuple[tuple[Move, float], ...] = field(default_factory=tuple)

    def __iter__(self) -> Iterator[tuple[Move, float]]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def as_dict(self) -> dict[Move, float]:
        return dict(self.entries)

    @property
    def total_rate(self) -> float:
        return float(sum(r for _, r in self.entries))

    def rate(self, move: Move) -> float:
        return self.as_dict().get(move, 0.0)


def _fork_moves(occ, k1, k2, q, p, retain_hop):
    """Moves out of shortcut source k1 and merge source k2-1 for one shortcut.

    ``retain_hop`` selects the variant where a particle that finds the merge
    contested keeps the ordinary hop at rate (1 - q p) instead of (1 - q).
    """
    out = []
    if occ[k1 - 1]:
        e1 = not occ[k1]                 # site k1+1 empty
        e2 = not occ[k2 - 1]             # site k2 empty
        w = 1.0 if not occ[k2 - 2] else p
        if e1 and e2:
            out.append((hop(k1), 1.0 - q * w if retain_hop else 1.0 - q))
        elif e1:
            out.append((hop(k1), 1.0))
        if e2:
            out.append((jump(k1, k2), q * w))
    m = k2 - 1
    if occ[m - 1] and not occ[m]:
        out.append((hop(m), 1.0 if not occ[k1 - 1] else 1.0 - p * q))
    return out


def _double_fork_moves(occ, k1, k2, k3, q1, q2, p1, p2):
    """Moves out of the shared source k1 and the merge sources k2-1, k3-1."""
    out = []
    if occ[k1 - 1]:
        e1 = not occ[k1]
        e2 = not occ[k2 - 1]
        e3 = not occ[k3 - 1]
        w1 = 1.0 if not occ[k2 - 2] else p1
        w2 = 1.0 if not occ[k3 - 2] else p2
        if e1:
            out.append((hop(k1), 1.0 - (q1 if e2 else 0.0) - (q2 if e3 else 0.0)))
        if e2:
            out.append((jump(k1, k2), q1 * w1))
        if e3:
            out.append((jump(k1, k3), q2 * w2))
    for m, pq in ((k2 - 1, p1 * q1), (k3 - 1, p2 * q2)):
        if occ[m - 1] and not occ[m]:
            out.append((hop(m), 1.0 if not occ[k1 - 1] else 1.0 - pq))
    return out


def transition_rates(spec: ModelSpec, s: LatticeState) -> TransitionTable:
    """Enabled moves of state ``s`` with their rates; zero-rate moves are dropped."""
    L = spec.L
    if s.L != L:
        raise ValueError(f"state has {s.L} sites, spec expects L={L}")
    occ = s.occ
    entries: list[tuple[Move, float]] = []
    if not occ[0] and spec.alpha > 0:
        entries.append((INJECT, spec.alpha))

    special = set(spec.special_sources)
    for i in range(1, L):
        if i not in special and occ[i - 1] and not occ[i]:
            entries.append((hop(i), 1.0))

    k, q, p = spec.k, spec.q, spec.p
    v = spec.variant
    if v is Variant.PLAIN:
        pass
    elif v.is_basic:
        entries += _fork_moves(occ, k[0], k[1], q[0], p[0], v is Variant.BASIC2)
    elif v is Variant.ADVANCED1:
        entries += _fork_moves(occ, k[0], k[1], q[0], p[0], False)
        entries += _fork_moves(occ, k[2], k[3], q[1], p[1], False)
    else:
        entries += _double_fork_moves(occ, k[0], k[1], k[2], q[0], q[1], p[0], p[1])

    if occ[L - 1] and spec.beta > 0:
        entries.append((extract(L), spec.beta))
    return TransitionTable(tuple((m, float(r)) for m, r in entries if r > 0))


def apply(s: LatticeState, m: Move) -> LatticeState:
    """Execute an enabled move and return the new state."""
    occ = s.occ.copy()
    L = s.L
    if m.kind is MoveKind.INJECT:
        if occ[0]:
            raise ValueError("Inject not enabled: site 1 occupied")
        occ[0] = 1
    elif m.kind is MoveKind.EXTRACT:
        if m.src != L or not occ[L - 1]:
            raise ValueError(f"Extract not enabled: site {L} empty")
        occ[L - 1] = 0
    else:
        i, j = m.src, m.dst
        if m.kind is MoveKind.HOP and j != i + 1:
            raise ValueError(f"Hop must go to the next site, got {i}->{j}")
        if not (1 <= i <= L and 1 <= j <= L):
            raise ValueError(f"move {m} leaves the lattice")
        if not occ[i - 1] or occ[j - 1]:
            raise ValueError(f"move {m} not enabled: need site {i} occupied and site {j} empty")
        occ[i - 1] = 0
        occ[j - 1] = 1
    return LatticeState(occ)
