"""Distributions over rankings of a candidate pool.

Conventions used throughout the package:

* candidates are identified by their 0-based index into the pool;
* a permutation is a tuple ``perm`` where ``perm[pos]`` is the candidate
  shown at ranked position ``pos`` (0 = top of the list);
* window sizes (``k``, ``j*``) are counts, so a window of size 2 covers
  positions 0 and 1.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import CapacityError, DegenerateError, InvalidInputError

ENUM_CAP = 8
PROB_TOL = 1e-9

Permutation = tuple


@dataclass(frozen=True)
class CandidatePool:
    """Candidate values, free probabilities and busy penalties.

    Values are sorted nonincreasing and higher-valued candidates must be
    (weakly) less likely to be free.
    """

    values: tuple
    free_probs: tuple
    busy_penalties: tuple

    def __post_init__(self):
        for name in ("values", "free_probs", "busy_penalties"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        v, p, g = self.values, self.free_probs, self.busy_penalties
        if not (len(v) == len(p) == len(g)):
            raise InvalidInputError("values, free_probs and busy_penalties differ in length")
        if len(v) < 2:
            raise InvalidInputError("a pool needs at least two candidates")
        if any(x < 0 or not math.isfinite(x) for x in v):
            raise InvalidInputError("values must be finite and nonnegative")
        if any(not 0.0 < x < 1.0 for x in p):
            raise InvalidInputError("free probabilities must lie strictly inside (0, 1)")
        if any(x < 1.0 for x in g):
            raise InvalidInputError("busy penalties must be >= 1")
        if any(v[i] < v[i + 1] for i in range(len(v) - 1)):
            raise InvalidInputError("values must be sorted nonincreasing")
        for i in range(len(v)):
            for j in range(len(v)):
                if v[i] > v[j] and p[i] > p[j]:
                    raise InvalidInputError(
                        f"candidate {i} is worth more than {j} but more likely to be free"
                    )

    @classmethod
    def superstar(cls, v1, v2, n, p1, p2, gamma1=1.0, gamma2=None):
        gamma2 = gamma1 if gamma2 is None else gamma2
        return cls(
            values=(v1,) + (v2,) * (n - 1),
            free_probs=(p1,) + (p2,) * (n - 1),
            busy_penalties=(gamma1,) + (gamma2,) * (n - 1),
        )

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def is_superstar(self) -> bool:
        v, p = self.values, self.free_probs
        return v[0] > v[1] and len(set(v[1:])) == 1 and len(set(p[1:])) == 1

    @property
    def free_busy_ratio(self) -> float:
        """Odds ratio r = (p2/(1-p2)) / (p1/(1-p1)) of a superstar pool."""
        p1, p2 = self.free_probs[0], self.free_probs[1]
        return (p2 / (1 - p2)) / (p1 / (1 - p1))

    def arrays(self):
        return (np.asarray(self.values), np.asarray(self.free_probs),
                np.asarray(self.busy_penalties))


# --------------------------------------------------------------------------
# model specifications


@dataclass(frozen=True)
class PlackettLuce:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidInputError("beta must be positive")


@dataclass(frozen=True)
class GaussianRUM:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")


@dataclass(frozen=True)
class Mallows:
    phi: float

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise InvalidInputError("phi must lie strictly inside (0, 1)")


@dataclass(frozen=True, eq=False)
class Explicit:
    table: "PermutationTable"


ModelSpec = Union[PlackettLuce, GaussianRUM, Mallows, Explicit]


# --------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class SuperstarDistribution:
    """``index_probs[i]``: probability the high-value candidate is ranked at position i."""

    index_probs: tuple

    def __post_init__(self):
        probs = tuple(float(x) for x in self.index_probs)
        object.__setattr__(self, "index_probs", probs)
        if len(probs) < 2:
            raise InvalidInputError("need at least two positions")
        if any(x < 0 for x in probs):
            raise InvalidInputError("negative probability")
        if abs(sum(probs) - 1.0) > PROB_TOL:
            raise InvalidInputError(f"index probabilities sum to {sum(probs)!r}, not 1")

    @property
    def n(self) -> int:
        return len(self.index_probs)

    @property
    def is_nonincreasing(self) -> bool:
        p = self.index_probs
        return all(p[i] >= p[i + 1] - PROB_TOL for i in range(len(p) - 1))

    def prefix_mass(self, k: int) -> float:
        """Probability the high-value candidate sits in the top ``k`` positions."""
        return float(sum(self.index_probs[:k]))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.index_probs)


@dataclass(frozen=True, eq=False)
class PermutationTable:
    """Explicit probability table over permutations of ``range(n)``.

    ``stderr`` is populated for empirically estimated tables.
    """

    entries: Mapping
    stderr: Mapping | None = None

    def __post_init__(self):
        entries = {tuple(int(c) for c in perm): float(pr) for perm, pr in self.entries.items()}
        if not entries:
            raise InvalidInputError("empty permutation table")
        n = len(next(iter(entries)))
        for perm, pr in entries.items():
            if len(perm) != n or sorted(perm) != list(range(n)):
                raise InvalidInputError(f"{perm} is not a permutation of range({n})")
            if pr < 0:
                raise InvalidInputError("negative probability")
        if abs(sum(entries.values()) - 1.0) > PROB_TOL:
            raise InvalidInputError(f"table sums to {sum(entries.values())!r}, not 1")
        object.__setattr__(self, "entries", entries)
        if self.stderr is not None:
            object.__setattr__(
                self, "stderr", {tuple(int(c) for c in k): float(v) for k, v in self.stderr.items()}
            )

    @property
    def n(self) -> int:
        return len(next(iter(self.entries)))

    def prob(self, perm) -> float:
        return self.entries.get(tuple(perm), 0.0)

    def max_stderr(self) -> float:
        return max(self.stderr.values()) if self.stderr else 0.0

    @cached_property
    def support(self):
        """(perms, probs) arrays over cells with nonzero mass."""
        items = [(perm, pr) for perm, pr in self.entries.items() if pr > 0]
        perms = np.array([perm for perm, _ in items], dtype=np.int64)
        probs = np.array([pr for _, pr in items])
        return perms, probs

    def expected_position_values(self, pool: CandidatePool) -> np.ndarray:
        perms, probs = self.support
        return probs @ np.asarray(pool.values)[perms]

    def top_k_inclusion(self) -> np.ndarray:
        """``out[c, k-1]``: probability candidate c is among the top k positions."""
        perms, probs = self.support
        n = self.n
        out = np.zeros((n, n))
        for pos in range(n):
            np.add.at(out[:, pos], perms[:, pos], probs)
        return np.cumsum(out, axis=1)

    def to_json(self) -> str:
        rows = [{"perm": list(perm), "prob": pr} for perm, pr in sorted(self.entries.items())]
        if self.stderr:
            for row in rows:
                row["stderr"] = self.stderr.get(tuple(row["perm"]), 0.0)
        return json.dumps({"n": self.n, "entries": rows})

    @classmethod
    def from_json(cls, text: str) -> "PermutationTable":
        data = json.loads(text)
        entries = {tuple(r["perm"]): r["prob"] for r in data["entries"]}
        stderr = None
        if any("stderr" in r for r in data["entries"]):
            stderr = {tuple(r["perm"]): r.get("stderr", 0.0) for r in data["entries"]}
        return cls(entries, stderr)


RankingDistribution = Union[SuperstarDistribution, PermutationTable]


def _check_cap(n: int):
    if n > ENUM_CAP:
        raise CapacityError(f"exact tables are limited to n <= {ENUM_CAP}, got n = {n}")


def _check_perm(perm, n: int) -> tuple:
    perm = tuple(int(c) for c in perm)
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise InvalidInputError(f"{perm} is not a permutation of range({n})")
    return perm


# --------------------------------------------------------------------------
# Plackett-Luce


def plackett_luce_prob(pool: CandidatePool, beta: float, perm: Sequence[int]) -> float:
    """Probability of observing ``perm`` when Gumbel(0, beta) noise is added to values."""
    perm = _check_perm(perm, pool.n)
    if not beta > 0:
        raise InvalidInputError("beta must be positive")
    v = np.asarray(pool.values)[list(perm)]
    w = np.exp((v - v.max()) / beta)
    tails = np.cumsum(w[::-1])[::-1]
    return float(np.prod(w / tails))


def plackett_luce_table(pool: CandidatePool, beta: float) -> PermutationTable:
    _check_cap(pool.n)
    perms = list(itertools.permutations(range(pool.n)))
    v = np.asarray(pool.values)[np.array(perms)]
    w = np.exp((v - v.max()) / beta)
    tails = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    probs = np.prod(w / tails, axis=1)
    probs = probs / probs.sum()
    return PermutationTable(dict(zip(perms, probs)))


def superstar_index_probs(v1: float, v2: float, n: int, beta: float) -> SuperstarDistribution:
    """Closed-form position distribution of the single high-value candidate.

    Computed with ``y = exp(-(v1 - v2)/beta)`` so tiny ``beta`` does not overflow.
    """
    if not v1 > v2:
        raise InvalidInputError("superstar setting needs v1 > v2")
    if n < 2 or not beta > 0:
        raise InvalidInputError("need n >= 2 and beta > 0")
    y = math.exp(-(v1 - v2) / beta)
    probs = [1.0 / (1.0 + (n - 1) * y)]
    for k in range(1, n):
        # 1 / (1 + (e^{d/b} - 1)/(n-k)) rewritten in terms of y
        probs.append(probs[-1] * (n - k) * y / (1.0 + (n - k - 1) * y))
    total = sum(probs)
    return SuperstarDistribution(tuple(p / total for p in probs))


def superstar_ratio(dist: SuperstarDistribution, i: int, j: int) -> float:
    """P[high value at position i] / P[high value at position j] for i < j."""
    if not 0 <= i < j < dist.n:
        raise InvalidInputError("need 0 <= i < j < n")
    if dist.index_probs[j] == 0:
        raise DegenerateError(f"position {j} has zero probability")
    return dist.index_probs[i] / dist.index_probs[j]


def plackett_luce_superstar_ratio(v1, v2, n, beta, i, j) -> float:
    """Product form of the position ratio for Gumbel noise (positions 0-based)."""
    x = math.exp((v1 - v2) / beta)
    return math.prod(1.0 + (x - 1.0) / (n - k) for k in range(i + 1, j + 1))


# --------------------------------------------------------------------------
# Mallows / Gaussian RUM


def inversion_count(perm: Sequence[int], values: Sequence[float]) -> int:
    """Pairs shown in the wrong order; ties never count as inversions."""
    vs = [values[c] for c in perm]
    return sum(1 for a in range(len(vs)) for b in range(a + 1, len(vs)) if vs[a] < vs[b])


def mallows_table(pool: CandidatePool, phi: float) -> PermutationTable:
    _check_cap(pool.n)
    if not 0.0 < phi < 1.0:
        raise InvalidInputError("phi must lie strictly inside (0, 1)")
    perms = list(itertools.permutations(range(pool.n)))
    weights = np.array([phi ** inversion_count(p, pool.values) for p in perms])
    return PermutationTable(dict(zip(perms, weights / weights.sum())))


def _empirical_table(rankings: np.ndarray) -> PermutationTable:
    uniq, counts = np.unique(rankings, axis=0, return_counts=True)
    total = counts.sum()
    freqs = counts / total
    entries = {tuple(row): f for row, f in zip(uniq.tolist(), freqs)}
    stderr = {tuple(row): math.sqrt(f * (1 - f) / total) for row, f in zip(uniq.tolist(), freqs)}
    return PermutationTable(entries, stderr)


def gaussian_rum_table(pool: CandidatePool, sigma: float, samples: int, seed: int) -> PermutationTable:
    """Empirical permutation frequencies under Normal(0, sigma) utility noise."""
    _check_cap(pool.n)
    if samples <= 0:
        raise InvalidInputError("samples must be positive")
    rng = np.random.default_rng(seed)
    return _empirical_table(sample_rankings(GaussianRUM(sigma), pool, samples, rng))


# --------------------------------------------------------------------------
# sampling


@lru_cache(maxsize=64)
def _mallows_cached(pool: CandidatePool, phi: float) -> PermutationTable:
    return mallows_table(pool, phi)


def sample_rankings(spec: ModelSpec, pool: CandidatePool, size: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` rankings; returns an int array of shape (size, n)."""
    v = np.asarray(pool.values)
    if isinstance(spec, (PlackettLuce, GaussianRUM)):
        if isinstance(spec, PlackettLuce):
            noise = rng.gumbel(0.0, spec.beta, size=(size, pool.n))
        else:
            noise = rng.normal(0.0, spec.sigma, size=(size, pool.n))
        return np.argsort(-(v + noise), axis=1, kind="stable")
    if isinstance(spec, Mallows):
        table = _mallows_cached(pool, spec.phi)
    elif isinstance(spec, Explicit):
        table = spec.table
    else:
        raise InvalidInputError(f"unknown model spec {spec!r}")
    perms, probs = table.support
    idx = rng.choice(len(probs), size=size, p=probs / probs.sum())
    return perms[idx]


def sample_ranking(spec: ModelSpec, pool: CandidatePool, seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    return tuple(int(c) for c in sample_rankings(spec, pool, 1, rng)[0])


def model_table(spec: ModelSpec, pool: CandidatePool) -> PermutationTable:
    """Exact table for the models that have one."""
    if isinstance(spec, PlackettLuce):
        return plackett_luce_table(pool, spec.beta)
    if isinstance(spec, Mallows):
        return mallows_table(pool, spec.phi)
    if isinstance(spec, Explicit):
        return spec.table
    raise InvalidInputError("Gaussian RUM has no exact table; use gaussian_rum_table")


def permutation_prob(spec: ModelSpec, pool: CandidatePool, perm: Sequence[int]) -> float:
    if isinstance(spec, PlackettLuce):
        return plackett_luce_prob(pool, spec.beta, perm)
    if isinstance(spec, Mallows):
        return _mallows_cached(pool, spec.phi).prob(tuple(perm))
    if isinstance(spec, Explicit):
        return spec.table.prob(tuple(perm))
    raise InvalidInputError("Gaussian RUM has no closed-form permutation probability")


# --------------------------------------------------------------------------
# inversion monotonicity


def _swap(perm: tuple, i: int, j: int) -> tuple:
    out = list(perm)
    out[i], out[j] = out[j], out[i]
    return tuple(out)


def is_inversion_monotone(table: PermutationTable, pool: CandidatePool, slack: float = 0.0):
    """Check that un-inverting any pair never loses probability.

    Returns ``(ok, violations)`` where each violation is ``(perm, i, j)``:
    ``perm`` has its higher-valued candidate first at positions i < j, yet
    the swapped permutation is more likely by more than ``slack``.
    """
    _check_cap(table.n)
    v = pool.values
    violations = []
    for perm in itertools.permutations(range(table.n)):
        p = table.prob(perm)
        for i in range(table.n):
            for j in range(i + 1, table.n):
                if v[perm[i]] > v[perm[j]] and p < table.prob(_swap(perm, i, j)) - slack:
                    violations.append((perm, i, j))
    return not violations, violations


# --------------------------------------------------------------------------
# accuracy orders


class Ordering(str, enum.Enum):
    A_MORE_ACCURATE = "a_more_accurate"
    B_MORE_ACCURATE = "b_more_accurate"
    INCOMPARABLE = "incomparable"
    EQUAL = "equal"


def _superstar_more_accurate(x: np.ndarray, y: np.ndarray, tol: float) -> bool:
    n = len(x)
    strict = False
    for i in range(n):
        for j in range(i + 1, n):
            rx, ry = x[i] / x[j], y[i] / y[j]
            if rx < ry * (1 - tol):
                return False
            if rx > ry * (1 + tol):
                strict = True
    if not strict:
        return False
    for k in range(n):
        if x[k] < y[k] - tol:
            if any(x[j] > y[j] + tol for j in range(k + 1, n)):
                return False
    return True


def compare_accuracy_superstar(a: SuperstarDistribution, b: SuperstarDistribution,
                               tol: float = 1e-12) -> Ordering:
    if a.n != b.n:
        raise InvalidInputError("distributions have different lengths")
    x, y = a.as_array(), b.as_array()
    if (x <= 0).any() or (y <= 0).any():
        raise DegenerateError("zero position probability makes the ratios undefined")
    if np.allclose(x, y, rtol=0, atol=tol):
        return Ordering.EQUAL
    if _superstar_more_accurate(x, y, tol):
        return Ordering.A_MORE_ACCURATE
    if _superstar_more_accurate(y, x, tol):
        return Ordering.B_MORE_ACCURATE
    return Ordering.INCOMPARABLE


def _canonical_pair_perm(values, i: int, k: int, j: int) -> tuple:
    """Candidate i on top, k at position j, everyone else in value order."""
    rest = [c for c in sorted(range(len(values)), key=lambda c: (-values[c], c)) if c not in (i, k)]
    perm = rest[: j - 1] + [k] + rest[j - 1:]
    return tuple([i] + perm)


def _beyond_more_accurate(x: PermutationTable, y: PermutationTable, pool, tol) -> bool:
    v = pool.values
    n = pool.n
    for perm in itertools.permutations(range(n)):
        for j in range(1, n):
            if not v[perm[0]] > v[perm[j]]:
                continue
            flipped = _swap(perm, 0, j)
            px, qx, py, qy = x.prob(perm), x.prob(flipped), y.prob(perm), y.prob(flipped)
            if min(qx, qy) <= 0:
                raise DegenerateError(f"zero mass on {flipped}")
            if px / qx < (py / qy) * (1 - tol):
                return False
    # ratio along the canonical pair permutations must not fall as j grows
    for i in range(n):
        for k in range(n):
            if not v[i] > v[k]:
                continue
            prev = None
            for j in range(1, n):
                perm = _canonical_pair_perm(v, i, k, j)
                ratio = x.prob(perm) / x.prob(_swap(perm, 0, j))
                if prev is not None and ratio < prev * (1 - tol):
                    return False
                prev = ratio
    tx, ty = x.top_k_inclusion(), y.top_k_inclusion()
    for k in range(n - 1):
        for c in range(n):
            if tx[c, k] < ty[c, k] - tol:
                for d in range(n):
                    if v[d] < v[c] and tx[d, k] > ty[d, k] + tol:
                        return False
    return True


def compare_accuracy_beyond(a: PermutationTable, b: PermutationTable, pool: CandidatePool,
                            tol: float = 1e-12) -> Ordering:
    _check_cap(pool.n)
    if a.n != pool.n or b.n != pool.n:
        raise InvalidInputError("tables and pool disagree on n")
    perms = list(itertools.permutations(range(pool.n)))
    if all(abs(a.prob(p) - b.prob(p)) <= tol for p in perms):
        return Ordering.EQUAL
    if _beyond_more_accurate(a, b, pool, tol):
        return Ordering.A_MORE_ACCURATE
    if _beyond_more_accurate(b, a, pool, tol):
        return Ordering.B_MORE_ACCURATE
    return Ordering.INCOMPARABLE


def _majorizes(x: np.ndarray, y: np.ndarray, tol: float) -> bool:
    return bool((np.cumsum(x) >= np.cumsum(y) - tol).all())


def index_coupling(more: SuperstarDistribution, less: SuperstarDistribution,
                   tol: float = 1e-12) -> np.ndarray:
    """Row-stochastic T with ``more @ T == less``.

    Built the way the coupling argument goes: find the first position where
    the accurate distribution has excess mass and the first later position
    with a deficit, then swap the two positions with just enough probability
    to close one of the gaps. Repeats until the marginals agree.
    """
    if more.n != less.n:
        raise InvalidInputError("distributions have different lengths")
    try:
        order = compare_accuracy_superstar(more, less)
        ok = order in (Ordering.A_MORE_ACCURATE, Ordering.EQUAL)
    except DegenerateError:
        ok = _majorizes(more.as_array(), less.as_array(), tol)
    if not ok:
        raise InvalidInputError("the first distribution is not more accurate than the second")

    n = more.n
    target = less.as_array()
    cur = more.as_array().copy()
    T = np.eye(n)
    for _ in range(4 * n * n):
        excess = np.flatnonzero(cur > target + tol)
        if excess.size == 0:
            break
        src = int(excess[0])
        deficit = np.flatnonzero(cur[src + 1:] < target[src + 1:] - tol)
        if deficit.size == 0:
            raise InvalidInputError("mass cannot be moved down the ranking to match")
        dst = src + 1 + int(deficit[0])
        need_src = cur[src] - target[src]
        need_dst = target[dst] - cur[dst]
        step = np.eye(n)
        if cur[src] > cur[dst]:
            # swap src<->dst with probability alpha: net flow alpha*(cur[src]-cur[dst])
            alpha = min(need_src, need_dst) / (cur[src] - cur[dst])
            alpha = min(alpha, 1.0)
            step[src, src] = step[dst, dst] = 1 - alpha
            step[src, dst] = step[dst, src] = alpha
        else:
            # a swap would push mass the wrong way; move it one-directionally
            frac = min(need_src, need_dst) / cur[src]
            step[src, src] = 1 - frac
            step[src, dst] = frac
        cur = cur @ step
        T = T @ step
    else:
        raise RuntimeError("coupling construction did not converge")
    return T
