"""One-to-one CEU/D2D matching: preferences, deferred acceptance, stability checks.

CEUs are indexed ``0..M-1`` and D2D pairs ``0..N-1``. A preference list
holds only acceptable partners, most preferred first. Acceptability is
mutual: ``j`` is on CEU ``i``'s list iff ``i`` is on pair ``j``'s list.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class MalformedPreferencesError(ValueError):
    pass


class SizeLimitError(ValueError):
    pass


@dataclass(frozen=True)
class PreferenceList:
    owner: int
    ranked: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ranked", tuple(int(x) for x in self.ranked))
        if len(set(self.ranked)) != len(self.ranked):
            raise MalformedPreferencesError(f"duplicate entries in list of {self.owner}")

    def rank(self) -> dict[int, int]:
        return {p: r for r, p in enumerate(self.ranked)}


@dataclass
class Matching:
    ceu_to_d2d: dict[int, int] = field(default_factory=dict)
    d2d_to_ceu: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, pairs) -> "Matching":
        m = cls()
        for i, j in pairs:
            if i in m.ceu_to_d2d or j in m.d2d_to_ceu:
                raise ValueError(f"pair ({i}, {j}) reuses a matched agent")
            m.ceu_to_d2d[i] = j
            m.d2d_to_ceu[j] = i
        return m

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.ceu_to_d2d.items())

    def __len__(self) -> int:
        return len(self.ceu_to_d2d)

    def __eq__(self, other) -> bool:
        return isinstance(other, Matching) and self.ceu_to_d2d == other.ceu_to_d2d


class Block(NamedTuple):
    ceu: int
    d2d: int
    kind: str  # "blocking" or "ir" (matched to an unacceptable partner)


@dataclass
class Round:
    """Proposals made and rejections issued in one synchronous DA round."""

    proposals: list[tuple[int, int]]
    rejections: list[tuple[int, int]]
    held: dict[int, int]  # D2D pair -> CEU tentatively held after the round


def _as_arrays(outcomes):
    if isinstance(outcomes, dict):
        return {k: np.asarray(v) for k, v in outcomes.items()}
    rows = [list(r) for r in outcomes]
    m = len(rows)
    n = len(rows[0]) if m else 0
    keys = ("feasible", "u_ceu", "r_ceu", "u_d2d", "r_d2d")
    return {k: np.array([[getattr(o, k) for o in r] for r in rows]).reshape(m, n) for k in keys}


def build_preferences(outcomes, topology=None, relay_range: float = np.inf):
    """Preference lists of both sides from per-pair outcomes.

    ``outcomes`` is an M x N nested list of :class:`PairOutcome` or a dict of
    M x N arrays with the same field names. A pair is acceptable when its
    outcome is feasible and the CEU lies within ``relay_range`` of the DT.
    CEUs rank by (U_C, R_C), D2D pairs by (U_D, R_D), both descending, then
    by lowest partner index.
    """
    a = _as_arrays(outcomes)
    ok = a["feasible"].astype(bool)
    m, n = ok.shape
    if topology is not None and m and n and np.isfinite(relay_range):
        ok = ok & (topology.ceu_dt_distances() <= relay_range)

    ceu_prefs = []
    for i in range(m):
        js = np.flatnonzero(ok[i])
        order = np.lexsort((js, -a["r_ceu"][i, js], -a["u_ceu"][i, js]))
        ceu_prefs.append(PreferenceList(i, tuple(js[order])))
    d2d_prefs = []
    for j in range(n):
        is_ = np.flatnonzero(ok[:, j])
        order = np.lexsort((is_, -a["r_d2d"][is_, j], -a["u_d2d"][is_, j]))
        d2d_prefs.append(PreferenceList(j, tuple(is_[order])))
    return ceu_prefs, d2d_prefs


def _normalize(prefs) -> list[tuple[int, ...]]:
    return [tuple(p.ranked) if isinstance(p, PreferenceList) else tuple(p) for p in prefs]


def check_preferences(ceu_prefs, d2d_prefs):
    ceu, d2d = _normalize(ceu_prefs), _normalize(d2d_prefs)
    m, n = len(ceu), len(d2d)
    for side, lists, bound in (("CEU", ceu, n), ("D2D", d2d, m)):
        for a, lst in enumerate(lists):
            if len(set(lst)) != len(lst):
                raise MalformedPreferencesError(f"{side} {a} lists a partner twice")
            if any(not 0 <= x < bound for x in lst):
                raise MalformedPreferencesError(f"{side} {a} lists an unknown partner")
    ceu_edges = {(i, j) for i, lst in enumerate(ceu) for j in lst}
    d2d_edges = {(i, j) for j, lst in enumerate(d2d) for i in lst}
    if ceu_edges != d2d_edges:
        i, j = min(ceu_edges ^ d2d_edges)
        raise MalformedPreferencesError(f"acceptability of CEU {i} and D2D {j} is not mutual")
    return ceu, d2d


def deferred_acceptance(ceu_prefs, d2d_prefs, log: list[Round] | None = None) -> Matching:
    """CEU-proposing deferred acceptance in synchronous rounds.

    Every free CEU with a nonempty list proposes to its favourite remaining
    pair; each pair keeps the best of its held CEU and the new proposers
    and rejects the rest, and rejected CEUs strike that pair off their
    list. Stops when a round produces no rejection. If ``log`` is given, one
    :class:`Round` per round is appended to it.
    """
    ceu, d2d = check_preferences(ceu_prefs, d2d_prefs)
    rank = [{i: r for r, i in enumerate(lst)} for lst in d2d]
    next_choice = [0] * len(ceu)
    held: dict[int, int] = {}
    free = [i for i in range(len(ceu)) if ceu[i]]
    while free:
        proposals = [(i, ceu[i][next_choice[i]]) for i in free]
        offers: dict[int, list[int]] = {}
        for i, j in proposals:
            offers.setdefault(j, []).append(i)
        rejections = []
        for j in sorted(offers):
            pool = offers[j] + ([held[j]] if j in held else [])
            best = min(pool, key=lambda i: rank[j][i])
            held[j] = best
            rejections.extend((i, j) for i in pool if i != best)
        rejections.sort()
        for i, _ in rejections:
            next_choice[i] += 1
        if log is not None:
            log.append(Round(proposals, rejections, dict(sorted(held.items()))))
        free = sorted(i for i, _ in rejections if next_choice[i] < len(ceu[i]))
    return Matching.from_pairs((i, j) for j, i in held.items())


def find_blocking_pairs(matching: Matching, ceu_prefs, d2d_prefs) -> list[Block]:
    """Pairs that block ``matching`` and matched pairs that violate individual rationality."""
    ceu, d2d = _normalize(ceu_prefs), _normalize(d2d_prefs)
    ceu_rank = [{j: r for r, j in enumerate(lst)} for lst in ceu]
    d2d_rank = [{i: r for r, i in enumerate(lst)} for lst in d2d]
    out = []
    for i, j in matching.pairs():
        if j not in ceu_rank[i] or i not in d2d_rank[j]:
            out.append(Block(i, j, "ir"))
    for i, lst in enumerate(ceu):
        cur = matching.ceu_to_d2d.get(i)
        cur_rank = ceu_rank[i].get(cur, len(lst)) if cur is not None else len(lst)
        for j in lst[:cur_rank]:
            if i not in d2d_rank[j]:
                continue
            partner = matching.d2d_to_ceu.get(j)
            partner_rank = d2d_rank[j].get(partner, len(d2d[j])) if partner is not None else len(d2d[j])
            if d2d_rank[j][i] < partner_rank:
                out.append(Block(i, j, "blocking"))
    return sorted(out)


def enumerate_stable_matchings(ceu_prefs, d2d_prefs, max_size: int = 8) -> list[Matching]:
    """All stable matchings by brute force over acceptable partial matchings."""
    ceu, d2d = check_preferences(ceu_prefs, d2d_prefs)
    if len(ceu) > max_size or len(d2d) > max_size:
        raise SizeLimitError(f"enumeration limited to {max_size}x{max_size}, got {len(ceu)}x{len(d2d)}")
    found = []

    def extend(i: int, used: frozenset, pairs: list):
        if i == len(ceu):
            mu = Matching.from_pairs(pairs)
            if not find_blocking_pairs(mu, ceu, d2d):
                found.append(mu)
            return
        extend(i + 1, used, pairs)
        for j in ceu[i]:
            if j not in used:
                extend(i + 1, used | {j}, pairs + [(i, j)])

    extend(0, frozenset(), [])
    return found


def random_matching(ceu_prefs, d2d_prefs, rng: np.random.Generator) -> Matching:
    """Uniformly random one-to-one assignment, keeping only mutually acceptable pairs.

    When there are fewer pairs than CEUs, the CEUs that receive a candidate
    are a uniform random subset.
    """
    ceu, d2d = _normalize(ceu_prefs), _normalize(d2d_prefs)
    m, n = len(ceu), len(d2d)
    ceu_order = rng.permutation(m)
    d2d_order = rng.permutation(n)
    acceptable = {(i, j) for i, lst in enumerate(ceu) for j in lst}
    pairs = ((int(i), int(j)) for i, j in zip(ceu_order, d2d_order))
    return Matching.from_pairs(p for p in pairs if p in acceptable)


def ceu_weakly_prefers(a: Matching, b: Matching, ceu_prefs) -> bool:
    """Every CEU likes its partner in ``a`` at least as much as in ``b``."""
    for i, lst in enumerate(_normalize(ceu_prefs)):
        rank = {j: r for r, j in enumerate(lst)}
        ra = rank.get(a.ceu_to_d2d.get(i), len(lst))
        rb = rank.get(b.ceu_to_d2d.get(i), len(lst))
        if ra > rb:
            return False
    return True


def all_partial_matchings(m: int, n: int):
    """Every partial one-to-one matching of an m x n complete bipartite graph."""
    for k in range(min(m, n) + 1):
        for ceus in itertools.combinations(range(m), k):
            for d2ds in itertools.permutations(range(n), k):
                yield Matching.from_pairs(zip(ceus, d2ds))
