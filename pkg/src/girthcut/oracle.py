"""Exact ground truth for the first two rounds, by local enumeration.

For a vertex (or edge) of a cubic graph whose small neighborhood is a tree,
the color distribution after round k is a finite sum over the joint round-1
coin flips of the neighborhood, followed by the independent round-2 decisions
of the vertices whose full neighbor sets lie inside it.  This module carries
out that sum in exact rational arithmetic, using no structural results about
the process whatsoever: only the independence of distinct coin flips.  The
results are the anti-circular reference the recurrence engine is tested
against.

Enumeration domains: p2 uses the six vertices within distance one of an edge
(3^6 joint round-1 outcomes); the category distribution after round 2 uses
the ten vertices within distance two of a vertex, factored over the three
child subtrees, which are disjoint and therefore independent once the
center's round-1 color is fixed.  Rounds k > 2 would need the grandchildren's
own neighborhoods (3^22 outcomes) and are out of scope.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import gmpy2

from .schedule import CATEGORIES, Category, Schedule

__all__ = [
    "LocalBall",
    "OracleResult",
    "OracleComparison",
    "exact_small_k",
    "compare",
]

_W, _R, _B = 0, 1, 2
_COLORS = (_W, _R, _B)


@dataclass(frozen=True)
class LocalBall:
    """Rooted tree of all vertices within ``radius`` of a vertex or an edge.

    Interior vertices (depth < radius) have degree exactly three; the root
    edge case has two radius-0 vertices.  Used descriptively and for the
    locality tests; the enumerators below hardcode the two shapes they need.
    """

    center: str                      # "vertex" or "edge"
    radius: int
    depth: tuple[int, ...]           # per-vertex depth label
    adj: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, center: str, radius: int) -> "LocalBall":
        if center not in ("vertex", "edge"):
            raise ValueError(f"center must be 'vertex' or 'edge', got {center!r}")
        if not 0 <= radius <= 2:
            raise ValueError("radius must be in 0..2")
        depth = []
        adj: list[list[int]] = []

        def new_vertex(d):
            depth.append(d)
            adj.append([])
            return len(depth) - 1

        def link(a, b):
            adj[a].append(b)
            adj[b].append(a)

        frontier = []
        if center == "vertex":
            frontier = [new_vertex(0)]
        else:
            u, v = new_vertex(0), new_vertex(0)
            link(u, v)
            frontier = [u, v]
        for d in range(1, radius + 1):
            nxt = []
            for x in frontier:
                while len(adj[x]) < 3:
                    y = new_vertex(d)
                    link(x, y)
                    nxt.append(y)
            frontier = nxt
        return cls(center=center, radius=radius,
                   depth=tuple(depth), adj=tuple(tuple(a) for a in adj))

    def interior(self) -> tuple[int, ...]:
        """Vertices whose whole neighborhood lies inside the ball."""
        return tuple(i for i, d in enumerate(self.depth) if d < self.radius)


@dataclass(frozen=True)
class OracleResult:
    """Exact rational state after round k (k <= 2).

    ``wcond`` is None when the white probability is exactly zero, in which
    case the conditional category distribution does not exist.
    """

    k: int
    p: Fraction
    r: Fraction
    b: Fraction
    w: Fraction
    wcond: dict[Category, Fraction] | None


def _round1_dist(s: Schedule) -> tuple[Fraction, Fraction, Fraction]:
    pw, pr, pb = s.rule_at(1, Category(0, 0))
    return pw, pr, pb


def _round2_dist(s: Schedule, r: int, b: int) -> tuple[Fraction, Fraction, Fraction]:
    return s.rule_at(2, Category(r, b))


def _cat_counts(colors) -> tuple[int, int]:
    colors = tuple(colors)
    r = sum(1 for c in colors if c == _R)
    b = sum(1 for c in colors if c == _B)
    return r, b


def _k1(s: Schedule, extra_radius: int = 0) -> OracleResult:
    """Round-1 state; ``extra_radius=1`` re-derives it from a radius-2 ball.

    The enlarged enumeration includes the grandchildren's coin flips and
    marginalizes them out, which must not change any output (the locality
    property the radius-2 option exists to test).
    """
    pw1, pr1, pb1 = _round1_dist(s)
    d1 = {_W: pw1, _R: pr1, _B: pb1}
    p1 = 2 * pr1 * pb1  # enumerating (cu, cv) collapses to the two RB orders

    zero = Fraction(0)
    wcond = {cat: zero for cat in CATEGORIES}
    if extra_radius == 0:
        for cs in itertools.product(_COLORS, repeat=3):
            wcond[Category(*_cat_counts(cs))] += d1[cs[0]] * d1[cs[1]] * d1[cs[2]]
    else:
        # per-subtree marginal: child color c1 joint with its two children
        sub = {c: zero for c in _COLORS}
        for c1, e1, e2 in itertools.product(_COLORS, repeat=3):
            sub[c1] += d1[c1] * d1[e1] * d1[e2]
        for cs in itertools.product(_COLORS, repeat=3):
            wcond[Category(*_cat_counts(cs))] += sub[cs[0]] * sub[cs[1]] * sub[cs[2]]
    if pw1 == 0:
        wcond = None
    return OracleResult(k=1, p=p1, r=pr1, b=pb1, w=pw1, wcond=wcond)


def _second_round_vertex(s: Schedule, c: int, neighbor_colors) -> dict:
    """Distribution of a vertex's color after round 2 given round-1 data."""
    if c != _W:
        return {c: Fraction(1)}
    r, b = _cat_counts(neighbor_colors)
    pw, pr, pb = _round2_dist(s, r, b)
    return {_W: pw, _R: pr, _B: pb}


def _k2(s: Schedule) -> OracleResult:
    if s.K < 2:
        raise ValueError("schedule has no round 2")
    pw1, pr1, pb1 = _round1_dist(s)
    d1 = {_W: pw1, _R: pr1, _B: pb1}
    zero = Fraction(0)

    # r2 / b2 / w2: center plus its three neighbors (radius-1 vertex ball)
    r2 = b2 = w2 = zero
    for cv in _COLORS:
        for cs in itertools.product(_COLORS, repeat=3):
            wgt = d1[cv] * d1[cs[0]] * d1[cs[1]] * d1[cs[2]]
            if not wgt:
                continue
            dist = _second_round_vertex(s, cv, cs)
            r2 += wgt * dist.get(_R, zero)
            b2 += wgt * dist.get(_B, zero)
            w2 += wgt * dist.get(_W, zero)

    # p2: six vertices around an edge uv; u sees (v, a1, a2), v sees (u, b1, b2)
    p2 = zero
    for cu, cv in itertools.product(_COLORS, repeat=2):
        duv = d1[cu] * d1[cv]
        if not duv:
            continue
        for a1, a2, c1, c2 in itertools.product(_COLORS, repeat=4):
            wgt = duv * d1[a1] * d1[a2] * d1[c1] * d1[c2]
            if not wgt:
                continue
            du = _second_round_vertex(s, cu, (cv, a1, a2))
            dv = _second_round_vertex(s, cv, (cu, c1, c2))
            p2 += wgt * (du.get(_R, zero) * dv.get(_B, zero)
                         + du.get(_B, zero) * dv.get(_R, zero))

    # category distribution after round 2: radius-2 vertex ball, factored
    # over the three disjoint child subtrees given a white center
    sub = {}  # (child round-1 color, child round-2 color) -> probability
    for c1 in _COLORS:
        for e1, e2 in itertools.product(_COLORS, repeat=2):
            wgt = d1[c1] * d1[e1] * d1[e2]
            if not wgt:
                continue
            dist = _second_round_vertex(s, c1, (_W, e1, e2))  # center is white
            for c2, q in dist.items():
                if q:
                    key = (c1, c2)
                    sub[key] = sub.get(key, zero) + wgt * q

    unnorm = {cat: zero for cat in CATEGORIES}
    keys = sorted(sub)
    for trip in itertools.product(keys, repeat=3):
        wgt = sub[trip[0]] * sub[trip[1]] * sub[trip[2]]
        cat1 = _cat_counts(t[0] for t in trip)
        stay_white = _round2_dist(s, *cat1)[0]
        if not stay_white:
            continue
        cat2 = Category(*_cat_counts(t[1] for t in trip))
        unnorm[cat2] += wgt * stay_white

    mass = sum(unnorm.values(), zero)
    w2_check = pw1 * mass
    if w2_check != w2:
        raise AssertionError(
            "internal oracle inconsistency: radius-1 and radius-2 white "
            f"probabilities differ ({w2} vs {w2_check})")
    wcond = None
    if w2 > 0:
        wcond = {cat: v / mass for cat, v in unnorm.items()}
    return OracleResult(k=2, p=p2, r=r2, b=b2, w=w2, wcond=wcond)


def exact_small_k(s: Schedule, k: int, extra_radius: int = 0) -> OracleResult:
    """Exact rational state after round k (supported for k in {1, 2}).

    ``extra_radius`` enlarges the k=1 enumeration ball by one shell; outputs
    must be identical.
    """
    if k == 1:
        return _k1(s, extra_radius=extra_radius)
    if k == 2:
        if extra_radius:
            raise ValueError("extra_radius is only supported for k = 1")
        return _k2(s)
    raise ValueError(
        f"exact enumeration supports k <= 2 only (3^22 outcomes at k = 3); got {k}")


def _exact_fraction(x) -> Fraction:
    q = gmpy2.mpq(x)
    return Fraction(int(q.numerator), int(q.denominator))


@dataclass(frozen=True)
class OracleComparison:
    """Field-wise |oracle - solver| with per-field pass flags."""

    deviations: dict[str, float]
    budgets: dict[str, float]
    flags: dict[str, bool]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values())

    @property
    def all_ok(self) -> bool:
        return all(self.flags.values())


_SLACK = Fraction(1, 10 ** 12)


def compare(o: OracleResult, st) -> OracleComparison:
    """Compare exact oracle values against a solver state at the same round.

    Each deviation must stay within the solver's tracked error plus a fixed
    1e-12 slack.  The conditional category fields are skipped when the oracle
    white probability is exactly zero (the solver then reports a carried-over
    distribution, the oracle none at all).
    """
    if o.k != st.k:
        raise ValueError(f"round mismatch: oracle at {o.k}, state at {st.k}")
    fields = {"p": (o.p, st.p), "r": (o.r, st.r), "b": (o.b, st.b),
              "w": (o.w, st.w)}
    if o.wcond is not None:
        wc = st.wcond
        for cat in CATEGORIES:
            fields[f"w{cat.r}{cat.b}"] = (o.wcond[cat], wc[cat])
    devs, budgets, flags = {}, {}, {}
    for name, (exact, scalar) in fields.items():
        dev = abs(_exact_fraction(scalar.value) - exact)
        budget = Fraction(scalar.err) + _SLACK
        devs[name] = float(dev)
        budgets[name] = float(budget)
        flags[name] = dev <= budget
    return OracleComparison(deviations=devs, budgets=budgets, flags=flags)
