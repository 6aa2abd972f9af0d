"""Round-by-round evolution of the analytic coloring state with tracked error.

The state after round k consists of the vertex color probabilities (w, r, b),
the red-blue edge probability p, and the distribution ``wcond`` of a white
vertex over the ten neighbor-count categories.  One round advances the state
through three coupled updates: the per-category recoloring rules move mass
from white to red/blue, a white vertex's surviving neighbors recolor with the
edge-conditioned probabilities (qR, qB, qW), and the category distribution is
pushed through a multinomial transition on the white neighbor slots.

Internally the solver evolves the *unconditional* category masses
``wu[c] = w * wcond[c]``.  These satisfy the same recurrences with every
division by the survival probability cancelled, which matters for the error
bounds: the conditional form divides two nearly equal quantities whose tracked
errors are correlated, so its running bound roughly doubles every round, while
the unconditional form only picks up error proportional to the per-round
recoloring rates.  The conditional distribution required by the public state
is recovered by a single division per category.

Two deliberate conventions keep a solve of the color-swapped schedule
bit-identical to the mirror image of the original solve: every sum over
categories folds transpose-partner pairs together before accumulating (see
``schedule.CATEGORY_CLASSES``), and complements are computed as
``1 - (x + y)`` rather than ``(1 - x) - y``.

When the white-white edge mass cannot be bounded away from zero at the working
precision, the neighbor-recoloring probabilities are frozen to the sentinel
values 0, 0, 1 with error bounds of one, which keeps every enclosure valid
while certification degrades gracefully (the affected conditionals are only
ever multiplied by white-sector masses of the same or smaller order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable, Iterable

import gmpy2

from .numerics import PrecisionContext, TrackedScalar
from .schedule import (
    CATEGORIES,
    CATEGORY_CLASSES,
    Category,
    PaperParams,
    RoundRule,
    Schedule,
    Segment,
    phase_rules,
)

__all__ = [
    "StateVector",
    "AuxQuantities",
    "DerivedBounds",
    "CertifiedFailureError",
    "CalibrationError",
    "CalibrationResult",
    "init_round",
    "aux_quantities",
    "step",
    "solve",
    "derived_bounds",
    "phase_calibration",
    "TRAJECTORY_COLUMNS",
    "trajectory_row",
    "write_trajectory_header",
]

_CAT_INDEX = {cat: i for i, cat in enumerate(CATEGORIES)}

# Column order of the trajectory CSV (fixed external interface).
_TRAJ_CATS = (Category(0, 0), Category(0, 1), Category(1, 0), Category(1, 1),
              Category(0, 2), Category(2, 0), Category(1, 2), Category(2, 1),
              Category(0, 3), Category(3, 0))
TRAJECTORY_COLUMNS = ("k", "p", "r", "b", "w",
                      *(f"w{c.r}{c.b}" for c in _TRAJ_CATS), "err_p")


class CertifiedFailureError(RuntimeError):
    """A state invariant failed by more than the tracked error budget."""


class CalibrationError(RuntimeError):
    """Phase-length search failed; carries the last value seen."""

    def __init__(self, message, last_value=None):
        super().__init__(message)
        self.last_value = last_value


class StateVector:
    """Analytic state after round k.

    ``wcond`` maps each category to the probability of being in it conditioned
    on being white; ``wu`` holds the unconditional masses the solver actually
    evolves.  When the white probability cannot be bounded away from zero the
    conditional distribution is carried forward unchanged from the previous
    round.
    """

    __slots__ = ("k", "w", "r", "b", "p", "_wu", "_wcond")

    def __init__(self, k, w, r, b, p, wu, wcond=None):
        self.k = k
        self.w = w
        self.r = r
        self.b = b
        self.p = p
        self._wu = wu          # tuple[TrackedScalar], CATEGORIES order
        self._wcond = wcond    # tuple or None (lazy)

    @property
    def wcond(self) -> dict:
        if self._wcond is None:
            if not self.w.excludes_zero():
                raise CertifiedFailureError(
                    "conditional category distribution undefined: white "
                    "probability interval contains zero")
            self._wcond = tuple(x.div(self.w) for x in self._wu)
        return {cat: self._wcond[i] for i, cat in enumerate(CATEGORIES)}

    @property
    def wu(self) -> dict:
        return {cat: self._wu[i] for i, cat in enumerate(CATEGORIES)}

    def __repr__(self):
        return (f"StateVector(k={self.k}, w={float(self.w):.6g}, "
                f"r={float(self.r):.6g}, b={float(self.b):.6g}, "
                f"p={float(self.p):.6g})")


@dataclass(frozen=True)
class AuxQuantities:
    """One round's edge-conditioned helper probabilities."""

    w_to: TrackedScalar   # P(stay white | white)
    qWW: TrackedScalar    # P(fixed neighbor white | vertex white)
    qR: TrackedScalar     # P(neighbor turns red | both endpoints white)
    qB: TrackedScalar
    qW: TrackedScalar
    degenerate: bool = False


@dataclass(frozen=True)
class DerivedBounds:
    """Certified consequences of the final per-edge probability."""

    per_edge_prob: float    # error-adjusted lower bound on p_K
    cut_per_vertex: float   # 1.5 * per_edge_prob, rounded down
    frac_cover: float       # 1 / per_edge_prob, rounded up
    required_girth: int     # 2K + 1


# -- summation respecting transpose-pair grouping ---------------------------


def _class_groups(entries_by_cat: dict) -> tuple:
    """Arrange per-category term descriptors into transpose-pair groups."""
    groups = []
    for cls in CATEGORY_CLASSES:
        g = tuple(entries_by_cat[c] for c in cls if c in entries_by_cat)
        if g:
            groups.append(g)
    return tuple(groups)


def _fold(groups, term: Callable):
    """Sum term(descriptor) over groups, adding within a pair first."""
    acc = None
    for g in groups:
        t = term(g[0]) if len(g) == 1 else term(g[0]).add(term(g[1]))
        acc = t if acc is None else acc.add(t)
    return acc


# -- compiled form of one rule table ----------------------------------------


def _multinomial_slots(free: int, dr: int, db: int) -> int:
    """Ways to pick dr red and db blue among ``free`` white neighbor slots."""
    return comb(free, dr) * comb(free - dr, db)


class _Compiled:
    __slots__ = ("rule", "inert", "dr", "db", "tt", "tr", "tb",
                 "p_red", "p_blue", "trans", "max_pow")

    def __init__(self, rule: RoundRule, ctx: PrecisionContext):
        self.rule = rule
        const = ctx.scalar

        dr_e, db_e, tt_e, tr_e, tb_e, pr_e, pb_e = {}, {}, {}, {}, {}, {}, {}
        for cat in CATEGORIES:
            i = _CAT_INDEX[cat]
            pw, pr, pb = rule.probs(cat)
            free = 3 - cat.r - cat.b
            if pr:
                dr_e[cat] = (i, const(pr))
                pr_e[cat] = (i, const(pr),
                             const(2 * cat.b) if cat.b else None,
                             const(free) if free else None)
            if pb:
                db_e[cat] = (i, const(pb))
                pb_e[cat] = (i, const(pb),
                             const(2 * cat.r) if cat.r else None,
                             const(free) if free else None)
            if free:
                tt_e[cat] = (i, const(free))
                if pr:
                    tr_e[cat] = (i, const(free * pr))
                if pb:
                    tb_e[cat] = (i, const(free * pb))

        self.inert = not dr_e and not db_e
        self.dr = _class_groups(dr_e)
        self.db = _class_groups(db_e)
        self.tt = _class_groups(tt_e)
        self.tr = _class_groups(tr_e)
        self.tb = _class_groups(tb_e)
        self.p_red = _class_groups(pr_e)
        self.p_blue = _class_groups(pb_e)

        # Category transitions: for each target, terms over source classes.
        trans = []
        max_pow = 1
        for tgt in CATEGORIES:
            entries = {}
            for src in CATEGORIES:
                pw = rule.probs(src)[0]
                if not pw:
                    continue
                d_r, d_b = tgt.r - src.r, tgt.b - src.b
                if d_r < 0 or d_b < 0:
                    continue
                free = 3 - src.r - src.b
                ways = _multinomial_slots(free, d_r, d_b)
                if ways == 0:
                    continue
                nw = 3 - tgt.r - tgt.b
                max_pow = max(max_pow, d_r, d_b, nw)
                entries[src] = (_CAT_INDEX[src], const(ways * pw), d_r, d_b, nw)
            trans.append((_CAT_INDEX[tgt], _class_groups(entries)))
        self.trans = tuple(trans)
        self.max_pow = max_pow


def _powers(x: TrackedScalar, one: TrackedScalar, n: int) -> list:
    out = [one, x]
    for _ in range(2, n + 1):
        out.append(out[-1].mul(x))
    return out


def _sentinel_q(ctx: PrecisionContext):
    zero_wide = TrackedScalar(gmpy2.mpfr(0, ctx.mantissa_bits), 1.0, ctx)
    one_wide = TrackedScalar(gmpy2.mpfr(1, ctx.mantissa_bits), 1.0, ctx)
    return zero_wide, zero_wide, one_wide


def _neighbor_rates(wu, comp: _Compiled, ctx: PrecisionContext):
    """(qR, qB, qW, degenerate) from unconditional masses."""
    t_all = _fold(comp.tt, lambda e: wu[e[0]].mul(e[1]))
    if t_all is None or not t_all.lower() > 0.0:
        qR, qB, qW = _sentinel_q(ctx)
        return qR, qB, qW, True
    t_red = _fold(comp.tr, lambda e: wu[e[0]].mul(e[1]))
    t_blue = _fold(comp.tb, lambda e: wu[e[0]].mul(e[1]))
    qR = ctx.zero if t_red is None else t_red.div(t_all)
    qB = ctx.zero if t_blue is None else t_blue.div(t_all)
    qW = ctx.one.sub(qR.add(qB))
    return qR, qB, qW, False


def _step_compiled(st: StateVector, comp: _Compiled, ctx: PrecisionContext,
                   want_wcond: bool) -> StateVector:
    if comp.inert:
        return StateVector(st.k + 1, st.w, st.r, st.b, st.p, st._wu, st._wcond)

    wu = st._wu
    one = ctx.one
    qR, qB, qW, degen = _neighbor_rates(wu, comp, ctx)

    # color totals
    inc_r = _fold(comp.dr, lambda e: wu[e[0]].mul(e[1]))
    inc_b = _fold(comp.db, lambda e: wu[e[0]].mul(e[1]))
    r2 = st.r if inc_r is None else st.r.add(inc_r)
    b2 = st.b if inc_b is None else st.b.add(inc_b)
    w2 = one.sub(r2.add(b2))

    # red-blue edge probability
    def p_term(e, q):
        i, c, twice, free_c = e
        if free_c is None:
            inner = twice
        else:
            fq = free_c.mul(q)
            inner = fq if twice is None else twice.add(fq)
        return wu[i].mul(c).mul(inner)

    s_red = _fold(comp.p_red, lambda e: p_term(e, qB))
    s_blue = _fold(comp.p_blue, lambda e: p_term(e, qR))
    if s_red is None:
        s_both = s_blue
    elif s_blue is None:
        s_both = s_red
    else:
        s_both = s_red.add(s_blue)
    p2 = st.p if s_both is None else st.p.add(s_both.div(ctx.exact(3)))

    # category transitions
    n = comp.max_pow
    qRp = _powers(qR, one, n)
    qBp = _powers(qB, one, n)
    qWp = _powers(qW, one, n)

    def trans_term(e):
        i, c, d_r, d_b, nw = e
        if d_r:
            m = qRp[d_r]
            if d_b:
                m = m.mul(qBp[d_b])
        elif d_b:
            m = qBp[d_b]
        else:
            m = None
        if nw:
            m = qWp[nw] if m is None else m.mul(qWp[nw])
        t = wu[i].mul(c)
        return t if m is None else t.mul(m)

    zero = ctx.zero
    wu2 = [zero] * len(CATEGORIES)
    for tgt_i, groups in comp.trans:
        s = _fold(groups, trans_term)
        if s is not None:
            wu2[tgt_i] = s
    wu2 = tuple(wu2)

    wcond2 = None
    if w2.excludes_zero():
        if want_wcond:
            wcond2 = tuple(x.div(w2) for x in wu2)
    else:
        wcond2 = st._wcond if st._wcond is not None else tuple(
            st.wcond[cat] for cat in CATEGORIES)
    return StateVector(st.k + 1, w2, r2, b2, p2, wu2, wcond2)


# -- public operations -------------------------------------------------------


def init_round(s: Schedule, ctx: PrecisionContext) -> StateVector:
    """State after the seeding round (round 1)."""
    pw, pr, pb = s.rule_at(1, Category(0, 0))
    one = ctx.one
    R = ctx.scalar(pr)
    B = ctx.scalar(pb)
    w1 = one.sub(R.add(B))
    p1 = ctx.exact(2).mul(R.mul(B))

    Rp = _powers(R, one, 3)
    Bp = _powers(B, one, 3)
    Wp = _powers(w1, one, 3)
    wcond = []
    for cat in CATEGORIES:
        ways = ctx.exact(comb(3, cat.r) * comb(3 - cat.r, cat.b))
        if cat.r:
            m = Rp[cat.r]
            if cat.b:
                m = m.mul(Bp[cat.b])
        elif cat.b:
            m = Bp[cat.b]
        else:
            m = None
        free = 3 - cat.r - cat.b
        if free:
            m = Wp[free] if m is None else m.mul(Wp[free])
        wcond.append(ways if m is None else ways.mul(m))
    wcond = tuple(wcond)
    wu = tuple(w1.mul(x) for x in wcond)
    return StateVector(1, w1, R, B, p1, wu, wcond)


def aux_quantities(st: StateVector, rules: RoundRule) -> AuxQuantities:
    """The next round's helper probabilities, from the conditional state."""
    ctx = st.w.ctx
    wcond = st.wcond
    wt_e, den_e, red_e, blue_e = {}, {}, {}, {}
    for cat in CATEGORIES:
        pw, pr, pb = rules.probs(cat)
        if pw:
            wt_e[cat] = (cat, ctx.scalar(pw))
        free = 3 - cat.r - cat.b
        if free:
            den_e[cat] = (cat, ctx.exact(free))
            if pr:
                red_e[cat] = (cat, ctx.scalar(free * pr))
            if pb:
                blue_e[cat] = (cat, ctx.scalar(free * pb))

    term = lambda e: wcond[e[0]].mul(e[1])
    w_to = _fold(_class_groups(wt_e), term)
    if w_to is None:
        w_to = ctx.zero
    den = _fold(_class_groups(den_e), term)
    qWW = ctx.zero if den is None else den.div(ctx.exact(3))
    if den is None or not den.lower() > 0.0:
        qR, qB, qW = _sentinel_q(ctx)
        return AuxQuantities(w_to, qWW, qR, qB, qW, degenerate=True)
    t_red = _fold(_class_groups(red_e), term)
    t_blue = _fold(_class_groups(blue_e), term)
    qR = ctx.zero if t_red is None else t_red.div(den)
    qB = ctx.zero if t_blue is None else t_blue.div(den)
    qW = ctx.one.sub(qR.add(qB))
    return AuxQuantities(w_to, qWW, qR, qB, qW)


def step(st: StateVector, rules: RoundRule, ctx: PrecisionContext | None = None
         ) -> StateVector:
    """Advance the state one round under the given rule table."""
    ctx = ctx or st.w.ctx
    return _step_compiled(st, _Compiled(rules, ctx), ctx, want_wcond=True)


def _conservation_check(st: StateVector):
    """Certify that the unconditional masses still sum to the white mass."""
    total = None
    for cls in CATEGORY_CLASSES:
        idxs = [_CAT_INDEX[c] for c in cls]
        t = st._wu[idxs[0]] if len(idxs) == 1 else st._wu[idxs[0]].add(st._wu[idxs[1]])
        total = t if total is None else total.add(t)
    if math.isinf(total.err) or math.isinf(st.w.err):
        return  # certification already lost; nothing left to contradict
    dev = abs(gmpy2.mpq(total.value) - gmpy2.mpq(st.w.value))
    budget = gmpy2.mpq(total.err) + gmpy2.mpq(st.w.err)
    if dev > budget:
        raise CertifiedFailureError(
            f"category masses sum to {float(total.value)!r} but w = "
            f"{float(st.w.value)!r} at round {st.k}; deviation exceeds "
            f"the tracked budget {float(budget):.3e}")


def solve(s: Schedule, ctx: PrecisionContext,
          sink: Callable[[StateVector], None] | None = None,
          every: int = 100) -> tuple[StateVector, DerivedBounds | None]:
    """Run the recurrences from round 1 to K.

    ``sink`` receives every ``every``-th state plus the final one.  Returns
    the final state and the error-adjusted derived bounds; the bounds are
    None when the final per-edge probability cannot be certified positive
    (inert or degenerate schedules).
    """
    problems = s.validate()
    if problems:
        raise ValueError("invalid schedule: " + "; ".join(problems))
    st = init_round(s, ctx)
    if sink is not None and (every == 1 or s.K == 1):
        sink(st)
    seg_iter = iter(sorted(s.segments, key=lambda g: g.k_lo))
    seg = next(seg_iter)
    comp = _Compiled(seg.rule, ctx)
    for k in range(2, s.K + 1):
        if k > seg.k_hi:
            seg = next(seg_iter)
            comp = _Compiled(seg.rule, ctx)
        emit = sink is not None and (k % every == 0 or k == s.K)
        st = _step_compiled(st, comp, ctx, want_wcond=emit)
        if emit:
            _conservation_check(st)
            sink(st)
    bounds = derived_bounds(st, s.K) if st.p.lower() > 0.0 else None
    return st, bounds


def derived_bounds(final: StateVector, K: int) -> DerivedBounds:
    """Certified cut bounds from the final state (conservative rounding)."""
    if final.k != K:
        raise ValueError(f"state is at round {final.k}, not K = {K}")
    p_lo = final.p.lower()
    if not p_lo > 0.0:
        raise ValueError(
            f"per-edge probability not certified positive: p = "
            f"{float(final.p):.6g} with error bound {final.p.err:.3e}")
    cut = math.nextafter(1.5 * p_lo, -math.inf)
    cover = math.nextafter(1.0 / p_lo, math.inf)
    return DerivedBounds(per_edge_prob=p_lo, cut_per_vertex=cut,
                         frac_cover=cover, required_girth=2 * K + 1)


@dataclass(frozen=True)
class CalibrationResult:
    K1: int
    K2: int
    K1_conditional: int | None   # alternative threshold reading, if reached
    theta1: float
    theta2: float
    boundary_value: float        # W01 + W10 at the end of phase one
    final_white: float


def phase_calibration(p0, pR, pB, pRB, theta1: float, theta2: float,
                      k_max: int, ctx: PrecisionContext | None = None
                      ) -> CalibrationResult:
    """Find the phase lengths that drive the two threshold quantities down.

    Phase one ends after the first round whose state satisfies
    ``w * (wcond[0,1] + wcond[1,0]) < theta1`` (the probability that a vertex
    is white with exactly one colored neighbor), so K1 is that round index
    minus one.  K2 then counts the further second-phase rounds until the white
    probability drops below ``theta2``.  The alternative conditional reading
    of the first threshold, ``wcond[0,1] + wcond[1,0] < theta1``, is tracked
    alongside and reported when it is reached within the same horizon.
    """
    if not (0 < theta1 <= 1 and 0 < theta2 <= 1):
        raise ValueError("thresholds must lie in (0, 1]")
    ctx = ctx or PrecisionContext(256)
    params = PaperParams(p0=Fraction(p0), pR=Fraction(pR), pB=Fraction(pB),
                         pRB=Fraction(pRB), K1=0, K2=0)
    seed, phase1, phase2 = phase_rules(params)
    st = init_round(Schedule(K=1, segments=(Segment(1, 1, seed),)), ctx)

    i01, i10 = _CAT_INDEX[Category(0, 1)], _CAT_INDEX[Category(1, 0)]
    comp1 = _Compiled(phase1, ctx)
    k = 1
    k1_uncond = None
    k1_cond = None
    m = float(st._wu[i01].value) + float(st._wu[i10].value)
    if m < theta1:
        k1_uncond = k
    while k1_uncond is None:
        if k >= k_max:
            raise CalibrationError(
                f"phase-one threshold {theta1} not reached by round {k_max}; "
                f"last value {m:.6e}", last_value=m)
        k += 1
        st = _step_compiled(st, comp1, ctx, want_wcond=False)
        m = float(st._wu[i01].value) + float(st._wu[i10].value)
        if k1_cond is None:
            wv = float(st.w.value)
            if wv > 0 and m / wv < theta1:
                k1_cond = max(k - 1, 1)
        if m < theta1:
            k1_uncond = k
    K1 = max(k1_uncond - 1, 1)
    boundary = m

    comp2 = _Compiled(phase2, ctx)
    wv = float(st.w.value)
    while wv >= theta2:
        if k >= k_max:
            raise CalibrationError(
                f"phase-two threshold {theta2} not reached by round {k_max}; "
                f"last value {wv:.6e}", last_value=wv)
        k += 1
        st = _step_compiled(st, comp2, ctx, want_wcond=False)
        wv = float(st.w.value)
    K2 = k - K1 - 1
    return CalibrationResult(K1=K1, K2=K2, K1_conditional=k1_cond,
                             theta1=theta1, theta2=theta2,
                             boundary_value=boundary, final_white=wv)


# -- trajectory CSV -----------------------------------------------------------


def write_trajectory_header(fh):
    fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")


def trajectory_row(st: StateVector, digits: int = 20) -> str:
    wcond = st.wcond
    cells = [str(st.k)]
    for x in (st.p, st.r, st.b, st.w):
        cells.append(x.format(digits))
    for cat in _TRAJ_CATS:
        cells.append(wcond[cat].format(digits))
    cells.append(f"{st.p.err:.6e}")
    return ",".join(cells) + "\n"
