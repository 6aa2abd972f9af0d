"""Random cubic graphs, procedure simulation, and cut extraction.

Graphs come from the pairing model: three stubs per vertex, a uniform
perfect matching on stubs, and full rejection of any outcome with loops or
parallel edges, which leaves the uniform distribution on simple cubic
graphs.  The acceptance rate is bounded away from zero (about e^-2), so
rejection terminates quickly.

The coloring procedure runs in synchronous rounds: every white vertex looks
up its (red, blue) neighbor counts in the round's rule table and recolors
independently, all decisions based on the previous round's snapshot.  Two
execution paths implement the same process:

* a naive per-round sweep, transparent enough to serve as the reference in
  equivalence tests, and
* an event-driven path that samples each white vertex's firing round
  directly from the geometric law of its current category and resamples
  whenever the category (or the governing segment rule) changes.
  Memorylessness makes this exactly distribution-equivalent while skipping
  the inert majority; production schedules have per-round probabilities so
  small that sweeping 3e5 rounds at n = 1e6 would be hopeless.

Both paths draw from the counter-based generator in ``rng``, so a run is a
deterministic function of (graph, schedule, seed) independent of vertex
iteration order.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .schedule import CATEGORIES, Schedule

__all__ = [
    "WHITE", "RED", "BLUE",
    "CubicGraph", "SimState", "CutResult", "EstimateRow", "EstimateSummary",
    "gen_cubic", "load_graph", "save_graph", "count_short_cycles",
    "run_procedure", "extract_cut", "estimate",
]

WHITE, RED, BLUE = 0, 1, 2


@dataclass(frozen=True)
class CubicGraph:
    """Simple 3-regular graph as an (n, 3) neighbor array."""

    n: int
    adj: np.ndarray

    @property
    def m(self) -> int:
        return 3 * self.n // 2

    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays (u, v) with u < v, one entry per edge."""
        u = np.repeat(np.arange(self.n), 3)
        v = self.adj.ravel()
        keep = u < v
        return u[keep], v[keep]

    def validate(self) -> list[str]:
        out = []
        if self.n % 2 or self.n < 4:
            out.append(f"n = {self.n} must be even and at least 4")
        if self.adj.shape != (self.n, 3):
            out.append(f"adjacency shape {self.adj.shape} != ({self.n}, 3)")
            return out
        u = np.repeat(np.arange(self.n), 3)
        v = self.adj.ravel()
        if (u == v).any():
            out.append("self-loop present")
        code = np.minimum(u, v).astype(np.int64) * self.n + np.maximum(u, v)
        uniq, counts = np.unique(code, return_counts=True)
        if uniq.size != 3 * self.n // 2 or (counts != 2).any():
            out.append("parallel edge or asymmetric adjacency")
        return out


def gen_cubic(n: int, seed: int, max_attempts: int = 10_000) -> CubicGraph:
    """Uniform simple cubic graph via rejection of bad pairings."""
    if n % 2 or n < 4:
        raise ValueError(f"n must be even and >= 4, got {n}")
    gen = np.random.default_rng(np.random.PCG64(seed))
    stubs = np.repeat(np.arange(n, dtype=np.int64), 3)
    for _ in range(max_attempts):
        perm = gen.permutation(3 * n)
        a = stubs[perm[0::2]]
        b = stubs[perm[1::2]]
        if (a == b).any():
            continue
        code = np.minimum(a, b) * n + np.maximum(a, b)
        if np.unique(code).size != code.size:
            continue
        src = np.concatenate((a, b))
        dst = np.concatenate((b, a))
        order = np.argsort(src, kind="stable")
        adj = dst[order].reshape(n, 3).astype(np.int32)
        return CubicGraph(n=n, adj=adj)
    raise RuntimeError(f"no simple pairing found in {max_attempts} attempts")


def save_graph(g: CubicGraph) -> str:
    lines = [str(g.n)]
    for i in range(g.n):
        lines.append(" ".join(str(int(x)) for x in g.adj[i]))
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> CubicGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    n = int(lines[0])
    if len(lines) != n + 1:
        raise ValueError(f"expected {n} adjacency lines, got {len(lines) - 1}")
    adj = np.array([[int(x) for x in ln.split()] for ln in lines[1:]],
                   dtype=np.int32)
    g = CubicGraph(n=n, adj=adj)
    problems = g.validate()
    if problems:
        raise ValueError("; ".join(problems))
    return g


def count_short_cycles(g: CubicGraph, l_max: int) -> dict[int, int]:
    """Exact cycle counts by length 3..l_max (l_max <= 16).

    Each cycle is counted once: rooted at its minimum vertex with the walk
    oriented toward the smaller of the root's two cycle neighbors.
    """
    if not 3 <= l_max <= 16:
        raise ValueError("l_max must be in 3..16")
    hist = {length: 0 for length in range(3, l_max + 1)}
    adj = [sorted(map(int, g.adj[i])) for i in range(g.n)]
    for root in range(g.n):
        path = [root]
        on_path = {root}

        def dfs(x: int):
            depth = len(path)
            for y in adj[x]:
                if y == root and depth >= 3 and path[1] < path[-1]:
                    hist[depth] += 1
                elif y > root and y not in on_path and depth < l_max:
                    path.append(y)
                    on_path.add(y)
                    dfs(y)
                    on_path.discard(y)
                    path.pop()

        dfs(root)
    return hist


@dataclass
class SimState:
    """Vertex colors and neighbor counts after the last executed round."""

    k: int
    color: np.ndarray   # uint8: WHITE / RED / BLUE
    rcnt: np.ndarray    # red neighbors, maintained for every vertex
    bcnt: np.ndarray
    seed: int
    mode: str           # "naive" or "event"
    graph: CubicGraph
    schedule: Schedule

    def active_set(self) -> np.ndarray:
        """White vertices whose category rule in the next round is not inert."""
        k_next = min(self.k + 1, self.schedule.K)
        a_tab, b_tab = _float_tables(self.schedule.segment_at(k_next).rule)
        whites = np.nonzero(self.color == WHITE)[0]
        q = (a_tab[self.rcnt[whites], self.bcnt[whites]]
             + b_tab[self.rcnt[whites], self.bcnt[whites]])
        return whites[q > 0.0]

    def color_fractions(self) -> tuple[float, float, float]:
        """(white, red, blue) fractions."""
        n = self.color.size
        nw = int((self.color == WHITE).sum())
        nr = int((self.color == RED).sum())
        return nw / n, nr / n, (n - nw - nr) / n


def _float_tables(rule) -> tuple[np.ndarray, np.ndarray]:
    """4x4 (red-prob, blue-prob) lookup tables indexed by (r, b)."""
    a_tab = np.zeros((4, 4))
    b_tab = np.zeros((4, 4))
    for cat in CATEGORIES:
        pw, pr, pb = rule.probs(cat)
        a_tab[cat.r, cat.b] = float(pr)
        b_tab[cat.r, cat.b] = float(pb)
    return a_tab, b_tab


def _seed_round(g: CubicGraph, s: Schedule, seed: int):
    """Round 1: every vertex decides independently from category (0,0)."""
    n = g.n
    color = np.zeros(n, dtype=np.uint8)
    pw, pr, pb = s.rule_at(1, (0, 0))
    u = rng.decision_uniform_array(seed, np.arange(n, dtype=np.int64), 1, 0)
    color[u < float(pr)] = RED
    color[(u >= float(pr)) & (u < float(pr) + float(pb))] = BLUE
    rcnt = (color[g.adj] == RED).sum(axis=1).astype(np.int16)
    bcnt = (color[g.adj] == BLUE).sum(axis=1).astype(np.int16)
    return color, rcnt, bcnt


def _apply_colorings(g, color, rcnt, bcnt, newly: np.ndarray) -> np.ndarray:
    """Update neighbor counts; return white vertices adjacent to recolorings."""
    if newly.size == 0:
        return newly
    new_red = newly[color[newly] == RED]
    new_blue = newly[color[newly] == BLUE]
    if new_red.size:
        np.add.at(rcnt, g.adj[new_red].ravel(), 1)
    if new_blue.size:
        np.add.at(bcnt, g.adj[new_blue].ravel(), 1)
    affected = np.unique(g.adj[newly].ravel())
    return affected[color[affected] == WHITE]


def _debug_checks(g, color, rcnt, bcnt, prev_color, k):
    recolored = (prev_color != color) & (prev_color != WHITE)
    if recolored.any():
        raise AssertionError(f"round {k}: a colored vertex changed color")
    rc = (color[g.adj] == RED).sum(axis=1)
    bc = (color[g.adj] == BLUE).sum(axis=1)
    if not (rc == rcnt).all() or not (bc == bcnt).all():
        raise AssertionError(f"round {k}: incremental neighbor counts diverged")


def _run_naive(g: CubicGraph, s: Schedule, seed: int, debug: bool) -> SimState:
    color, rcnt, bcnt = _seed_round(g, s, seed)
    for k in range(2, s.K + 1):
        a_tab, b_tab = _float_tables(s.segment_at(k).rule)
        whites = np.nonzero(color == WHITE)[0]
        a = a_tab[rcnt[whites], bcnt[whites]]
        b = b_tab[rcnt[whites], bcnt[whites]]
        act = (a + b) > 0.0
        ids = whites[act]
        if not ids.size:
            continue
        u = rng.decision_uniform_array(seed, ids.astype(np.int64), k, 0)
        a, b = a[act], b[act]
        to_red = u < a
        to_blue = (~to_red) & (u < a + b)
        prev = color.copy() if debug else None
        color[ids[to_red]] = RED
        color[ids[to_blue]] = BLUE
        _apply_colorings(g, color, rcnt, bcnt, ids[to_red | to_blue])
        if debug:
            _debug_checks(g, color, rcnt, bcnt, prev, k)
    return SimState(k=s.K, color=color, rcnt=rcnt, bcnt=bcnt, seed=seed,
                    mode="naive", graph=g, schedule=s)


def _run_event(g: CubicGraph, s: Schedule, seed: int, debug: bool) -> SimState:
    color, rcnt, bcnt = _seed_round(g, s, seed)
    n, K = g.n, s.K
    stamp = np.full(n, -1, dtype=np.int64)
    buckets: dict[int, list] = defaultdict(list)
    segments = sorted(s.segments, key=lambda sg: sg.k_lo)
    tables = [_float_tables(sg.rule) for sg in segments]

    def resample(v: int, cur: int, a: float, b: float, s_time: int, s_color: int):
        """(Re)sample v's firing event; always refreshes the staleness stamp."""
        stamp[v] = cur
        q = a + b
        if q <= 0.0:
            return
        if q >= 1.0:
            t = cur + 1
        else:
            u = ((rng.decision_u64(seed, v, cur, s_time) >> 11) + 1) * 2.0 ** -53
            t = cur + 1 + int(math.log(u) / math.log1p(-q))
        if t > K:
            return
        u2 = (rng.decision_u64(seed, v, cur, s_color) >> 11) * 2.0 ** -53
        buckets[t].append((v, RED if u2 * q < a else BLUE, cur))

    if K >= 2:
        seg_i = next(i for i, sg in enumerate(segments) if sg.k_lo <= 2 <= sg.k_hi)
        a_tab, b_tab = tables[seg_i]

        # initial (vectorized) scheduling of all non-inert whites
        whites = np.nonzero(color == WHITE)[0]
        stamp[whites] = 1
        a = a_tab[rcnt[whites], bcnt[whites]]
        b = b_tab[rcnt[whites], bcnt[whites]]
        q = a + b
        act = q > 0.0
        ids = whites[act]
        if ids.size:
            av, qv = a[act], q[act]
            h1 = rng.decision_u64_array(seed, ids.astype(np.int64), 1, 1)
            u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
            safe_q = np.minimum(qv, 1.0 - 1e-12)
            t = np.where(qv >= 1.0, 2.0,
                         2.0 + np.floor(np.log(u1) / np.log1p(-safe_q)))
            h2 = rng.decision_u64_array(seed, ids.astype(np.int64), 1, 2)
            u2 = (h2 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
            cols = np.where(u2 * qv < av, RED, BLUE)
            for v, tv, cv in zip(ids.tolist(), t.tolist(), cols.tolist()):
                if tv <= K:
                    buckets[int(tv)].append((v, int(cv), 1))

        boundary = {segments[i].k_lo: i for i in range(len(segments))
                    if segments[i].k_lo > 2}

        for k in range(2, K + 1):
            if k in boundary:
                i = boundary[k]
                prev_a, prev_b = a_tab, b_tab
                a_tab, b_tab = tables[i]
                ch = (a_tab != prev_a) | (b_tab != prev_b)
                if ch.any():
                    whites = np.nonzero(color == WHITE)[0]
                    hit = whites[ch[rcnt[whites], bcnt[whites]]]
                    for v in hit.tolist():
                        resample(v, k - 1, float(a_tab[rcnt[v], bcnt[v]]),
                                 float(b_tab[rcnt[v], bcnt[v]]), 4, 5)
            evs = buckets.pop(k, None)
            if not evs:
                continue
            prev = color.copy() if debug else None
            newly = [v for v, col, st0 in evs
                     if color[v] == WHITE and stamp[v] == st0]
            for v, col, st0 in evs:
                if color[v] == WHITE and stamp[v] == st0:
                    color[v] = col
            affected = _apply_colorings(g, color, rcnt, bcnt,
                                        np.asarray(newly, dtype=np.int64))
            for v in affected.tolist():
                resample(v, k, float(a_tab[rcnt[v], bcnt[v]]),
                         float(b_tab[rcnt[v], bcnt[v]]), 1, 2)
            if debug:
                _debug_checks(g, color, rcnt, bcnt, prev, k)
    return SimState(k=K, color=color, rcnt=rcnt, bcnt=bcnt, seed=seed,
                    mode="event", graph=g, schedule=s)


def run_procedure(g: CubicGraph, s: Schedule, seed: int, mode: str = "auto",
                  debug: bool = False) -> SimState:
    """Execute the K synchronous recoloring rounds on a graph.

    ``mode`` picks the naive per-round sweep or the event-driven fast path
    ("auto" chooses by schedule length); both sample the same process.
    """
    problems = s.validate()
    if problems:
        raise ValueError("invalid schedule: " + "; ".join(problems))
    if mode == "auto":
        mode = "event" if s.K > 64 else "naive"
    if mode == "naive":
        return _run_naive(g, s, seed, debug)
    if mode == "event":
        return _run_event(g, s, seed, debug)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class CutResult:
    red_blue_edges: int
    final_cut_size: int
    side_x: int              # |X|: the red side after white assignment
    side_y: int
    per_edge_fraction: float
    per_vertex_fraction: float
    white_residual: int


def extract_cut(st: SimState, policy: str = "greedy") -> CutResult:
    """Cut defined by the red side, residual whites assigned per policy.

    ``greedy``: in vertex order, each white vertex joins the side opposite
    the majority among its already-assigned neighbors (ties to blue).
    ``all-blue``: every residual white joins the blue side.  Either way the
    red-blue edges fixed by the procedure stay in the cut.
    """
    if policy not in ("greedy", "all-blue"):
        raise ValueError(f"unknown policy {policy!r}")
    g = st.graph
    color = st.color
    eu, ev = g.edge_endpoints()
    cu, cv = color[eu], color[ev]
    rb = int((((cu == RED) & (cv == BLUE)) | ((cu == BLUE) & (cv == RED))).sum())

    on_red = color == RED
    whites = np.nonzero(color == WHITE)[0]
    if policy == "greedy" and whites.size:
        assigned = color != WHITE
        adj = g.adj
        for v in whites.tolist():
            nb = adj[v]
            asg = assigned[nb]
            reds = int((on_red[nb] & asg).sum())
            blues = int(asg.sum()) - reds
            on_red[v] = blues > reds
            assigned[v] = True
    final_cut = int((on_red[eu] != on_red[ev]).sum())
    side_x = int(on_red.sum())
    return CutResult(
        red_blue_edges=rb,
        final_cut_size=final_cut,
        side_x=side_x,
        side_y=g.n - side_x,
        per_edge_fraction=rb / g.m,
        per_vertex_fraction=final_cut / g.n,
        white_residual=int(whites.size),
    )


# -- sampling harness --------------------------------------------------------


@dataclass(frozen=True)
class EstimateRow:
    seed: int
    n: int
    red_blue_edges: int
    final_cut_size: int
    per_edge_fraction: float
    per_vertex_fraction: float
    white_residual: int
    white_fraction: float
    red_fraction: float
    blue_fraction: float


@dataclass(frozen=True)
class EstimateSummary:
    samples: int
    n: int
    mean_per_edge: float
    std_per_edge: float | None
    ci99_per_edge: tuple[float, float] | None
    mean_per_vertex: float
    std_per_vertex: float | None
    ci99_per_vertex: tuple[float, float] | None
    mean_white: float
    mean_red: float
    mean_blue: float
    ci_defined: bool


def _one_sample(args) -> EstimateRow:
    s, n, seed, policy, mode = args
    g = gen_cubic(n, seed)
    st = run_procedure(g, s, seed, mode=mode)
    cut = extract_cut(st, policy)
    wf, rf, bf = st.color_fractions()
    return EstimateRow(seed=seed, n=n, red_blue_edges=cut.red_blue_edges,
                       final_cut_size=cut.final_cut_size,
                       per_edge_fraction=cut.per_edge_fraction,
                       per_vertex_fraction=cut.per_vertex_fraction,
                       white_residual=cut.white_residual,
                       white_fraction=wf, red_fraction=rf, blue_fraction=bf)


def _mean_std(xs: list[float]) -> tuple[float, float | None]:
    mean = sum(xs) / len(xs)
    if len(xs) < 2:
        return mean, None
    var = sum((x - mean) ** 2 for x in xs) / (len(xs) - 1)
    return mean, math.sqrt(var)


_Z99 = 2.5758293035489004  # two-sided normal 99% quantile


def _ci(mean: float, std: float | None, k: int):
    if std is None:
        return None
    half = _Z99 * std / math.sqrt(k)
    return (mean - half, mean + half)


def worker_count(requested: int | None = None) -> int:
    """Parallelism cap: explicit argument, else GIRTHCUT_THREADS, else CPUs."""
    if requested is not None and requested > 0:
        return requested
    env = os.environ.get("GIRTHCUT_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return os.cpu_count() or 1


def estimate(s: Schedule, n: int, samples: int, seed: int,
             policy: str = "greedy", mode: str = "auto",
             workers: int | None = None
             ) -> tuple[list[EstimateRow], EstimateSummary]:
    """Independent procedure runs on fresh random graphs, with summary stats.

    Per-sample seeds derive from the root seed; samples fan out over a
    process pool capped by ``workers`` (or GIRTHCUT_THREADS).  The 99%
    confidence intervals use the normal approximation and are undefined
    (None, with ``ci_defined`` False) for a single sample.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    tasks = [(s, n, rng.derive_seed(seed, i), policy, mode)
             for i in range(samples)]
    nw = min(worker_count(workers), samples)
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            rows = list(ex.map(_one_sample, tasks))
    else:
        rows = [_one_sample(t) for t in tasks]

    pe = [r.per_edge_fraction for r in rows]
    pv = [r.per_vertex_fraction for r in rows]
    mean_pe, std_pe = _mean_std(pe)
    mean_pv, std_pv = _mean_std(pv)
    summary = EstimateSummary(
        samples=samples, n=n,
        mean_per_edge=mean_pe, std_per_edge=std_pe,
        ci99_per_edge=_ci(mean_pe, std_pe, samples),
        mean_per_vertex=mean_pv, std_per_vertex=std_pv,
        ci99_per_vertex=_ci(mean_pv, std_pv, samples),
        mean_white=sum(r.white_fraction for r in rows) / samples,
        mean_red=sum(r.red_fraction for r in rows) / samples,
        mean_blue=sum(r.blue_fraction for r in rows) / samples,
        ci_defined=std_pe is not None,
    )
    return rows, summary
