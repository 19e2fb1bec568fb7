"""Cantor-Bendixson machinery on end-set recognizers.

Derivatives are computed by state annotation: a state whose reachable
live part has exactly one live option per state forces its whole
continuation, so the branches through it are isolated; removing those
states and trimming yields the derived set, already trimmed.  The
iteration empties out within |states| rounds or stabilises on a
perfect kernel, witnessed by a state with two distinct return words.
"""

from __future__ import annotations

from dataclasses import dataclass

from .automata import Automaton, empty
from .branches import End, word_str
from .endspace import EndSetRecognizer, all_ends, boundary
from .errors import InvariantError
from .presentation import GraphPresentation, truncate


# -- derivative on raw automata -------------------------------------------------


def forced_states(aut):
    return aut.unique_continuation_states()


def derivative_automaton(aut):
    """Safety automaton of the branches avoiding every forced state."""
    t = aut.trim_safety()
    if t.is_empty_safety():
        return empty()
    forced = forced_states(t)
    keep = set(range(t.n)) - set(forced)
    if t.initial not in keep:
        return empty()
    trans = {k: v for k, v in t.trans.items() if k[0] in keep and v in keep}
    omega = {}
    for q, rule in t.omega.items():
        if q in keep:
            cyc = tuple(c if c in keep else None for c in rule.cycle)
            if any(c is not None for c in cyc):
                omega[q] = type(rule)(rule.threshold, cyc)
    return Automaton(t.n, t.initial, trans, omega, None).trim_safety()


def isolated_points_automaton(aut):
    """Reach-mode automaton: branches with a prefix entering a forced
    state (their cylinders contain no other member)."""
    t = aut.trim_safety()
    forced = forced_states(t)
    return Automaton(t.n, t.initial, t.trans, t.omega, frozenset(forced))


@dataclass(frozen=True)
class PerfectKernelWitness:
    """A state with two distinct live return words: it pumps to an
    embedded copy of the full binary branch space."""

    access: tuple
    loop_a: tuple
    loop_b: tuple

    def __str__(self):
        return (
            f"perfect kernel: access {word_str(self.access)}, "
            f"loops {word_str(self.loop_a)} | {word_str(self.loop_b)}"
        )

    def validate(self, aut):
        t = aut.trim_safety()
        q = t.run(self.access)
        if q is None:
            return False
        if self.loop_a == self.loop_b:
            return False
        return t.run(self.loop_a, start=q) == q and t.run(self.loop_b, start=q) == q


def perfect_witness(aut):
    """A witness on a trimmed automaton every state of which lies in
    the perfect kernel (derivative fixpoint)."""
    t = aut.trim_safety()
    if t.is_empty_safety():
        raise InvariantError("empty automaton has no perfect kernel")
    # bottom strongly connected component of the live graph: no edges
    # leave it, so all its transitions are live and stay inside
    _order, comp = _tarjan(t)
    bottom = None
    for c in comp:
        cset = set(c)
        if all(s in cset for q in c for s in t.successors(q)):
            bottom = c
            break
    if bottom is None:
        bottom = comp[-1]
    cset = set(bottom)
    branch_state = None
    for q in sorted(bottom):
        opts = [(s, tg) for (s, tg) in t.out_edges(q) if tg in cset]
        if len(opts) >= 2:
            branch_state = (q, opts[0], opts[1])
            break
    if branch_state is None:
        raise InvariantError("kernel has no branching state; set is not perfect")
    q, (s1, t1), (s2, t2) = branch_state
    access = _bfs_word(t, t.initial, q)
    w1 = (s1,) + _bfs_word(t, t1, q, within=cset)
    w2 = (s2,) + _bfs_word(t, t2, q, within=cset)
    return PerfectKernelWitness(access, w1, w2)


def _tarjan(aut):
    """SCCs of the live transition graph, in reverse topological order."""
    live = aut.live_states()
    index = {}
    low = {}
    stack = []
    onstack = set()
    out = []
    counter = [0]

    def strongconnect(v):
        work = [(v, iter(sorted(aut.successors(v))))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        onstack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in live:
                    continue
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    onstack.add(w)
                    work.append((w, iter(sorted(aut.successors(w)))))
                    advanced = True
                    break
                elif w in onstack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                scc = []
                while True:
                    w = stack.pop()
                    onstack.discard(w)
                    scc.append(w)
                    if w == node:
                        break
                out.append(sorted(scc))

    for v in sorted(live):
        if v not in index:
            strongconnect(v)
    return index, out


def _bfs_word(aut, src, dst, within=None):
    if src == dst:
        return ()
    from collections import deque

    seen = {src: ()}
    queue = deque([src])
    while queue:
        q = queue.popleft()
        for s, t in aut.out_edges(q):
            if within is not None and t not in within:
                continue
            if t not in seen:
                seen[t] = seen[q] + (s,)
                if t == dst:
                    return seen[t]
                queue.append(t)
    raise InvariantError("no path found inside kernel")


# -- recognizer-level operations -------------------------------------------------


def isolated_points(a):
    """Members of `a` with a prefix no other member extends."""
    a._require_closed("isolated points")
    return EndSetRecognizer(a.presentation, isolated_points_automaton(a.automaton), mode="reach")


def derivative(a):
    a._require_closed("derivative")
    return EndSetRecognizer(a.presentation, derivative_automaton(a.automaton))


@dataclass(frozen=True)
class CBRank:
    kind: str  # "finite" | "perfect"
    rank: int = None
    witness: PerfectKernelWitness = None

    def is_scattered(self):
        return self.kind == "finite"

    def __str__(self):
        if self.kind == "finite":
            return f"FiniteRank({self.rank})"
        return f"NotScattered({self.witness})"


def cb_rank(a):
    """Iterate the derivative: least n with the n-th derived set empty,
    or a perfect-kernel witness when the iteration stabilises."""
    a._require_closed("rank")
    aut = a.automaton.trim_safety()
    states_bound = max(aut.n, 1)
    n = 0
    while True:
        if aut.is_empty_safety():
            if n > states_bound:
                raise InvariantError("rank exceeded the state bound")
            return CBRank("finite", rank=n)
        nxt = derivative_automaton(aut)
        if nxt.safety_equal(aut):
            return CBRank("perfect", witness=perfect_witness(aut))
        aut = nxt
        n += 1
        if n > states_bound + 1:
            raise InvariantError("derivative failed to shrink within the state bound")


# -- slenderness ------------------------------------------------------------------


@dataclass(frozen=True)
class SlenderVerdict:
    slender: bool
    rank: int = None
    witness: PerfectKernelWitness = None

    def __bool__(self):
        return self.slender

    def __str__(self):
        if self.slender:
            return f"slender, rank {self.rank}"
        return f"not slender ({self.witness})"


def is_slender(p, u):
    """Is the closure of the vertex set u scattered of finite rank?

    The closure is u plus its boundary; vertices are isolated in the
    whole space and every boundary end accumulates vertices of u, so
    the first derivative removes exactly the vertices and the remaining
    iteration is the rank of the boundary end set."""
    b = boundary(p, u)
    r = cb_rank(b)
    if r.kind == "perfect":
        return SlenderVerdict(False, witness=r.witness)
    empty_vertex_part = _vertex_part_empty(p, u)
    rank = r.rank if empty_vertex_part else r.rank + 1
    return SlenderVerdict(True, rank=rank)


def _vertex_part_empty(p, u):
    from .descriptors import FiniteVertexSet, RegularVertexSet, TopSet, UnionSet

    for part in u.parts():
        if isinstance(part, FiniteVertexSet):
            if part.members:
                return False
        elif isinstance(part, RegularVertexSet):
            if not part.is_empty():
                return False
        else:
            return False
    return True


# -- multi-product emptiness helper ------------------------------------------------


def exists_branch(safeties, escapes):
    """Is there a branch surviving every automaton in `safeties` and
    escaping (dying in) every automaton in `escapes`?  Returns a
    witness End or None."""
    chain = safeties[0].trim_safety()
    for s in safeties[1:]:
        chain = chain.intersect(s)
    if chain.is_empty_safety():
        return None
    depth = 0
    labels_stack = []
    for e in escapes:
        chain, labels = chain.product(e, track="b")
        labels_stack.append(labels)
        depth += 1

    def escapes_dead(i):
        # decode the chained pair labels: innermost first
        dead = True
        for labels in reversed(labels_stack):
            pair = labels[i]
            i_inner, e_state = pair
            if e_state is not None:
                dead = False
            i = i_inner
        return dead

    live = chain.live_states()
    from collections import deque

    parents = {chain.initial: None}
    queue = deque([chain.initial])
    while queue:
        q = queue.popleft()
        if q in live and (not escapes or escapes_dead(q)):
            prefix = []
            j = q
            while parents[j] is not None:
                j, s = parents[j]
                prefix.append(s)
            prefix.reverse()
            # extend with any lasso from q
            lasso = _any_lasso(chain, q)
            return End.make(tuple(prefix) + lasso[0], lasso[1])
        for s, t in chain.out_edges(q):
            if t not in parents:
                parents[t] = (q, s)
                queue.append(t)
    return None


def _any_lasso(aut, q):
    live = aut.live_states()
    word = []
    seen = {}
    while q not in seen:
        seen[q] = len(word)
        s, t = next((s, t) for (s, t) in aut.out_edges(q) if t in live)
        word.append(s)
        q = t
    cut = seen[q]
    return tuple(word[:cut]), tuple(word[cut:])


def diff_closure(a, b):
    """Safety automaton of the closure of safety(a) minus safety(b):
    branches every prefix of which extends to a member of the
    difference."""
    at = a.trim_safety()
    if at.is_empty_safety():
        return empty()
    prod, labels = at.product(b, track="b")
    live_pairs = prod.live_states()
    good = {i for i in range(prod.n) if labels[i][1] is None and i in live_pairs}
    # states co-reachable to a good state can still exit into the diff
    pred = {q: set() for q in range(prod.n)}
    for q in range(prod.n):
        for t in prod.successors(q):
            pred[t].add(q)
    can = set(good)
    stack = list(good)
    while stack:
        q = stack.pop()
        for r in pred[q]:
            if r not in can:
                can.add(r)
                stack.append(r)
    if prod.initial not in can:
        return empty()
    trans = {k: t for k, t in prod.trans.items() if k[0] in can and t in can}
    omega = {}
    for q, rule in prod.omega.items():
        if q in can:
            cyc = tuple(t if t in can else None for t in rule.cycle)
            if any(c is not None for c in cyc):
                omega[q] = type(rule)(rule.threshold, cyc)
    return Automaton(prod.n, prod.initial, trans, omega, None).trim_safety()


# -- sigma-discrete expansions -----------------------------------------------------


class NotSlenderError(InvariantError):
    def __init__(self, level, witness):
        self.level = level
        self.witness = witness
        super().__init__(f"cover set {level} is not slender: {witness}")


@dataclass(frozen=True)
class ExpansionSlice:
    """One discrete piece: ends in safety(ends_a) minus safety(ends_b),
    plus (for the innermost layer of each level) the level's new
    vertices; vertices_cum carries the closure level's whole vertex
    part for the initial-union checks."""

    level: int
    layer: int
    ends_a: Automaton
    ends_b: Automaton
    vertices: object = None
    vertices_cum: object = None
    discrete_ok: bool = True
    initial_union_closed: bool = True

    def contains_end(self, end):
        return self.ends_a.branch_survives(end.prefix, end.cycle) and not self.ends_b.branch_survives(
            end.prefix, end.cycle
        )


@dataclass
class Expansion:
    presentation: GraphPresentation = None
    slices: list = None
    cover_rule: object = None
    levels: int = 0
    cover_checked_depth: int = None

    def all_checks_pass(self):
        return all(s.discrete_ok and s.initial_union_closed for s in self.slices)

    def report(self):
        lines = [
            f"sigma-discrete expansion: {len(self.slices)} slices "
            f"(cover levels 0..{self.levels - 1} materialized)"
        ]
        for s in self.slices:
            vs = "" if s.vertices is None else " +vertices"
            lines.append(
                f"  level {s.level} layer {s.layer}{vs}: "
                f"discrete={'ok' if s.discrete_ok else 'FAIL'} "
                f"initial-union-closed={'ok' if s.initial_union_closed else 'FAIL'}"
            )
        lines.append(f"cover verified on truncation depth {self.cover_checked_depth}")
        return "\n".join(lines)


def sigma_discrete_expansion(p, cover, levels=6, cover_check_depth=6):
    """Expand a slender cover into discrete slices with closed initial
    unions: close the cover sets up, take the difference layers of
    consecutive closures, and emit each layer's derivative slices from
    the deepest down, so every initial union is a closed set again.

    cover is a list of vertex sets or a rule n -> vertex set (an
    infinite cover given finitely); `levels` of it are materialized.
    Raises NotSlenderError (with the perfect-kernel witness) when a
    cover set is not slender."""
    if callable(cover):
        rule = cover
    else:
        cover = list(cover)
        levels = len(cover)
        rule = lambda n: cover[min(n, len(cover) - 1)]
    sets = [rule(n) for n in range(levels)]
    for n, u in enumerate(sets):
        v = is_slender(p, u)
        if not v:
            raise NotSlenderError(n, v.witness)
    # increasing closures X_n
    running = None
    x_vertex = []
    x_ends = []
    for u in sets:
        running = u if running is None else running.union(u)
        x_vertex.append(running)
        x_ends.append(boundary(p, running).automaton)
    tr = truncate(p, cover_check_depth)
    horizon = levels + 4 * cover_check_depth + 8
    for v in tr.vertices:
        covered = any(u.contains(v) for u in sets)
        n = levels
        while not covered and n < horizon:
            covered = rule(n).contains(v)
            n += 1
        if not covered:
            raise InvariantError(
                f"cover misses vertices up to depth {cover_check_depth} "
                f"within {horizon} levels, e.g. {v}"
            )
    from .descriptors import vertex_set_difference

    slices = []
    prev_ends = empty()
    prev_vertex = None
    for n, u in enumerate(sets):
        a_n = x_ends[n]
        b_n = prev_ends
        vdiff = (
            x_vertex[n]
            if prev_vertex is None
            else vertex_set_difference(p, x_vertex[n], prev_vertex)
        )
        layers = [a_n]  # layer i holds A_i with E_i = A_i minus b_n
        while True:
            e = layers[-1]
            clo = diff_closure(e, b_n)
            lim = derivative_automaton(clo)
            if len(layers) == 1:
                # the level's new vertices accumulate at some of its ends
                lim = _safety_union_raw(lim, vdiff.boundary_automaton())
            nxt = lim.intersect(e)
            if _diff_empty(nxt, b_n):
                break
            # equality at the first step only means the vertex part is
            # exhausted; from the second (pure-derivative) step on it
            # certifies a perfect part
            if len(layers) >= 2 and nxt.safety_equal(e):
                raise NotSlenderError(n, perfect_witness(nxt))
            layers.append(nxt)
            if len(layers) > 4 * (a_n.n + 2):
                raise InvariantError("layering failed to terminate")
        k = len(layers)
        for i in range(k - 1, -1, -1):
            upper = layers[i + 1] if i + 1 < k else empty()
            slices.append(
                ExpansionSlice(
                    level=n,
                    layer=i,
                    ends_a=layers[i],
                    ends_b=_safety_union_raw(b_n, upper),
                    vertices=vdiff if i == 0 else None,
                    vertices_cum=x_vertex[n] if i == 0 else None,
                )
            )
        prev_ends = a_n
        prev_vertex = x_vertex[n]
    expansion = Expansion(
        presentation=p,
        slices=slices,
        cover_rule=rule,
        levels=levels,
        cover_checked_depth=cover_check_depth,
    )
    _verify_expansion(p, expansion)
    return expansion


def _diff_empty(a, b):
    return exists_branch([a], [b]) is None


def _safety_union_raw(a, b):
    from .descriptors import safety_union

    return safety_union(a, b)


def _verify_expansion(p, expansion):
    """Mark each slice with its verified discreteness and the
    closedness of its initial union.

    The end part of any initial union is A_i together with everything
    below it, i.e. safety(ends_a) union safety(ends_b), which is closed
    outright; what needs checking is that the vertex parts emitted so
    far accumulate only inside it."""
    out = []
    union_vertex = None
    for s in expansion.slices:
        clo = diff_closure(s.ends_a, s.ends_b)
        lim = derivative_automaton(clo)
        if s.vertices is not None:
            lim = _safety_union_raw(lim, s.vertices.boundary_automaton())
        discrete_ok = exists_branch([lim, s.ends_a], [s.ends_b]) is None
        union_ends = _safety_union_raw(s.ends_a, s.ends_b)
        if s.vertices_cum is not None:
            union_vertex = s.vertices_cum
        closed_ok = True
        if union_vertex is not None:
            bnd = union_vertex.boundary_automaton()
            ok, _w = bnd.safety_subset_of(union_ends)
            closed_ok = ok
        out.append(
            ExpansionSlice(
                level=s.level,
                layer=s.layer,
                ends_a=s.ends_a,
                ends_b=s.ends_b,
                vertices=s.vertices,
                vertices_cum=s.vertices_cum,
                discrete_ok=discrete_ok,
                initial_union_closed=closed_ok,
            )
        )
    expansion.slices = out


# -- end rank ----------------------------------------------------------------------


@dataclass(frozen=True)
class EndRank:
    kind: str  # "finite" | "unranked"
    rank: int = None
    witness: PerfectKernelWitness = None

    def __str__(self):
        if self.kind == "finite":
            return f"FiniteRank({self.rank})"
        return f"NotRanked({self.witness})"


def end_rank(p):
    """The recursive rank of the end space: the rank of the branch
    space's recognizer, or a binary-subdivision witness when the space
    has a perfect part."""
    r = cb_rank(all_ends(p))
    if r.kind == "finite":
        return EndRank("finite", rank=r.rank)
    return EndRank("unranked", witness=r.witness)
