"""Symbolic ends, closed end-set recognizers, boundaries and domination.

The end space of a presented graph is the branch space of its shape
system: prefix cylinders generate the same topology as the graph's own
end topology because chords join comparable vertices and every top
attaches along a single branch, so no finite separator ever merges
sibling subtrees.  Closed end sets are safety automata over child
symbols; open-ish sets produced by isolated-point marking use reach
semantics on the same machine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .automata import Automaton, empty
from .branches import End, word_str
from .descriptors import FiniteVertexSet, TopSet, UnionSet, VertexSet
from .errors import InvariantError, UnsupportedError
from .presentation import GraphPresentation, Top, truncate

# re-exported here because directions are an end-space notion
from .presentation import direction, components_without  # noqa: F401


@dataclass(frozen=True)
class EndSetRecognizer:
    """A set of ends recognized by a finite-state machine.

    mode "safety": the set of branches whose run never dies (always a
    closed set).  mode "reach": branches whose run survives and visits
    a final state (the form isolated-point sets take; not closed in
    general)."""

    presentation: GraphPresentation
    automaton: Automaton
    mode: str = "safety"

    def is_closed(self):
        return self.mode == "safety"

    def contains(self, end):
        if self.mode == "safety":
            return self.automaton.branch_survives(end.prefix, end.cycle)
        return self.automaton.branch_visits_final(end.prefix, end.cycle)

    def is_empty(self):
        if self.mode == "safety":
            return self.automaton.is_empty_safety()
        t = self.automaton.trim_safety()
        # reach mode: needs a live final state
        live = t.live_states()
        return not any(q in t.finals and q in live for q in range(t.n))

    def _require_closed(self, what):
        if self.mode != "safety":
            raise UnsupportedError(f"{what} needs a closed recognizer")

    def intersect(self, other):
        self._require_closed("intersection")
        other._require_closed("intersection")
        return EndSetRecognizer(self.presentation, self.automaton.intersect(other.automaton))

    def union(self, other):
        self._require_closed("union")
        other._require_closed("union")
        from .descriptors import safety_union

        return EndSetRecognizer(self.presentation, safety_union(self.automaton, other.automaton))

    def subset_of(self, other):
        self._require_closed("inclusion")
        other._require_closed("inclusion")
        ok, witness = self.automaton.safety_subset_of(other.automaton)
        return ok, witness

    def equals(self, other):
        a, _ = self.subset_of(other)
        if not a:
            return False
        b, _ = other.subset_of(self)
        return b

    def has_single_end(self):
        self._require_closed("single-branch test")
        return self.automaton.has_single_branch()

    def sample_ends(self, pre_len=3, cycle_len=2, omega_width=2):
        """Deterministic list of members with bounded description."""
        found = set()
        for e in enumerate_ends(self.presentation, pre_len, cycle_len, omega_width):
            if self.contains(e):
                found.add(e)
        return sorted(found)

    def explicit_ends(self, bound=64):
        """All members, when the set is finite; None when infinite.

        A trimmed safety set is finite iff no reachable state has two
        live options and no omega rule stays live (each state then
        forces the continuation)."""
        self._require_closed("explicit enumeration")
        t = self.automaton.trim_safety()
        if t.is_empty_safety():
            return []
        live = t.live_states()
        for q in range(t.n):
            if q not in live:
                continue
            rule = t.omega.get(q)
            if rule is not None and any(c in live for c in rule.live_entries()):
                return None
        # finitely branching: finite iff every accessible subtree of the
        # prefix tree eventually forces a single lasso; enumerate
        out = []
        stack = [((), t.initial)]
        while stack:
            word, q = stack.pop()
            if len(word) > bound:
                return None
            opts = [(s, tgt) for (s, tgt) in t.out_edges(q) if tgt in live]
            if t.live_option_count(q) == 1 or len(opts) == 1:
                # forced from here on: read off the lasso
                lasso_word = list(word)
                seen = {}
                qq = q
                while qq not in seen:
                    seen[qq] = len(lasso_word)
                    s, tgt = [(s, tg) for (s, tg) in t.out_edges(qq) if tg in live][0]
                    lasso_word.append(s)
                    qq = tgt
                cut = seen[qq]
                out.append(End.make(tuple(lasso_word[:cut]), tuple(lasso_word[cut:])))
                continue
            for s, tgt in sorted(opts):
                stack.append((word + (s,), tgt))
        return sorted(set(out))

    def dump(self, name="endset"):
        return self.automaton.dump(name=f"endset {name} mode={self.mode}")


def closed_set_from_automaton(p, aut):
    return EndSetRecognizer(p, aut.trim_safety())


def empty_end_set(p):
    return EndSetRecognizer(p, empty())


def all_ends(p):
    return EndSetRecognizer(p, p.shape.trim_safety())


def end_singleton(p, end):
    return ends_set(p, [end])


def ends_set(p, ends):
    """The closed set consisting of finitely many explicit ends."""
    from .descriptors import branch_prefixes_automaton, safety_union

    out = empty()
    for e in ends:
        if not p.valid_end(e):
            raise InvariantError(f"{e} is not a branch of the shape")
        aut = branch_prefixes_automaton(e)
        # safety along the branch: every state final already
        aut = Automaton(aut.n, aut.initial, aut.trans, aut.omega, None)
        out = safety_union(out, aut)
    return EndSetRecognizer(p, out.trim_safety())


def enumerate_ends(p, pre_len=3, cycle_len=2, omega_width=2):
    """All valid ends with canonical |prefix| <= pre_len and |cycle| <=
    cycle_len, symbols drawn from the per-state windows."""
    shape = p.shape
    found = set()
    for u in shape.words(pre_len, omega_width=omega_width):
        q = shape.run(u)
        for v in shape.words(cycle_len, omega_width=omega_width, start=q):
            if not v:
                continue
            if shape.branch_survives(u, v):
                e = End.make(u, v)
                if len(e.prefix) <= pre_len and len(e.cycle) <= cycle_len:
                    found.add(e)
    return sorted(found)


# -- boundaries ---------------------------------------------------------------


def boundary(p, u):
    """The closed end set of accumulation points of the vertex set u."""
    if not isinstance(u, VertexSet):
        raise UnsupportedError(f"unsupported descriptor class {type(u).__name__}")
    return EndSetRecognizer(p, u.boundary_automaton().trim_safety())


def closure_end_part(p, u, end_part=None):
    """closure(u ∪ end_part) ∩ Omega = boundary(u) ∪ end_part."""
    b = boundary(p, u)
    if end_part is None:
        return b
    end_part._require_closed("closure")
    return b.union(end_part)


def in_closure(p, x, vertex_part, end_part=None):
    """Membership of a vertex or end in the closure of a set of
    vertices and ends (vertices are isolated points, so the closure
    adds only ends)."""
    if isinstance(x, End):
        if end_part is not None and end_part.contains(x):
            return True
        return boundary(p, vertex_part).contains(x)
    return vertex_part.contains(x)


# -- domination ----------------------------------------------------------------


@dataclass(frozen=True)
class PredicateEndSet:
    """Membership-only end set given by a predicate; usable wherever
    classification just needs `contains` (e.g. the undominated ends,
    whose complement is the closed object)."""

    fn: object
    label: str = ""

    def contains(self, end):
        return bool(self.fn(end))


@dataclass(frozen=True)
class DominationVerdict:
    dominated: bool
    certificate: object = None  # Top when dominated
    reason: str = ""

    def __bool__(self):
        return self.dominated


def is_dominated(p, end):
    """Is the end dominated by some vertex?

    In this presentation class the only vertices of infinite fan toward
    a branch are tops sitting on that very branch: chords give every
    vertex at most one extra neighbour on the branch per rule, and any
    other vertex is separated from the branch's tail by the finitely
    many vertices below it, which bounds every disjoint path family.
    So the end is dominated iff some top's ray equals its branch."""
    if not p.valid_end(end):
        raise InvariantError(f"{end} is not a branch of the shape")
    for fam in p.tops:
        if fam.indices == "all":
            w = _index_matching(p, fam, end)
            if w is not None:
                return DominationVerdict(True, Top(fam.name, w, 0), f"family {fam.name} ray equals branch")
        else:
            for w in p._family_index_list(fam):
                if fam.branch(w) == end:
                    return DominationVerdict(True, Top(fam.name, tuple(w), 0), f"family {fam.name} ray equals branch")
    rules = len(p.chords)
    return DominationVerdict(
        False,
        None,
        f"no top ray equals the branch; chord rules add at most {rules} "
        "branch neighbours per vertex, so no infinite star exists",
    )


def _index_matching(p, fam, end):
    """Smallest index w with w.tail == end, for an all-indexed family."""
    horizon = len(end.prefix) + len(end.cycle) * max(len(fam.tail.cycle), 1) + len(fam.tail.prefix) + 2
    for k in range(horizon + 1):
        w = end.head(k)
        if not p.valid_address(w):
            break
        if End.make(w + fam.tail.prefix, fam.tail.cycle) == end:
            return w
    return None


def dominated_end_set(p, pre_len=4, cycle_len=3):
    """Explicitly dominated ends among the enumerable sample, as a
    closed set (tops have eventually periodic rays, so every dominated
    end has a bounded description once family tails are fixed)."""
    doms = []
    for fam in p.tops:
        if fam.indices in ("single",) or isinstance(fam.indices, tuple):
            for w in p._family_index_list(fam):
                doms.append(fam.branch(w))
    for e in enumerate_ends(p, pre_len, cycle_len):
        if e not in doms and is_dominated(p, e):
            doms.append(e)
    return ends_set(p, sorted(set(doms))) if doms else empty_end_set(p)


# -- star-comb search -----------------------------------------------------------


@dataclass(frozen=True)
class StarCertificate:
    center: object
    leaves: tuple
    paths: tuple

    def __str__(self):
        return f"star at {_vname(self.center)} with {len(self.leaves)} leaves"


@dataclass(frozen=True)
class CombCertificate:
    spine: tuple
    teeth: tuple
    paths: tuple

    def __str__(self):
        return f"comb with spine prefix {_vname(self.spine[-1])} and {len(self.teeth)} teeth"


@dataclass(frozen=True)
class Undetermined:
    depth: int
    detail: str = ""

    def __str__(self):
        return f"undetermined at depth {self.depth}: {self.detail}"


def _vname(v):
    if isinstance(v, Top):
        return str(v)
    return word_str(tuple(v)) if v else "root"


def star_or_comb(p, u, depth=10, k=8, spine_cap=64):
    """Search the depth-d truncation for a subdivided star with >= k
    leaves in u, then for a comb prefix with >= k teeth in u.  The
    infinite graph always contains one of the two; at finite depth the
    search may return Undetermined (with the bound) instead."""
    if isinstance(u, FiniteVertexSet):
        raise InvariantError("u must be infinite")
    if isinstance(u, UnionSet) and all(isinstance(m, FiniteVertexSet) for m in u.parts()):
        raise InvariantError("u must be infinite")
    tr = truncate(p, depth)
    adj = _adjacency(tr)
    members = [v for v in tr.vertices if u.contains(v)]
    member_set = set(members)
    if len(members) < k:
        return Undetermined(depth, f"only {len(members)} members of u visible")
    # star search: candidate centres need degree >= k
    for c in sorted(adj, key=_sort_key):
        if len(adj[c]) < k:
            continue
        paths = _disjoint_paths(adj, [c], member_set - {c}, k)
        if paths is not None:
            leaves = tuple(path[-1] for path in paths)
            return StarCertificate(c, leaves, tuple(tuple(x) if not isinstance(x, Top) else x for x in paths))
    # comb search: spines are tree paths from the root to frontier;
    # spine vertices already in u are trivial teeth
    frontier = sorted(tr.frontier)[:spine_cap]
    for f in frontier:
        spine = [f[:i] for i in range(len(f) + 1)]
        trivial = [v for v in spine if v in member_set]
        paths = [(v,) for v in trivial[:k]]
        missing = k - len(paths)
        if missing > 0:
            free_spine = [v for v in spine if v not in member_set]
            targets = member_set - set(spine)
            more = _disjoint_paths(adj, free_spine, targets, missing, spine_distinct=True)
            if more is None:
                continue
            paths.extend(more)
        teeth = tuple(path[-1] for path in paths)
        return CombCertificate(tuple(spine), teeth, tuple(tuple(p) for p in paths))
    return Undetermined(depth, f"no star or comb with {k} certificates found")


def _adjacency(tr):
    adj = {v: set() for v in tr.vertices}
    for (a, b) in tr.edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def _sort_key(v):
    if isinstance(v, Top):
        return (1, v.family, v.index, v.copy)
    return (0, len(v), v)


def _disjoint_paths(adj, sources, targets, k, spine_distinct=False):
    """k internally vertex-disjoint paths from the source set to
    distinct targets via unit-capacity augmentation; each source may be
    used once when spine_distinct (comb teeth attach at distinct spine
    vertices), and the single source arbitrarily often otherwise."""
    if not targets:
        return None
    used = set()
    used_sources = set()
    paths = []
    for _ in range(k):
        path = _augment(adj, sources, targets, used, used_sources, spine_distinct)
        if path is None:
            return None
        for v in path[1:]:
            used.add(v)
        if spine_distinct:
            used_sources.add(path[0])
        paths.append(tuple(path))
    return paths


def _augment(adj, sources, targets, used, used_sources, spine_distinct):
    from collections import deque

    start = [s for s in sources if not (spine_distinct and s in used_sources)]
    seen = set(start) | set(sources)
    queue = deque((s, (s,)) for s in start)
    while queue:
        v, path = queue.popleft()
        for w in sorted(adj[v], key=_sort_key):
            if w in seen or w in used:
                continue
            if w in targets:
                return path + (w,)
            seen.add(w)
            queue.append((w, path + (w,)))
    return None


# -- filtrations ---------------------------------------------------------------


@dataclass
class Filtration:
    """Increasing sequence of closed vertex-and-end sets, given by a
    decidable rule n -> (vertex set, closed end set)."""

    presentation: GraphPresentation
    rule: object
    name: str = ""
    induced_edges: bool = False
    _cache: dict = field(default_factory=dict)

    def level(self, n):
        if n not in self._cache:
            v, psi = self.rule(n)
            psi._require_closed(f"filtration level {n}")
            self._cache[n] = (v, psi)
        return self._cache[n]

    def end_level(self, n):
        return self.level(n)[1]

    def vertex_level(self, n):
        return self.level(n)[0]

    def check(self, upto=4, sample_depth=6):
        """Verify monotonicity and closedness for levels 0..upto."""
        problems = []
        p = self.presentation
        for n in range(upto + 1):
            v, psi = self.level(n)
            b = boundary(p, v)
            ok, witness = b.subset_of(psi)
            if not ok:
                problems.append(
                    f"level {n} not closed: boundary escapes end part at prefix {word_str(witness)}"
                )
            if n > 0:
                v0, psi0 = self.level(n - 1)
                ok, witness = psi0.subset_of(psi)
                if not ok:
                    problems.append(f"end parts not increasing at level {n}")
                tr = truncate(p, sample_depth)
                for vert in tr.vertices:
                    if v0.contains(vert) and not v.contains(vert):
                        problems.append(f"vertex parts not increasing at level {n}: {_vname(vert)}")
                        break
        return problems


def fsigma_vertices_to_graph(f):
    """Augment each level with the edges induced on its vertex part;
    the end parts are unchanged and closedness is re-verified (an edge
    set adds no accumulation points: inner edge points only close up at
    their endvertices, which are already present)."""
    out = Filtration(f.presentation, f.rule, name=f.name + "+edges", induced_edges=True)
    problems = out.check(upto=2)
    if problems:
        raise InvariantError("; ".join(problems))
    return out
