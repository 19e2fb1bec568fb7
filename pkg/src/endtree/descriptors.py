"""Symbolic vertex sets over a presentation.

Supported descriptor classes: explicit finite sets, regular skeleton
sets (a word automaton over child symbols, run against the shape), top
subsets of a family, component regions, and finite unions of these.
Every descriptor answers membership exactly; boundary() produces the
closed end set of its accumulation ends.
"""

from __future__ import annotations

from dataclasses import dataclass

from .automata import Automaton
from .branches import End
from .errors import UnsupportedError
from .presentation import ComponentDescriptor, GraphPresentation, Top, truncate


class VertexSet:
    """Base class: a decidable set of vertices of a presented graph."""

    def contains(self, v):
        raise NotImplementedError

    def parts(self):
        return [self]

    def union(self, other):
        mine = self.parts()
        theirs = other.parts()
        return UnionSet(tuple(mine + [q for q in theirs if q not in mine]))

    def boundary_automaton(self):
        """Safety automaton (over shape symbols) of the set's end
        accumulation points."""
        raise NotImplementedError

    def enumerate_in(self, tr):
        """Members among the vertices of a truncation (for oracles)."""
        return sorted(
            (v for v in tr.vertices if self.contains(v)),
            key=_vkey,
        )

    def skeleton_automaton(self):
        """Word automaton for the skeleton part, when regular."""
        raise UnsupportedError(f"{type(self).__name__} has no regular skeleton form")

    def top_members_explicit(self):
        """Explicit list of top members, when finitely enumerable."""
        return []


def _vkey(v):
    if isinstance(v, Top):
        return (1, v.family, v.index, v.copy)
    return (0, len(v), tuple(v))


@dataclass(frozen=True)
class FiniteVertexSet(VertexSet):
    presentation: GraphPresentation
    members: frozenset

    @staticmethod
    def of(p, items):
        return FiniteVertexSet(p, frozenset(_norm(v) for v in items))

    def contains(self, v):
        return _norm(v) in self.members

    def boundary_automaton(self):
        from .automata import empty

        return empty()

    def skeleton_automaton(self):
        words = [tuple(v) for v in self.members if not isinstance(v, Top)]
        return trie_automaton(words)

    def top_members_explicit(self):
        return sorted(
            (v for v in self.members if isinstance(v, Top)),
            key=_vkey,
        )

    def __str__(self):
        names = ", ".join(str(v) if isinstance(v, Top) else _addr_str(v) for v in sorted(self.members, key=_vkey))
        return "{" + names + "}"


def _addr_str(a):
    from .branches import word_str

    return word_str(tuple(a))


def _norm(v):
    if isinstance(v, Top):
        return v
    return tuple(v)


@dataclass(frozen=True)
class RegularVertexSet(VertexSet):
    """Skeleton vertices whose address the automaton accepts (invalid
    addresses are never members: the automaton is intersected with the
    shape on construction)."""

    presentation: GraphPresentation
    automaton: Automaton

    @staticmethod
    def of(p, aut):
        return RegularVertexSet(p, p.shape.product(aut, finals=lambda a, b: b in aut.finals)[0].trim_words())

    def contains(self, v):
        if isinstance(v, Top):
            return False
        return self.automaton.accepts_word(tuple(v))

    def skeleton_automaton(self):
        return self.automaton

    def boundary_automaton(self):
        return limit_branches(self.presentation, self.automaton)

    def is_empty(self):
        return self.automaton.shortest_accepted() is None

    def is_infinite(self):
        return word_language_infinite(self.automaton)

    def __str__(self):
        return f"regular[{self.automaton.n} states]"


@dataclass(frozen=True)
class TopSet(VertexSet):
    """Tops of one family: all of them, or an explicit subset."""

    presentation: GraphPresentation
    family: str
    which: object = "all"  # "all" | frozenset of Top

    def contains(self, v):
        if not isinstance(v, Top) or v.family != self.family:
            return False
        fam = self.presentation.family(self.family)
        if v.copy >= fam.count:
            return False
        if self.which == "all":
            if fam.indices == "single":
                return v.index == ()
            if isinstance(fam.indices, tuple):
                return v.index in fam.indices
            return self.presentation.valid_address(v.index)
        return v in self.which

    def boundary_automaton(self):
        """Ends accumulating tops of this set.

        An end accumulates tops iff arbitrarily long prefixes of it are
        extended by branches of set members, with the usual isolated-
        branch caveat: a branch carrying only finitely many members and
        isolated among the member branches is not in the boundary.  For
        an explicit subset the member branches form a finite set, so
        the boundary is empty; for a whole "all"-indexed family every
        valid address extends to a member branch, so the closure is the
        whole branch space, and the boundary is the branch space when
        the tail is purely periodic (every branch then carries
        infinitely many members) and its derived space otherwise."""
        from .automata import empty

        fam = self.presentation.family(self.family)
        if self.which != "all" or fam.indices != "all":
            return empty()
        shape_all = self.presentation.shape.trim_safety()
        if not fam.tail.prefix:
            return shape_all
        from .cbrank import derivative_automaton

        return derivative_automaton(shape_all)

    def skeleton_automaton(self):
        from .automata import empty

        return empty()

    def top_members_explicit(self):
        fam = self.presentation.family(self.family)
        if self.which != "all":
            return sorted(self.which, key=_vkey)
        if fam.indices == "single":
            return [Top(self.family, (), c) for c in range(fam.count)]
        if isinstance(fam.indices, tuple):
            return sorted(
                (Top(self.family, w, c) for w in fam.indices for c in range(fam.count)),
                key=_vkey,
            )
        raise UnsupportedError("family over all indices is not finitely enumerable")

    def __str__(self):
        if self.which == "all":
            return f"tops[{self.family}]"
        return "{" + ", ".join(str(t) for t in sorted(self.which, key=_vkey)) + "}"


@dataclass(frozen=True)
class RegionSet(VertexSet):
    """The vertex set of a component descriptor."""

    presentation: GraphPresentation
    component: ComponentDescriptor

    def contains(self, v):
        return self.component.contains_vertex(v)

    def skeleton_automaton(self):
        c = self.component
        words = [tuple(v) for v in c.core if not isinstance(v, Top)]
        aut = trie_automaton(words)
        for f in sorted(c.subtree_prefixes):
            aut = aut.union_words(subtree_automaton(self.presentation, f))
        rules = set(c.residual_rules)
        if c.family is not None:
            rules.add(c.family)
        for parent, from_symbol, modulus, residue in sorted(rules):
            aut = aut.union_words(
                residual_subtree_automaton(self.presentation, parent, from_symbol, modulus, residue)
            )
        shape = self.presentation.shape
        return shape.product(aut, finals=lambda a, b: b in aut.finals)[0].trim_words()

    def boundary_automaton(self):
        # components carry whole subtrees, so their accumulation ends
        # are the limit branches of the regular skeleton part
        return limit_branches(self.presentation, self.skeleton_automaton())

    def __str__(self):
        c = self.component
        return f"region[core={len(c.core)}, subtrees={len(c.subtree_prefixes)}]"


@dataclass(frozen=True)
class UnionSet(VertexSet):
    members: tuple

    def parts(self):
        return list(self.members)

    def contains(self, v):
        return any(m.contains(v) for m in self.members)

    def boundary_automaton(self):
        auts = [m.boundary_automaton() for m in self.members]
        out = auts[0]
        for a in auts[1:]:
            out = safety_union(out, a)
        return out.trim_safety()

    def skeleton_automaton(self):
        out = None
        for m in self.members:
            aut = m.skeleton_automaton()
            out = aut if out is None else out.union_words(aut)
        return out if out is not None else trie_automaton([])

    def top_members_explicit(self):
        out = []
        for m in self.members:
            out.extend(m.top_members_explicit())
        return sorted(set(out), key=_vkey)

    def __str__(self):
        return " u ".join(str(m) for m in self.members)


# -- constructions -------------------------------------------------------------


def trie_automaton(words):
    """Word automaton accepting exactly the given finite set."""
    words = sorted(set(tuple(w) for w in words))
    index = {(): 0}
    trans = {}
    finals = set()
    for w in words:
        for i in range(len(w)):
            pre, nxt = w[:i], w[: i + 1]
            if nxt not in index:
                index[nxt] = len(index)
            trans[(index[pre], w[i])] = index[nxt]
        finals.add(index[w])
    return Automaton(len(index), 0, trans, {}, frozenset(finals))


def subtree_automaton(p, prefix):
    """Accepts every valid address extending `prefix` (inclusive)."""
    from .automata import OmegaRule

    n = len(prefix)
    trans = {(i, s): i + 1 for i, s in enumerate(prefix)}
    omega = {n: OmegaRule(0, (n,))}
    aut = Automaton(n + 1, 0, trans, omega, frozenset([n]))
    return p.shape.product(aut, finals=lambda a, b: b in aut.finals)[0].trim_words()


def residual_subtree_automaton(p, parent, from_symbol, modulus, residue):
    """Accepts addresses strictly under `parent` whose child symbol is
    >= from_symbol with the given residue."""
    from .automata import OmegaRule

    n = len(parent)
    trans = {(i, s): i + 1 for i, s in enumerate(parent)}
    cyc = [None] * modulus
    cyc[residue] = n + 1
    omega = {n: OmegaRule(from_symbol, tuple(cyc)), n + 1: OmegaRule(0, (n + 1,))}
    aut = Automaton(n + 2, 0, trans, omega, frozenset([n + 1]))
    return p.shape.product(aut, finals=lambda a, b: b in aut.finals)[0].trim_words()


def safety_of_words(p, aut):
    """Branches all of whose prefixes the word automaton accepts."""
    prod, _ = p.shape.product(aut, finals=lambda a, b: b in aut.finals)
    keep = {q for q in range(prod.n) if q in prod.finals}
    # restrict to runs through accepting pairs only
    trans = {k: t for k, t in prod.trans.items() if k[0] in keep and t in keep}
    omega = {}
    for q, rule in prod.omega.items():
        if q in keep:
            cyc = tuple(t if (t in keep) else None for t in rule.cycle)
            if any(c is not None for c in cyc):
                omega[q] = type(rule)(rule.threshold, cyc)
    if prod.initial not in keep:
        from .automata import empty

        return empty()
    return Automaton(prod.n, prod.initial, trans, omega, None).trim_safety()


def limit_branches(p, aut):
    """Safety automaton of the boundary of a regular skeleton set: the
    branches all of whose prefixes extend to an accepted address."""
    prod2, labels = p.shape.product(
        aut, finals=lambda a, b: b is not None and b in aut.finals, track="b"
    )
    # states co-reachable to a final pair
    pred = {q: set() for q in range(prod2.n)}
    for q in range(prod2.n):
        for t in prod2.successors(q):
            pred[t].add(q)
    co = set(prod2.finals)
    stack = list(co)
    while stack:
        q = stack.pop()
        for r in pred[q]:
            if r not in co:
                co.add(r)
                stack.append(r)
    if prod2.initial not in co:
        from .automata import empty

        return empty()
    trans = {k: t for k, t in prod2.trans.items() if k[0] in co and t in co}
    omega = {}
    for q, rule in prod2.omega.items():
        if q in co:
            cyc = tuple(t if t in co else None for t in rule.cycle)
            if any(c is not None for c in cyc):
                omega[q] = type(rule)(rule.threshold, cyc)
    return Automaton(prod2.n, prod2.initial, trans, omega, None).trim_safety()


def safety_union(a, b):
    """Safety automaton surviving where either input survives."""
    aut, _ = a.product(b, track="both")
    return aut.trim_safety()


def word_language_infinite(aut):
    """Does the trimmed word automaton accept infinitely many words?"""
    t = aut.trim_words()
    if t.shortest_accepted() is None:
        return False
    # infinite iff some state on a path to a final lies on a cycle, or
    # an omega rule fires on such a path (infinitely many symbols)
    for q in range(t.n):
        rule = t.omega.get(q)
        if rule is not None and rule.live_entries():
            return True
    color = {}

    def has_cycle(q):
        color[q] = 1
        for s in t.successors(q):
            c = color.get(s)
            if c == 1:
                return True
            if c is None and has_cycle(s):
                return True
        color[q] = 2
        return False

    return has_cycle(0)


def empty_set(p):
    return FiniteVertexSet(p, frozenset())


def vertex_set_difference(p, a, b):
    """The vertex set a minus b, as a descriptor union.

    Regular and finite skeleton parts subtract exactly via the word
    automata; explicit top members filter directly.  Whole top families
    over all indices are not supported as minuends."""
    regular = None
    tops = []
    for part in a.parts():
        if isinstance(part, (FiniteVertexSet, RegularVertexSet)):
            aut = part.skeleton_automaton()
            regular = aut if regular is None else regular.union_words(aut)
            tops.extend(t for t in part.top_members_explicit())
        elif isinstance(part, TopSet):
            tops.extend(part.top_members_explicit())
        elif isinstance(part, RegionSet):
            regular_part = part.skeleton_automaton()
            regular = regular_part if regular is None else regular.union_words(regular_part)
        else:
            raise UnsupportedError(f"difference minuend {type(part).__name__}")
    out_parts = []
    if regular is not None:
        b_aut = b.skeleton_automaton()
        out_parts.append(RegularVertexSet.of(p, regular.minus_words(b_aut)))
    left = [t for t in tops if not b.contains(t)]
    if left:
        out_parts.append(FiniteVertexSet(p, frozenset(left)))
    if not out_parts:
        return empty_set(p)
    out = out_parts[0]
    for q in out_parts[1:]:
        out = out.union(q)
    return out


def branch_prefixes_automaton(end, min_depth=0):
    """Accepts exactly the prefixes of the branch at depth >=
    min_depth.  States are branch positions, wrapping once past both
    the prefix and the depth threshold."""
    pre, cyc = end.prefix, end.cycle
    wrap_at = max(min_depth, len(pre))
    states = wrap_at + len(cyc)
    trans = {}
    for k in range(states):
        nxt = k + 1
        if nxt == states:
            nxt = wrap_at
        trans[(k, end.symbol(k))] = nxt
    finals = frozenset(k for k in range(states) if k >= min_depth)
    return Automaton(states, 0, trans, {}, finals)


def branch_prefixes_set(p, end, min_depth=0):
    """The vertices on a branch at depth >= min_depth, as a regular set."""
    return RegularVertexSet.of(p, branch_prefixes_automaton(end, min_depth))
