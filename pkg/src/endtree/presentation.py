"""Finite presentations of countably infinite graphs.

A presented graph consists of a tree skeleton generated by a
finite-state shape system, chord rules joining every vertex of a state
to a fixed ancestor, and top families: auxiliary vertices attached to
infinitely many vertices along one branch each.  The skeleton is a
normal spanning tree of the presented graph by construction, so the
ends of the graph are exactly the infinite branches of the shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .automata import Automaton, OmegaRule
from .branches import End, parse_end, parse_word, word_str
from .errors import InvariantError, ParseError, ResourceCapError

VERTEX_CAP = 2**20
SAMPLE_DEPTH = 64


@dataclass(frozen=True)
class ChordRule:
    """Every skeleton vertex in `state` is adjacent to its offset-th
    ancestor (fires only at depth >= offset)."""

    state: int
    offset: int


@dataclass(frozen=True)
class Top:
    """One top vertex: `copy`-th top of its family at index word."""

    family: str
    index: tuple
    copy: int = 0

    def __str__(self):
        c = f"#{self.copy}" if self.copy else ""
        return f"top:{self.family}[{word_str(self.index)}]{c}"


@dataclass(frozen=True)
class TopFamily:
    """Tops indexed by finite words; the top at index w sits on the
    branch w.tail and attaches at the rule's depths along it.

    indices is "single" (just the empty word), "all" (every valid
    address), or an explicit tuple of words.  attach is ("arith", a, d),
    ("list", depths) or ("fat",): the fat rule places the j-th
    attachment at the first vertex of the branch off the union of the
    first j+1 eventually constant branches in the fixed enumeration.
    """

    name: str
    tail: End
    indices: object = "single"
    count: int = 1
    attach: tuple = ("arith", 1, 1)

    def branch(self, index):
        return End.make(tuple(index) + self.tail.prefix, self.tail.cycle)


class GraphPresentation:
    """Validated finite presentation; immutable."""

    def __init__(self, shape, state_names, chords, tops, root_state=0, name=""):
        self.shape = shape
        self.state_names = tuple(state_names)
        self.chords = tuple(chords)
        self.tops = tuple(tops)
        self.name = name
        if root_state != shape.initial:
            raise InvariantError("shape must be rooted at its initial state")
        self.max_chord_offset = max((c.offset for c in self.chords), default=0)
        self._validate()

    # -- construction checks --------------------------------------------

    def _validate(self):
        for c in self.chords:
            if c.offset < 1:
                raise InvariantError("chord must target strict ancestor")
            if not 0 <= c.state < self.shape.n:
                raise InvariantError(f"chord rule names unknown state {c.state}")
        live = self.shape.live_states()
        for fam in self.tops:
            if fam.count < 1:
                raise InvariantError(f"top family {fam.name}: count must be >= 1")
            if fam.indices == "all":
                for q in live:
                    if not self.shape.branch_survives(fam.tail.prefix, fam.tail.cycle, start=q):
                        raise InvariantError(
                            f"top family {fam.name}: tail {fam.tail} invalid from state "
                            f"{self.state_names[q]} but indices=all"
                        )
            else:
                for w in self._family_index_list(fam):
                    b = fam.branch(w)
                    if not self.valid_end(b):
                        raise InvariantError(
                            f"top family {fam.name}: branch {b} not a valid branch"
                        )
            if fam.attach[0] == "fat":
                if self.shape.omega:
                    raise InvariantError("fat attachment rule requires a finitely branching shape")
                alphabet = {s for (_q, s) in self.shape.trans}
                if alphabet != {0, 1}:
                    raise InvariantError("fat attachment rule requires a binary shape")

    def _family_index_list(self, fam):
        if fam.indices == "single":
            return [()]
        if isinstance(fam.indices, tuple):
            return list(fam.indices)
        raise InvariantError(f"family {fam.name}: index set not enumerable")

    # -- skeleton queries -------------------------------------------------

    def state_of(self, address):
        return self.shape.run(address)

    def valid_address(self, address):
        return self.shape.run(tuple(address)) is not None

    def valid_end(self, end):
        return self.shape.branch_survives(end.prefix, end.cycle)

    def family(self, name):
        for fam in self.tops:
            if fam.name == name:
                return fam
        raise KeyError(name)

    def chord_ancestor(self, address):
        """Chord partners of a skeleton vertex (above it)."""
        q = self.state_of(address)
        out = []
        for rule in self.chords:
            if rule.state == q and len(address) >= rule.offset:
                out.append(tuple(address[: len(address) - rule.offset]))
        return out

    # -- top machinery ----------------------------------------------------

    def attach_depths_upto(self, fam, index, upto):
        """Sorted attachment depths <= upto of the top at `index`."""
        kind = fam.attach[0]
        if kind == "arith":
            a, d = fam.attach[1], fam.attach[2]
            return list(range(a, upto + 1, d)) if a <= upto else []
        if kind == "list":
            return sorted(x for x in fam.attach[1] if x <= upto)
        if kind == "fat":
            return fat_depths_upto(fam.branch(index), upto)
        raise InvariantError(f"unknown attachment rule {kind}")

    def attachment_verdict(self, fam):
        """(mode, ok, detail) for 'attachment set is infinite'."""
        kind = fam.attach[0]
        if kind == "arith":
            return "proved", True, f"arithmetic progression {fam.attach[1]}+{fam.attach[2]}m"
        if kind == "fat":
            return "proved", True, "running-max depths along the rational enumeration are unbounded"
        depths = set(fam.attach[1])
        horizon = max(depths, default=0)
        ok = False  # finite explicit list can never be infinite
        return "sampled", ok, f"no attachment above depth {horizon} at sample depth {SAMPLE_DEPTH}"

    def tops_window(self, depth, index_cap=None):
        """Tops with an attachment at depth <= depth, indices restricted
        to length <= index_cap (families over all addresses are countable,
        so a window is taken; the cap is recorded by the caller)."""
        cap = depth if index_cap is None else index_cap
        out = []
        for fam in self.tops:
            if fam.indices == "all":
                words = self.shape.words(cap)
            else:
                words = [w for w in self._family_index_list(fam)]
            for w in sorted(words):
                if fam.indices == "all" and not self.shape.branch_survives(
                    fam.tail.prefix, fam.tail.cycle, start=self.shape.run(w)
                ):
                    continue
                depths = self.attach_depths_upto(fam, w, depth)
                if depths:
                    for c in range(fam.count):
                        out.append((Top(fam.name, tuple(w), c), depths))
        return out

    def family_attach_beyond_cap(self, fam, prefix, at_depth):
        """Does some family top whose index extends `prefix` attach at
        depth at_depth (<= len(prefix)) on the branch through prefix?

        Used for component analysis: such tops bridge the subtree at
        `prefix` to the branch vertex at at_depth."""
        if at_depth > len(prefix):
            return False
        if fam.indices != "all":
            return False
        q = self.shape.run(tuple(prefix))
        if q is None:
            return False
        kind = fam.attach[0]
        if kind == "arith":
            a, d = fam.attach[1], fam.attach[2]
            return at_depth >= a and (at_depth - a) % d == 0
        if kind == "list":
            return at_depth in fam.attach[1]
        return fat_extension_attach_at(tuple(prefix), at_depth)


# -- the fat attachment rule ------------------------------------------------


def rational_branch(i):
    """The i-th eventually constant binary branch: 0^w, 1^w, then u.c^w
    for u in length-lexicographic order with c the flip of u's last
    symbol."""
    if i == 0:
        return End.make((), (0,))
    if i == 1:
        return End.make((), (1,))
    i -= 2
    length = 1
    while i >= 2**length:
        i -= 2**length
        length += 1
    u = tuple((i >> (length - 1 - k)) & 1 for k in range(length))
    return End.make(u, (1 - u[-1],))


def rational_index(u, c):
    """Enumeration index of the canonical rational u.c^w."""
    u = tuple(u)
    while u and u[-1] == c:
        u = u[:-1]
    if not u:
        return c
    value = 0
    for s in u:
        value = (value << 1) | s
    return (1 << len(u)) + value


def _follower_candidates(symbol_at, horizon):
    """Rationals that follow the word given by symbol_at for j symbols
    and then run constant, as (index, j, c) triples.

    Only these can advance the running lcp maximum in enumeration
    order, so they determine every fat attachment depth <= horizon."""
    out = []
    seen = set()
    for j in range(horizon + 1):
        head = tuple(symbol_at(i) for i in range(j))
        for c in (0, 1):
            idx = rational_index(head, c)
            if idx in seen:
                continue
            seen.add(idx)
            out.append((idx, j, c))
    out.sort()
    return out


def fat_depths_upto(branch, upto):
    """Attachment depths <= upto of a fat top on `branch`: the running
    maxima of 1 + lcp(branch, R_i) over the rational enumeration."""
    horizon = upto + 1

    def run_from(j, c):
        r = 0
        while branch.symbol(j + r) == c:
            r += 1
            if j + r > upto + len(branch.cycle) + len(branch.prefix) + 2:
                raise InvariantError("fat top branch must differ from every rational branch")
        return r

    depths = []
    best = -1
    for _idx, j, c in _follower_candidates(branch.symbol, horizon):
        lcp = j + run_from(j, c)
        if lcp > best:
            best = lcp
            if best + 1 <= upto:
                depths.append(best + 1)
    return sorted(depths)


def fat_extension_attach_at(prefix, k):
    """Is depth k an attachment depth of the fat tops whose branch runs
    strictly beyond `prefix`?  (They all share the same attachment
    depths <= len(prefix), determined by the prefix alone.)"""
    prefix = tuple(prefix)
    if k < 1 or k > len(prefix):
        return False
    big = len(prefix) + 1

    def lcp_of(j, c):
        r = 0
        while j + r < len(prefix) and prefix[j + r] == c:
            r += 1
        if j + r >= len(prefix):
            return big  # rational runs through the whole prefix
        return j + r

    for _idx, j, c in _follower_candidates(lambda i: prefix[i], len(prefix)):
        v = lcp_of(j, c)
        if v >= k - 1:
            return v == k - 1
    return False


# -- truncations -------------------------------------------------------------


@dataclass
class Truncation:
    """Finite window onto the presented graph: all skeleton vertices of
    depth <= depth (omega-branching expanded to `width` cycles of
    symbols), tops with an attachment inside, and all induced edges.
    Frontier vertices are depth-`depth` vertices with infinite
    continuations; pending_top_edges counts attachments beyond."""

    presentation: GraphPresentation
    depth: int
    width: int
    skeleton: list
    tops: list
    edges: list
    frontier: list
    pending_top_edges: dict

    @property
    def vertices(self):
        return list(self.skeleton) + [t for (t, _d) in self.tops]

    def edge_count(self):
        return len(self.edges)

    def report(self):
        lines = [
            f"truncation depth={self.depth} width={self.width}",
            f"skeleton vertices: {len(self.skeleton)}",
            f"tops: {len(self.tops)}",
            f"edges: {len(self.edges)}",
            f"frontier: {len(self.frontier)}",
        ]
        return "\n".join(lines)


def truncate(p, depth, width=2, index_cap=None, cap=VERTEX_CAP):
    """Deterministic truncation; raises ResourceCapError over `cap`."""
    if depth < 0:
        raise InvariantError("depth must be >= 0")
    addresses = p.shape.words(depth, omega_width=width)
    if len(addresses) > cap:
        raise ResourceCapError(f"truncation would hold {len(addresses)} vertices (cap {cap})")
    addr_set = set(addresses)
    edges = set()
    for a in addresses:
        if a:
            edges.add((a[:-1], a))
        for anc in p.chord_ancestor(a):
            edges.add((anc, a))
    tops = p.tops_window(depth, index_cap=index_cap)
    pending = {}
    for top, depths in tops:
        fam = p.family(top.family)
        branch = fam.branch(top.index)
        for d in depths:
            head = branch.head(d)
            if head in addr_set:
                edges.add((head, top))
        mode, ok, _detail = p.attachment_verdict(fam)
        pending[top] = "inf" if ok else max(
            len([x for x in fam.attach[1] if x > depth]) if fam.attach[0] == "list" else 0, 0
        )
    live = p.shape.live_states()
    frontier = [a for a in addresses if len(a) == depth and p.shape.run(a) in live]
    return Truncation(
        presentation=p,
        depth=depth,
        width=width,
        skeleton=sorted(addresses),
        tops=tops,
        edges=sorted(edges, key=_edge_key),
        frontier=sorted(frontier),
    pending_top_edges=pending,
    )


def _vertex_key(v):
    if isinstance(v, Top):
        return (1, v.family, v.index, v.copy)
    return (0, len(v), v)


def _edge_key(e):
    return (_vertex_key(e[0]), _vertex_key(e[1]))


# -- components of G - X for finite X ----------------------------------------


@dataclass
class ComponentDescriptor:
    """One component of G - X, or a parameterized family of such.

    Vertex set: core (explicit vertices) plus the whole subtree above
    every address in subtree_prefixes plus every top whose branch runs
    through one of those prefixes, plus all beyond-window children
    subtrees selected by residual_rules (parent, from_symbol, modulus,
    residue).  A family descriptor stands for one isomorphic component
    per beyond-window child of its parent; instantiate() picks one."""

    separator: frozenset
    core: frozenset
    subtree_prefixes: frozenset
    neighbors: frozenset
    residual_rules: frozenset = frozenset()
    family: tuple = None  # (parent, from_symbol, modulus, residue)
    _presentation: GraphPresentation = None

    def is_family(self):
        return self.family is not None

    def instantiate(self, sym):
        """The concrete family member whose subtree hangs at child sym."""
        parent, from_symbol, modulus, residue = self.family
        if sym < from_symbol or (sym - from_symbol) % modulus != residue:
            raise InvariantError(f"symbol {sym} not in family parameter set")
        return ComponentDescriptor(
            separator=self.separator,
            core=frozenset(),
            subtree_prefixes=frozenset({parent + (sym,)}),
            neighbors=self.neighbors,
            _presentation=self._presentation,
        )

    def _horizon(self):
        depths = [len(f) for f in self.subtree_prefixes]
        depths += [len(r[0]) + 1 for r in self.residual_rules]
        depths += [len(v) for v in self.separator if not isinstance(v, Top)]
        if self.family is not None:
            depths.append(len(self.family[0]) + 1)
        return max(depths, default=0) + 1

    def contains_vertex(self, v):
        p = self._presentation
        if _normalize_vertex(v) in self.separator:
            return False
        if isinstance(v, Top):
            if v in self.core:
                return True
            fam = p.family(v.family)
            b = fam.branch(v.index)
            return self.contains_vertex(b.head(self._horizon()))
        v = tuple(v)
        if v in self.core:
            return True
        for f in self.subtree_prefixes:
            if len(v) >= len(f) and v[: len(f)] == f:
                return True
        return self._under_residual(v)

    def _under_residual(self, v):
        rules = set(self.residual_rules)
        if self.family is not None:
            rules.add(self.family)
        for parent, from_symbol, modulus, residue in rules:
            if len(v) > len(parent) and v[: len(parent)] == parent:
                sym = v[len(parent)]
                if sym >= from_symbol and (sym - from_symbol) % modulus == residue:
                    return True
        return False

    def contains_end(self, end):
        """Does the end's branch eventually stay in this component?"""
        return self.contains_vertex(end.head(self._horizon()))

    def key(self):
        return (
            sorted(map(_vertex_key, self.core))[:4],
            sorted(self.subtree_prefixes),
            self.family,
        )


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def components_without(p, separator, extra_symbols=(), extra_depth=0):
    """Component descriptors of G - separator, exact for finite
    separators: computed on the truncation at depth max-depth(separator)
    + max chord offset + 1, with tops acting as reconnecting hubs and
    beyond-window structures folded in symbolically."""
    sep = frozenset(_normalize_vertex(v) for v in separator)
    skel_sep = [v for v in sep if not isinstance(v, Top)]
    base = max((len(v) for v in skel_sep), default=0)
    depth = base + p.max_chord_offset + 1 + extra_depth
    depth = max(depth, 1)
    syms = [s for v in skel_sep for s in v] + list(extra_symbols)
    width = max([2] + [s + 2 for s in syms])
    tr = truncate(p, depth, width=width, index_cap=depth)
    uf = _UnionFind()
    in_sep = lambda v: v in sep
    verts = [v for v in tr.skeleton if not in_sep(v)] + [
        t for (t, _d) in tr.tops if not in_sep(t)
    ]
    for v in verts:
        uf.add(v)
    for (a, b) in tr.edges:
        if not in_sep(a) and not in_sep(b):
            uf.union(a, b)
    # tops with attachments beyond the window reconnect to their branch head
    for (t, _depths) in tr.tops:
        if in_sep(t):
            continue
        if tr.pending_top_edges.get(t):
            fam = p.family(t.family)
            head = fam.branch(t.index).head(depth)
            if head in uf.parent:
                uf.union(t, head)
    # beyond-cap family tops bridge each frontier subtree to the branch
    # vertices at their shallow attachment depths
    for fam in p.tops:
        if fam.indices != "all":
            continue
        for f in tr.frontier:
            if not p.shape.branch_survives(fam.tail.prefix, fam.tail.cycle, start=p.shape.run(f)):
                continue
            anchor = f if not in_sep(f) else None
            for k in range(1, depth + 1):
                if p.family_attach_beyond_cap(fam, f, k):
                    v = f[:k]
                    if not in_sep(v) and v in uf.parent:
                        if anchor is None:
                            anchor = v
                        else:
                            uf.union(anchor, v)
    # omega-branching vertices inside the window have children beyond it
    residual = []  # (parent, from_symbol, modulus)
    for a in tr.skeleton:
        if len(a) >= depth:
            continue
        q = p.shape.run(a)
        rule = p.shape.omega.get(q)
        if rule is None:
            continue
        window = p.shape.symbols_window(q, width)
        from_symbol = (max(window) + 1) if window else rule.threshold
        residual.append((a, from_symbol, len(rule.cycle)))

    groups = {}
    for v in verts:
        groups.setdefault(uf.find(v), set()).add(v)

    def neighbors_of(members, prefixes):
        nbrs = set()
        for (a, b) in tr.edges:
            if in_sep(a) != in_sep(b):
                nbr_v, comp_v = (a, b) if in_sep(a) else (b, a)
                if comp_v in members:
                    nbrs.add(nbr_v)
        for t in sep:
            if isinstance(t, Top):
                fam = p.family(t.family)
                head = fam.branch(t.index).head(depth)
                if head in members:
                    nbrs.add(t)
        for fam in p.tops:
            if fam.indices != "all":
                continue
            for f in prefixes:
                for k in range(1, depth + 1):
                    if f[:k] in sep and p.family_attach_beyond_cap(fam, f, k):
                        nbrs.add(f[:k])
        return frozenset(nbrs)

    comps = []
    extra_rules = {}  # union-find root -> set of residual rules
    families = []
    for (parent, from_symbol, modulus) in residual:
        if parent in sep:
            # each beyond-window child class is (potentially) a family
            # of isomorphic components; a representative child decides
            window = p.shape.symbols_window(p.shape.run(parent), width)
            reps = sorted(window)[-modulus:]
            for s in reps:
                child = parent + (s,)
                if child not in uf.parent:
                    continue
                residue = (s - from_symbol) % modulus
                members = groups[uf.find(child)]
                confined = all(
                    isinstance(m, Top) or _is_under_child(m, parent, s) for m in members
                )
                if confined:
                    families.append(
                        ComponentDescriptor(
                            separator=sep,
                            core=frozenset(),
                            subtree_prefixes=frozenset(),
                            neighbors=neighbors_of(members, {f for f in members if f in set(tr.frontier)}),
                            family=(parent, from_symbol, modulus, residue),
                            _presentation=p,
                        )
                    )
                else:
                    extra_rules.setdefault(uf.find(child), set()).add(
                        (parent, from_symbol, modulus, residue)
                    )
        else:
            # residual children hang onto the parent's own component
            root = uf.find(parent)
            for r in range(modulus):
                extra_rules.setdefault(root, set()).add((parent, from_symbol, modulus, r))

    frontier_set = set(tr.frontier)
    for root, members in sorted(groups.items(), key=lambda kv: _vertex_key(kv[0])):
        prefixes = frozenset(v for v in members if v in frontier_set)
        comps.append(
            ComponentDescriptor(
                separator=sep,
                core=frozenset(members),
                subtree_prefixes=prefixes,
                neighbors=neighbors_of(members, prefixes),
                residual_rules=frozenset(extra_rules.get(root, ())),
                _presentation=p,
            )
        )
    comps.extend(families)
    return comps


def _is_under_child(v, parent, sym):
    v = tuple(v)
    return len(v) > len(parent) and v[: len(parent)] == parent and v[len(parent)] == sym


def _normalize_vertex(v):
    if isinstance(v, Top):
        return v
    return tuple(v)


def direction(p, separator, end):
    """The unique component of G - separator holding the end's tail."""
    sep = frozenset(_normalize_vertex(v) for v in separator)
    syms = set(end.prefix) | set(end.cycle)
    comps = components_without(p, sep, extra_symbols=sorted(syms))
    skel_sep = [v for v in sep if not isinstance(v, Top)]
    base = max((len(v) for v in skel_sep), default=0)
    depth = max(base + p.max_chord_offset + 1, 1)
    head = end.head(depth)
    if tuple(head) in sep:
        raise InvariantError("end meets the separator cofinally; not a valid branch")
    for c in comps:
        if c.contains_vertex(head):
            return c
    raise InvariantError(f"no component contains the tail of {end}")


# -- diagnostics --------------------------------------------------------------


def check_presentation(p, depths=(0, 1, 2, 3, 4)):
    """Diagnostics: normality (by construction, asserted on a window),
    truncation connectivity, chord offset bound, and top attachment
    verdicts with their verification mode."""
    report = {"name": p.name or "(unnamed)", "checks": []}

    def add(name, ok, detail=""):
        report["checks"].append({"check": name, "ok": bool(ok), "detail": detail})

    ok_chords = all(c.offset >= 1 for c in p.chords)
    add("chords target strict ancestors", ok_chords, f"max offset {p.max_chord_offset}")
    normal = True
    tr = truncate(p, min(max(depths, default=4) + p.max_chord_offset, 12))
    for (a, b) in tr.edges:
        if isinstance(a, Top) or isinstance(b, Top):
            continue
        if not (_is_prefix(a, b) or _is_prefix(b, a)):
            normal = False
    add("skeleton-and-chord edges join comparable vertices", normal)
    for d in depths:
        t = truncate(p, d)
        add(
            f"truncation depth {d} connected",
            _truncation_connected(t),
            f"{len(t.skeleton)} skeleton vertices, {len(t.tops)} tops",
        )
    for fam in p.tops:
        mode, ok, detail = p.attachment_verdict(fam)
        add(f"top family {fam.name} attachment infinite", ok, f"{mode}: {detail}")
    report["ok"] = all(c["ok"] for c in report["checks"])
    return report


def _is_prefix(a, b):
    return len(a) <= len(b) and tuple(b[: len(a)]) == tuple(a)


def _truncation_connected(tr):
    verts = set(tr.skeleton) | {t for (t, _d) in tr.tops}
    if not verts:
        return True
    uf = _UnionFind()
    for v in verts:
        uf.add(v)
    for (a, b) in tr.edges:
        uf.union(a, b)
    roots = {uf.find(v) for v in verts}
    return len(roots) == 1


# -- the presentation file format ---------------------------------------------


def load_presentation(text, name=""):
    """Parse the presentation-definition format.

    Sections: [states], [children], [chords], [tops], [root]; one rule
    per line; '#' starts a comment.  See docs/presentation-format.md.
    """
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ParseError(f"content before any section: {line!r}", line=lineno)
        sections[current].append((lineno, line))

    for required in ("states", "children", "root"):
        if required not in sections:
            raise ParseError(f"missing [{required}] section")

    names = []
    for lineno, line in sections["states"]:
        names.extend(line.split())
    if len(set(names)) != len(names):
        raise ParseError("duplicate state names in [states]")
    index = {nm: i for i, nm in enumerate(names)}

    trans = {}
    omega = {}
    for lineno, line in sections["children"]:
        if ":" not in line:
            raise ParseError(f"expected 'state: children': {line!r}", line=lineno)
        st, rest = line.split(":", 1)
        st = st.strip()
        if st not in index:
            raise ParseError(f"unknown state {st!r}", line=lineno)
        q = index[st]
        explicit = {}
        cycle = None
        for tok in rest.split():
            if tok.startswith("*(") and tok.endswith(")"):
                members = tok[2:-1].replace(",", " ").split()
                for m in members:
                    if m not in index:
                        raise ParseError(f"unknown state {m!r}", line=lineno)
                cycle = tuple(index[m] for m in members)
                continue
            if "->" not in tok:
                raise ParseError(f"expected SYM->STATE or *(...): {tok!r}", line=lineno)
            sym_s, tgt = tok.split("->", 1)
            try:
                sym = int(sym_s)
            except ValueError as exc:
                raise ParseError(f"bad child symbol {sym_s!r}", line=lineno) from exc
            if tgt not in index:
                raise ParseError(f"unknown state {tgt!r}", line=lineno)
            if sym in explicit:
                raise ParseError(f"duplicate child symbol {sym}", line=lineno)
            explicit[sym] = index[tgt]
        if cycle is not None:
            threshold = len(explicit)
            if sorted(explicit) != list(range(threshold)):
                raise ParseError(
                    "omega-branching states need consecutive explicit symbols 0..k-1",
                    line=lineno,
                )
            omega[q] = OmegaRule(threshold, cycle)
        for sym, tgt in explicit.items():
            trans[(q, sym)] = tgt

    chords = []
    for lineno, line in sections.get("chords", []):
        parts = line.replace("~", " ").split()
        if len(parts) != 2:
            raise ParseError(f"expected 'state ~ offset': {line!r}", line=lineno)
        st, off_s = parts
        if st not in index:
            raise ParseError(f"unknown state {st!r}", line=lineno)
        try:
            off = int(off_s)
        except ValueError as exc:
            raise ParseError(f"bad chord offset {off_s!r}", line=lineno) from exc
        if off < 1:
            raise ParseError("chord must target strict ancestor", line=lineno)
        chords.append(ChordRule(index[st], off))

    tops = []
    for lineno, line in sections.get("tops", []):
        if ":" not in line:
            raise ParseError(f"expected 'name: key=value ...': {line!r}", line=lineno)
        fam_name, rest = line.split(":", 1)
        fam_name = fam_name.strip()
        opts = {}
        for tok in rest.split():
            if "=" not in tok:
                raise ParseError(f"expected key=value: {tok!r}", line=lineno)
            k, v = tok.split("=", 1)
            opts[k] = v
        if "ray" not in opts:
            raise ParseError("top family needs ray=PREFIX(CYCLE)", line=lineno)
        try:
            tail = parse_end(opts["ray"])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        indices = opts.get("indices", "single")
        if indices not in ("single", "all"):
            words = tuple(parse_word(w) for w in indices.split(","))
            indices = words
        count = int(opts.get("count", "1"))
        attach_s = opts.get("attach", "arith(1,1)")
        attach = _parse_attach(attach_s, lineno)
        tops.append(TopFamily(fam_name, tail, indices, count, attach))

    root_lines = sections["root"]
    if len(root_lines) != 1:
        raise ParseError("[root] must contain exactly one state name")
    lineno, root_name = root_lines[0]
    root_name = root_name.strip()
    if root_name not in index:
        raise ParseError(f"unknown root state {root_name!r}", line=lineno)

    shape = Automaton(len(names), index[root_name], trans, omega)
    return GraphPresentation(shape, names, chords, tops, root_state=index[root_name], name=name)


def _parse_attach(text, lineno):
    text = text.strip()
    if text == "fat":
        return ("fat",)
    if text.startswith("arith(") and text.endswith(")"):
        a, d = text[6:-1].split(",")
        a, d = int(a), int(d)
        if d < 1 or a < 0:
            raise ParseError("arith attachment needs a>=0, delta>=1", line=lineno)
        return ("arith", a, d)
    if text.startswith("list(") and text.endswith(")"):
        depths = tuple(int(x) for x in text[5:-1].split(",") if x.strip() != "")
        return ("list", depths)
    raise ParseError(f"unknown attachment rule {text!r}", line=lineno)
