"""Decomposition builders driven by topological input.

The central construction turns an increasing sequence of closed
vertex-and-end sets into a tree-decomposition of finite adhesion whose
interior is exactly the union of the sequence's end parts: levels are
grown in a three-step cycle (shrink around the kept ends away from the
chosen discrete set, separate that set by a rayless normal subtree,
then absorb the level's vertices by an envelope), and the decomposition
tree is the component hierarchy of the grown subgraphs."""

from __future__ import annotations

from dataclasses import dataclass

from .automata import Automaton, empty
from .branches import End, word_str
from .cbrank import derivative_automaton, exists_branch, forced_states
from .complement import ComplementRegion, complement_components, _attach_membership
from .descriptors import (
    FiniteVertexSet,
    RegularVertexSet,
    TopSet,
    UnionSet,
    VertexSet,
    empty_set,
    limit_branches,
    safety_union,
    subtree_automaton,
    trie_automaton,
)
from .endspace import (
    EndSetRecognizer,
    Filtration,
    all_ends,
    boundary,
    empty_end_set,
    ends_set,
    is_dominated,
)
from .errors import InvariantError, UnsupportedError
from .presentation import ChordRule, GraphPresentation, Top, TopFamily, truncate
from .treedecomp import ChildFamily, DecompNode, TreeDecomposition, classify, f_T


# -- descriptor normal form ----------------------------------------------------


def compact(p, vset):
    """Normal form: one regular skeleton set plus explicit tops.  Keeps
    the unions arising from level iteration small."""
    skeleton = vset.skeleton_automaton().trim_words()
    tops = []
    for part in vset.parts():
        tops.extend(part.top_members_explicit())
    reg = RegularVertexSet(p, skeleton)
    if tops:
        return reg.union(FiniteVertexSet(p, frozenset(tops)))
    return reg


# -- exact metric balls ----------------------------------------------------------


def _children_language(p, aut):
    """Words w+(s,) with w accepted: track whether the previous state
    accepted."""
    prod, labels = p.shape.product(
        aut, finals=lambda a, b: b is not None and b in aut.finals, track="b"
    )
    idx = {}
    order = []

    def get(q, flag):
        if (q, flag) not in idx:
            idx[(q, flag)] = len(order)
            order.append((q, flag))
        return idx[(q, flag)]

    init = get(prod.initial, False)
    trans = {}
    omega = {}
    pos = 0
    while pos < len(order):
        (q, _flag), i = order[pos], pos
        pos += 1
        was_final = q in prod.finals
        for s, t in prod.out_edges(q):
            trans[(i, s)] = get(t, was_final)
        rule = prod.omega.get(q)
        if rule is not None:
            cyc = tuple(None if t is None else get(t, was_final) for t in rule.cycle)
            omega[i] = type(rule)(rule.threshold, cyc)
    finals = frozenset(i for (q, flag), i in idx.items() if flag)
    return Automaton(len(order), init, trans, omega, finals).trim_words()


def _parents_language(p, aut):
    finals = set()
    t = aut.trim_words()
    for q in range(t.n):
        if any(tgt in t.finals for _s, tgt in t.out_edges(q)):
            finals.add(q)
    return Automaton(t.n, t.initial, t.trans, t.omega, frozenset(finals))


def _chord_partner_language(p, aut, rule, down):
    """down: members' chord descendants (depth+offset, given state);
    up: members' chord ancestors."""
    t = aut.trim_words()
    prod, labels = p.shape.product(
        t, finals=lambda a, b: b is not None and b in t.finals, track="b"
    )
    k = rule.offset
    if down:
        # accept words some (len-k)-prefix of which is accepted, final
        # shape state matching: carry the set of open window offsets
        idx = {}
        order = []

        def get(q, js):
            key = (q, js)
            if key not in idx:
                idx[key] = len(order)
                order.append(key)
            return idx[key]

        def bump(q, js):
            nxt = frozenset(j + 1 for j in js if j + 1 <= k)
            if q in prod.finals:
                nxt |= {1}
            return nxt

        init = get(prod.initial, frozenset())
        trans = {}
        omega = {}
        pos = 0
        while pos < len(order):
            (q, js), i = order[pos], pos
            pos += 1
            nxt_js = bump(q, js)
            for s, tgt in prod.out_edges(q):
                trans[(i, s)] = get(tgt, nxt_js)
            rule_o = prod.omega.get(q)
            if rule_o is not None:
                cyc = tuple(
                    None if tg is None else get(tg, nxt_js) for tg in rule_o.cycle
                )
                omega[i] = type(rule_o)(rule_o.threshold, cyc)
        finals = frozenset(
            i for (q, js), i in idx.items() if k in js and labels[q][0] == rule.state
        )
        return Automaton(len(order), init, trans, omega, finals).trim_words()
    # up: ancestors at offset k of members in the rule state
    co = {}
    t2 = prod

    def k_reaches_final(q, j, memo):
        if (q, j) in memo:
            return memo[(q, j)]
        if j == k:
            res = q in t2.finals and labels[q][0] == rule.state
        else:
            res = any(k_reaches_final(tgt, j + 1, memo) for _s, tgt in t2.out_edges(q))
        memo[(q, j)] = res
        return res

    memo = {}
    finals = frozenset(q for q in range(t2.n) if k_reaches_final(q, 0, memo))
    return Automaton(t2.n, t2.initial, t2.trans, t2.omega, finals).trim_words()


def attachment_set_automaton(p, fam, index):
    """The attachment vertices of one top, as a word automaton."""
    from .descriptors import branch_prefixes_automaton

    b = fam.branch(index)
    kind = fam.attach[0]
    base = branch_prefixes_automaton(b)
    if kind == "list":
        return trie_automaton([b.head(d) for d in fam.attach[1]])
    if kind == "arith":
        return _arith_attach_automaton(b, fam.attach[1], fam.attach[2])
    raise UnsupportedError("fat attachment sets are not regular")


def _arith_attach_automaton(branch, a, step):
    """States: position along the branch with depth tracked modulo step
    past a."""
    pre = len(branch.prefix)
    cyc = len(branch.cycle)
    wrap_at = max(a, pre)
    import math

    period = cyc * step // math.gcd(cyc, step)
    states = wrap_at + period
    trans = {}
    finals = set()
    for k in range(states):
        nxt = k + 1
        if nxt == states:
            nxt = wrap_at
        trans[(k, branch.symbol(k))] = nxt
        if k >= a and (k - a) % step == 0:
            finals.add(k)
    return Automaton(states, 0, trans, {}, frozenset(finals)).trim_words()


def neighbors_set(p, vset):
    """The exact neighbour set of a compact descriptor."""
    aut = vset.skeleton_automaton().trim_words()
    parts = []
    langs = [_children_language(p, aut), _parents_language(p, aut)]
    for rule in p.chords:
        langs.append(_chord_partner_language(p, aut, rule, down=True))
        langs.append(_chord_partner_language(p, aut, rule, down=False))
    out = langs[0]
    for l in langs[1:]:
        out = out.union_words(l)
    tops = []
    for fam in p.tops:
        if fam.indices == "all":
            raise UnsupportedError(
                "exact neighbourhoods over all-indexed top families are not supported"
            )
        for w in p._family_index_list(fam):
            fin, hits = _attach_membership(p, RegularVertexSet(p, aut), fam, w)
            if hits or not fin:
                tops.extend(Top(fam.name, tuple(w), c) for c in range(fam.count))
    # attachments of member tops
    member_tops = vset.top_members_explicit()
    for t in member_tops:
        fam = p.family(t.family)
        out = out.union_words(attachment_set_automaton(p, fam, t.index))
    parts = [RegularVertexSet.of(p, out)]
    if tops:
        parts.append(FiniteVertexSet(p, frozenset(tops)))
    res = parts[0]
    for q in parts[1:]:
        res = res.union(q)
    return res


def ball(p, n):
    """The exact graph-distance ball around the root."""
    b = compact(p, FiniteVertexSet.of(p, [()]))
    for _ in range(n):
        b = compact(p, b.union(neighbors_set(p, b)))
    return b


def ball_closure_filtration(p):
    """Level n: the closure of the radius-n ball (adds exactly the ends
    dominated by a vertex within distance n-1, by the star argument:
    removing the star's centre leaves a comb attached to its
    neighbourhood)."""

    def rule(n):
        v = ball(p, n)
        return v, boundary(p, v)

    return Filtration(p, rule, name="ball-closures")


# -- region-restricted envelopes ---------------------------------------------------


def region_vertex_set(p, region):
    """The vertices of a complement region, as a compact descriptor."""
    parts = []
    auts = []
    for m in region.anchors:
        auts.append(_region_words(p, region, m))
    if auts:
        out = auts[0]
        for a in auts[1:]:
            out = out.union_words(a)
        parts.append(RegularVertexSet(p, out))
    if region.tops:
        parts.append(FiniteVertexSet(p, frozenset(region.tops)))
    if not parts:
        return empty_set(p)
    res = parts[0]
    for q in parts[1:]:
        res = res.union(q)
    return res


def _region_words(p, region, anchor):
    """Words at/below the anchor staying outside the removed set."""
    removed = region.removed
    aut = removed.skeleton_automaton()
    prod, _labels = p.shape.product(
        aut, finals=lambda a, b: b is not None and b in aut.finals, track="b"
    )
    start = prod.run(anchor)
    if start is None or start in prod.finals:
        return trie_automaton([])
    keep = {q for q in range(prod.n) if q not in prod.finals}
    trans = {k: t for k, t in prod.trans.items() if k[0] in keep and t in keep}
    omega = {}
    for q, rule in prod.omega.items():
        if q in keep:
            cyc = tuple(t if t in keep else None for t in rule.cycle)
            if any(c is not None for c in cyc):
                omega[q] = type(rule)(rule.threshold, cyc)
    inner = Automaton(prod.n, start, trans, omega, None)
    m = len(anchor)
    if m == 0:
        return inner.trim_words()
    trans2 = {(i, anchor[i]): i + 1 for i in range(m - 1)}
    for (q, s), tgt in inner.trans.items():
        trans2[(q + m, s)] = tgt + m
    omega2 = {q + m: r for q, r in inner.omega.items()}
    trans2[(m - 1, anchor[m - 1])] = inner.initial + m
    finals = frozenset(range(m, m + inner.n))
    return Automaton(m + inner.n, 0, trans2, omega2, finals).trim_words()


def envelope_in_region(p, region, extra_vertices, end_part):
    """The connected envelope of (end_part ∪ extra_vertices) inside the
    region together with its neighbourhood: the prefix tree of the end
    part from the region's anchors, the star centres inside the region,
    plus the region-side connecting paths."""
    psi = end_part
    aut = psi.automaton.trim_safety()
    parts = [extra_vertices]
    if not aut.is_empty_safety():
        word_aut = Automaton(aut.n, aut.initial, aut.trans, aut.omega, None)
        tree = RegularVertexSet.of(p, word_aut)
        region_aut = region_vertex_set(p, region).skeleton_automaton()
        restricted = tree.skeleton_automaton().intersect_words(region_aut)
        parts.append(RegularVertexSet(p, restricted))
    base = parts[0]
    for q in parts[1:]:
        base = base.union(q)
    base = compact(p, base)
    # star centres inside the region: tops with infinite fan into the set
    tops = []
    for t in _region_top_candidates(p, region):
        fam = p.family(t.family)
        fin, _hits = _attach_membership(p, base, fam, t.index)
        if not fin:
            tops.append(t)
    if tops:
        base = compact(p, base.union(FiniteVertexSet(p, frozenset(tops))))
    return base


def _region_top_candidates(p, region):
    out = []
    for fam in p.tops:
        if fam.indices == "all":
            continue
        for w in p._family_index_list(fam):
            for c in range(fam.count):
                t = Top(fam.name, tuple(w), c)
                if region.contains_vertex(t):
                    out.append(t)
    return out


def connect_in_region(p, region, vset, depth=10):
    """Add canonical paths inside the region so that the set becomes
    connected toward the region's neighbourhood."""
    tr = truncate(p, depth)
    adj = {}
    for (a, b) in tr.edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    allowed = set()
    for v in adj:
        if region.contains_vertex(v):
            allowed.add(v)
    anchors = [m for m in region.anchors if m in allowed]
    members = sorted(
        (v for v in allowed if vset.contains(v)),
        key=_vkey,
    )
    if not members or not anchors:
        return vset
    base = anchors[0]
    added = set()
    reach = {base}
    frontier_ok = set(tr.frontier)
    for v in members:
        if v in reach:
            continue
        path = _bfs_path(adj, allowed, base, v)
        if path is None:
            if not isinstance(v, Top) and any(
                tuple(v[: len(f)]) == f for f in frontier_ok
            ):
                continue
            continue
        for w in path:
            if w not in reach:
                reach.add(w)
            if not vset.contains(w):
                added.add(w)
    if not added:
        return vset
    return compact(p, vset.union(FiniteVertexSet(p, frozenset(added | {base}))))


def _bfs_path(adj, allowed, a, b):
    from collections import deque

    seen = {a: None}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        if v == b:
            path = []
            while v is not None:
                path.append(v)
                v = seen[v]
            return path
        for w in sorted(adj.get(v, ()), key=_vkey):
            if w in allowed and w not in seen:
                seen[w] = v
                queue.append(w)
    return None


def _vkey(v):
    if isinstance(v, Top):
        return (1, v.family, v.index, v.copy)
    return (0, len(v), v)


# -- isolating-prefix machinery ------------------------------------------------------


def minus_forced_cylinders(a_aut, delta_aut):
    """Branches of safety(a) avoiding the isolating cylinders of the
    discrete set delta: kill a run when the delta side enters a forced
    state (the first prefix every other delta member avoids)."""
    d = delta_aut.trim_safety()
    if d.is_empty_safety():
        return a_aut.trim_safety()
    forced = forced_states(d)
    prod, labels = a_aut.product(d, track="b")
    keep = {
        i
        for i in range(prod.n)
        if labels[i][1] is None or labels[i][1] not in forced
    }
    if prod.initial not in keep:
        return empty()
    trans = {k: t for k, t in prod.trans.items() if k[0] in keep and t in keep}
    omega = {}
    for q, rule in prod.omega.items():
        if q in keep:
            cyc = tuple(t if t in keep else None for t in rule.cycle)
            if any(c is not None for c in cyc):
                omega[q] = type(rule)(rule.threshold, cyc)
    return Automaton(prod.n, prod.initial, trans, omega, None).trim_safety()


def isolating_prefix_language(delta_aut):
    """Words that first enter a forced state of the trimmed recognizer:
    the canonical isolating prefixes of the discrete set's members."""
    d = delta_aut.trim_safety()
    if d.is_empty_safety():
        return trie_automaton([])
    forced = set(forced_states(d))
    idx = {}
    order = []

    def get(q, entered):
        if (q, entered) not in idx:
            idx[(q, entered)] = len(order)
            order.append((q, entered))
        return idx[(q, entered)]

    init = get(d.initial, d.initial in forced)
    trans = {}
    omega = {}
    pos = 0
    while pos < len(order):
        (q, entered), i = order[pos], pos
        pos += 1
        if entered:
            continue
        for s, t in d.out_edges(q):
            trans[(i, s)] = get(t, t in forced)
        rule = d.omega.get(q)
        if rule is not None:
            cyc = tuple(None if t is None else get(t, t in forced) for t in rule.cycle)
            omega[i] = type(rule)(rule.threshold, cyc)
    finals = frozenset(i for (q, entered), i in idx.items() if entered)
    return Automaton(len(order), init, trans, omega, finals).trim_words()


def prefix_closure(aut):
    """All prefixes of accepted words."""
    t = aut.trim_words()
    return Automaton(t.n, t.initial, t.trans, t.omega, None).trim_words()


# -- the filtration builder -----------------------------------------------------------


@dataclass
class _LevelState:
    g_set: VertexSet  # G_m
    reports: list


class FiltrationBuild:
    """Carries the grown subgraph sequence and the per-level checks."""

    def __init__(self, p, filtration, delta_rule=None, window=8):
        self.p = p
        self.filtration = filtration
        self.delta_rule = delta_rule or (lambda n: empty_end_set(p))
        self.window = window
        self.g_levels = [compact(p, empty_set(p))]
        self.level_reports = []
        self._components = {}

    def xi_level(self, n):
        return self.filtration.end_level(n)

    def delta_level(self, n):
        d = self.delta_rule(n)
        d._require_closed("delta level")
        ok, _w = d.subset_of(self.xi_level(n))
        if not ok:
            raise InvariantError(f"delta level {n} escapes the filtration's end level")
        if n > 0:
            prev = self.xi_level(n - 1)
            joint = d.intersect(prev)
            if not joint.is_empty():
                raise InvariantError(f"delta level {n} meets earlier end levels")
        lim = derivative_automaton(d.automaton)
        witness = exists_branch([lim, d.automaton], [])
        if witness is not None:
            raise InvariantError(f"delta level {n} is not discrete: {witness} is a limit")
        return d

    def components_at(self, m):
        if m not in self._components:
            g = self.g_level(m)
            # the grown subgraphs absorb roughly one depth level per
            # three-step cycle, so anchors sit near depth m/3
            window = self.window + (m + 2) // 3 + 3
            self._components[m] = complement_components(self.p, g, window=window)
        return self._components[m]

    def g_level(self, m):
        while len(self.g_levels) <= m:
            self._grow()
        return self.g_levels[m]

    def _grow(self):
        p = self.p
        m = len(self.g_levels) - 1
        n, phase = divmod(m, 3)
        g = self.g_levels[m]
        comps = self.components_at(m)
        additions = []
        report = {"level": m + 1, "phase": phase, "components": len(comps.regions)}
        xi_n = self.xi_level(n)
        delta_n = self.delta_level(n)
        for region in comps.regions:
            if not region.neighbor_finite:
                raise InvariantError(
                    f"component with infinite neighbourhood at level {m}: {region.neighbor_witness}"
                )
            nd = FiniteVertexSet(p, frozenset(region.neighbor_list))
            bd = region.boundary_automaton()
            if phase == 0:
                kept = xi_n.automaton.intersect(bd)
                kept = minus_forced_cylinders(kept, delta_n.automaton)
                v_d = envelope_in_region(p, region, nd, EndSetRecognizer(p, kept))
                v_d = connect_in_region(p, region, v_d)
            elif phase == 1:
                local_delta = delta_n.automaton.intersect(bd)
                iso = isolating_prefix_language(local_delta)
                closure_words = prefix_closure(iso)
                region_words = region_vertex_set(p, region).skeleton_automaton()
                sub = closure_words.intersect_words(region_words)
                v_d = nd.union(RegularVertexSet(p, sub))
                v_d = compact(p, v_d)
                # rayless normal tree contract: no end may live in it
                bnd = RegularVertexSet(p, sub).boundary_automaton()
                if not bnd.is_empty_safety():
                    raise InvariantError(
                        f"separating subtree at level {m} contains a ray"
                    )
                v_d = connect_in_region(p, region, v_d)
            else:
                x_vert, x_ends = self.filtration.level(n)
                region_words = region_vertex_set(p, region).skeleton_automaton()
                vert_in = x_vert.skeleton_automaton().intersect_words(region_words)
                tops_in = [
                    t
                    for t in x_vert.top_members_explicit()
                    if region.contains_vertex(t)
                ]
                extra = RegularVertexSet(p, vert_in)
                if tops_in:
                    extra = extra.union(FiniteVertexSet(p, frozenset(tops_in)))
                ends_in = x_ends.automaton.intersect(bd)
                v_d = envelope_in_region(
                    p, region, compact(p, nd.union(extra)), EndSetRecognizer(p, ends_in)
                )
                v_d = connect_in_region(p, region, v_d)
            additions.append(v_d)
        new_g = g
        for a in additions:
            new_g = new_g.union(a)
        new_g = compact(p, new_g)
        self.g_levels.append(new_g)
        self.level_reports.append(report)
        self._verify_level(m + 1)

    def _verify_level(self, m):
        """The construction's per-level conclusions, recognizer-exact."""
        p = self.p
        n, phase = divmod(m, 3)
        g = self.g_levels[m]
        bnd = boundary(p, g)
        rep = {"level": m, "checks": []}
        if phase == 2:  # m = 3n+2
            xi = self.xi_level(n)
            delta = self.delta_level(n)
            target = EndSetRecognizer(
                p, minus_forced_cylinders(xi.automaton, delta.automaton)
            )
            ok, w = bnd.subset_of(xi)
            rep["checks"].append(("boundary within end level", ok))
            joint = bnd.intersect(delta)
            rep["checks"].append(("boundary avoids the discrete set", joint.is_empty()))
        if phase == 0 and m > 0:  # m = 3n+3 for level n = m//3 - 1
            n_prev = m // 3 - 1
            xi = self.xi_level(n_prev)
            ok1, _ = bnd.subset_of(xi)
            ok2, _ = xi.subset_of(bnd)
            rep["checks"].append(("boundary equals end level", ok1 and ok2))
            x_vert, _ = self.filtration.level(n_prev)
            tr = truncate(p, 5)
            missing = [
                v
                for v in tr.vertices
                if x_vert.contains(v) and not g.contains(v)
            ]
            rep["checks"].append(
                ("level vertices absorbed", not missing)
            )
        self.level_reports.append(rep)


def build_from_filtration(p, filtration, delta_rule=None, window=6, max_levels=30):
    """The decomposition of the component hierarchy: nodes are the
    components of the grown subgraphs, the part of a level-m component
    C is N(C) together with C's share of the next subgraph."""
    build = FiltrationBuild(p, filtration, delta_rule, window=window)

    def region_key(region):
        return (region.anchors, tuple(region.tops))

    def make_node(m, region, path):
        nd = list(region.neighbor_list or ())
        part = FiniteVertexSet(p, frozenset(nd))
        g_next = build.g_level(m + 1)
        region_words = region_vertex_set(p, region).skeleton_automaton()
        share = g_next.skeleton_automaton().intersect_words(region_words)
        part = part.union(RegularVertexSet(p, share))
        tops_in = [t for t in g_next.top_members_explicit() if region.contains_vertex(t)]
        if tops_in:
            part = part.union(FiniteVertexSet(p, frozenset(tops_in)))
        part = compact(p, part)
        depth_offset = (
            min(len(a) for a in region.anchors) - (m // 3) if region.anchors else None
        )
        sig = (
            tuple(sorted(p.shape.run(a) for a in region.anchors)),
            depth_offset,
            len(nd),
            m % 3,
        )
        return DecompNode(
            path=path,
            part=part,
            adhesion=tuple(sorted(nd, key=_vkey)),
            region=region,
            signature=sig,
            payload=(m, region),
        )

    root_region = build.components_at(0).regions[0]
    root = make_node(0, root_region, ())

    def children_fn(node):
        m, region = node.payload
        comps = build.components_at(m + 1)
        kids = []
        for r in comps.regions:
            probe = r.anchors[0] if r.anchors else (r.tops[0] if r.tops else None)
            if probe is None:
                continue
            if region.contains_vertex(probe):
                kids.append(r)
        explicit = []
        for i, r in enumerate(sorted(kids, key=lambda r: (tuple(map(len, r.anchors)), r.anchors))):
            explicit.append(make_node(m + 1, r, node.path + (i,)))
        return explicit, []

    def level_cover_fn(n):
        # parts up to level n cover G_{n+1} exactly
        return build.g_level(n + 1)

    def interior_union_fn(end, horizon=16):
        for n in range(horizon):
            if filtration.end_level(n).contains(end):
                return True
        return False

    t = TreeDecomposition(
        p,
        root,
        children_fn,
        provenance="filtration",
        claims={"upwards_connected": True, "connected_parts": True},
        boundary_hint=_complement_hint(p, filtration),
        level_cover_fn=level_cover_fn,
        interior_union_fn=interior_union_fn,
    )
    t.build = build
    return t


def _complement_hint(p, filtration):
    # the displayed set is the complement of the filtration's end union,
    # which is not a closed set; classify is called with an explicit
    # target instead
    return None


def expansion_filtration(p, expansion):
    """Filtration and discrete-set rule read off a sigma-discrete
    expansion: level i is everything emitted through the i-th slice
    (closed by construction), and the i-th discrete set is the i-th
    slice's end part, closed up."""
    from .cbrank import diff_closure
    from .descriptors import safety_union

    slices = expansion.slices
    levels = []
    vertex_so_far = compact(p, empty_set(p))
    for s in slices:
        if s.vertices_cum is not None:
            vertex_so_far = compact(p, s.vertices_cum)
        ends = safety_union(s.ends_a, s.ends_b)
        levels.append((vertex_so_far, EndSetRecognizer(p, ends)))

    def rule(i):
        return levels[min(i, len(levels) - 1)]

    def delta_rule(i):
        if i >= len(slices):
            return empty_end_set(p)
        s = slices[i]
        return EndSetRecognizer(p, diff_closure(s.ends_a, s.ends_b))

    return Filtration(p, rule, name="expansion"), delta_rule


def undominated_display(p, window=6):
    """The decomposition displaying exactly the undominated ends: feed
    the ball-closure filtration (whose union is the vertex set plus the
    dominated ends) to the filtration builder."""
    filt = ball_closure_filtration(p)
    return build_from_filtration(p, filt, window=window)


# -- the contraction presentation for boundaries of vertex sets -----------------------


def contraction_presentation(p, u):
    """The presentation of the graph obtained by collapsing every
    component of G - u to a single finite-degree vertex.

    Requires the skeleton part of u to be prefix-closed (its envelope
    is, for sets with prefix-closed closure) and the components to have
    chain neighbourhoods describable per anchor class."""
    aut = u.skeleton_automaton().trim_words()
    # prefix-closed check: every state on a path to a final must be final
    if any(q not in aut.finals for q in aut.reachable_states()):
        raise UnsupportedError("contraction needs a prefix-closed skeleton part")
    ana = complement_components(p, u, window=6)
    classes = {}
    for r in ana.regions:
        if not r.neighbor_finite:
            raise InvariantError(f"component with infinite neighbourhood: {r.neighbor_witness}")
        if r.tops:
            raise UnsupportedError("collapsing components holding tops is not supported")
        if not r.anchors:
            continue
        anchor = r.anchors[0]
        skel_n = [v for v in r.neighbor_list if not isinstance(v, Top)]
        if any(isinstance(v, Top) for v in r.neighbor_list):
            raise UnsupportedError("component adjacent to a top cannot be collapsed")
        offs = tuple(sorted(len(anchor) - len(v) for v in skel_n if len(v) < len(anchor)))
        key = (p.shape.run(anchor[:-1]), anchor[-1] if anchor else None, offs)
        classes.setdefault(key, []).append(r)
    # new shape: u's word automaton states (all prefix-final) plus one
    # leaf state per class
    n0 = aut.n
    trans = dict(aut.trans)
    omega = dict(aut.omega)
    names = [f"u{q}" for q in range(n0)]
    chords = []
    leaf_idx = {}
    for i, (key, regs) in enumerate(sorted(classes.items(), key=lambda kv: str(kv[0]))):
        parent_state_shape, sym, offs = key
        leaf = n0 + i
        names.append(f"c{i}")
        leaf_idx[key] = leaf
        # hang the collapsed vertex where the component's anchor hung
        for r in regs:
            anchor = r.anchors[0]
            q = aut.run(anchor[:-1])
            if q is None:
                raise InvariantError("anchor parent left the skeleton part")
            trans[(q, anchor[-1])] = leaf
        for k in offs:
            if k >= 1:
                chords.append(ChordRule(leaf, k))
    shape = Automaton(n0 + len(classes), aut.initial, trans, omega, None)
    tops = []
    for fam in p.tops:
        if fam.indices == "all":
            raise UnsupportedError("contraction under all-indexed top families")
        keep = []
        for w in p._family_index_list(fam):
            b = fam.branch(w)
            # the branch must stay inside u's skeleton
            if shape.branch_survives(b.prefix, b.cycle):
                keep.append(tuple(w))
        if keep:
            tops.append(TopFamily(fam.name, fam.tail, tuple(keep), fam.count, fam.attach))
    hp = GraphPresentation(shape, names, chords, tops, root_state=aut.initial, name=p.name + "/contracted")
    return hp, ana, classes


def boundary_undominated_display(p, u, window=6):
    """The decomposition displaying exactly the undominated ends in the
    boundary of u: collapse the components of the envelope of u, run
    the undominated pipeline in the contraction, and pull its levels
    back through the collapse map as a filtration on the original
    graph."""
    from .envelope import envelope as make_envelope

    if _covers_all_vertices(p, u):
        return undominated_display(p, window=window)
    env = make_envelope(p, u)
    ustar = compact(p, env.x_star)
    hp, ana, classes = contraction_presentation(p, ustar)
    filt_h = ball_closure_filtration(hp)

    def pullback_rule(n):
        vh = filt_h.vertex_level(n)
        # u-vertices map to themselves; collapsed vertices pull back to
        # their component's whole region plus its neighbourhood
        vg_aut = vh.skeleton_automaton().intersect_words(ustar.skeleton_automaton())
        out = RegularVertexSet(p, vg_aut)
        for r in ana.regions:
            if not r.anchors:
                continue
            anchor = r.anchors[0]
            if vh.contains(anchor):  # the collapsed vertex sits at the anchor address
                out = out.union(region_vertex_set(p, r))
                out = out.union(FiniteVertexSet(p, frozenset(r.neighbor_list)))
        tops_kept = [t for t in ustar.top_members_explicit() if vh.contains(t)]
        if tops_kept:
            out = out.union(FiniteVertexSet(p, frozenset(tops_kept)))
        out = compact(p, out)
        return out, boundary(p, out)

    filt_g = Filtration(p, pullback_rule, name="pullback-ball-closures")
    return build_from_filtration(p, filt_g, window=window)


def _covers_all_vertices(p, u, depth=5):
    tr = truncate(p, depth)
    return all(u.contains(v) for v in tr.vertices)


# -- contraction normalization ---------------------------------------------------------


from .treedecomp import local_end_automaton, node_has_local_end  # noqa: E402


def contract_normalize(t, depth=8, max_chain=24):
    """Contract end-free template rays, then group every end-free
    stretch with the ended node it leads to, so that the result
    represents a partition with a larger interior.

    A group absorbs the end-free chain ahead of it (following first
    children through end-free branchings, whose other children hang off
    the group) up to and including the first node carrying a local end;
    an end-free single-child template lasso contracts into a terminal
    node holding its whole side of the graph."""
    from .endspace import PredicateEndSet

    self_boundary = PredicateEndSet(lambda e: f_T(t, e).kind == "tree_end", "own boundary")
    cl = classify(t, psi=self_boundary, depth=min(depth, 5))
    if not cl.verdicts.get("realises"):
        raise InvariantError("input does not realise a partition")
    p = t.presentation

    def group_from(start_node):
        """(chain, kind, side_children, side_families): the absorbed
        nodes, whether the tail is an end-free lasso, and the children
        the group keeps."""
        chain = [start_node]
        side = []
        sigs = {}
        cur = start_node
        while True:
            if node_has_local_end(t, cur):
                explicit, fams = t.children(cur)
                return chain, "chain", side + list(explicit), fams
            explicit, fams = t.children(cur)
            if fams:
                return chain, "chain", side + list(explicit), fams
            if not explicit:
                return chain, "chain", side, []
            sig = cur.signature
            if sig in sigs and len(chain) >= 2:
                if side:
                    raise UnsupportedError(
                        "end-free lasso with side branches cannot be ray-contracted"
                    )
                return chain, "ray", [], []
            sigs[sig] = len(chain)
            if len(chain) >= max_chain:
                return chain, "chain", side + list(explicit), fams
            side.extend(explicit[1:])
            chain.append(explicit[0])
            cur = explicit[0]

    def make_group_node(chain, kind, path):
        part = None
        for nodex in chain:
            part = nodex.part if part is None else part.union(nodex.part)
        if kind == "ray":
            head = chain[0]
            part = part.union(region_part(head)) if part is not None else region_part(head)
            part = part.union(FiniteVertexSet(p, frozenset(head.adhesion)))
        part = compact(p, part) if part is not None else empty_set(p)
        head = chain[0]
        adhesion = tuple(v for v in head.adhesion if part.contains(v)) or head.adhesion
        return DecompNode(
            path=path,
            part=part,
            adhesion=adhesion,
            region=head.region,
            signature=("group", head.signature, kind, len(chain)),
            payload=(chain, kind),
        )

    def region_part(head):
        region = head.region
        if region is None:
            word_all = Automaton(
                p.shape.n, p.shape.initial, p.shape.trans, p.shape.omega, None
            )
            return RegularVertexSet.of(p, word_all)
        if hasattr(region, "anchors"):
            return region_vertex_set(p, region)
        if hasattr(region, "prefix"):
            return RegularVertexSet.of(p, subtree_automaton(p, region.prefix))
        raise UnsupportedError("ray contraction over this region class")

    group_cache = {}

    def group_node_for(start_node, path):
        chain, kind, side, fams = group_from(start_node)
        gnode = make_group_node(chain, kind, path)
        group_cache[path] = (side, fams, kind)
        return gnode

    def children_fn(gnode):
        side, fams, kind = group_cache[gnode.path]
        if kind == "ray":
            return [], []
        out = []
        for i, c in enumerate(side):
            out.append(group_node_for(c, gnode.path + (i,)))
        fam_out = []
        base = len(side)
        for fam in fams:
            def instantiate(paramv, fam=fam, gnode=gnode):
                c = fam.instantiate(paramv)
                return group_node_for(c, gnode.path + (paramv,))

            fam_out.append(
                ChildFamily(
                    key_base=fam.key_base,
                    params=fam.params,
                    instantiate=instantiate,
                    param_for_end=fam.param_for_end,
                    param_for_vertex=fam.param_for_vertex,
                    sample_params=fam.sample_params,
                )
            )
        return out, fam_out

    root = group_node_for(t.root, ())
    return TreeDecomposition(
        p,
        root,
        children_fn,
        provenance=f"{t.provenance}+normalized",
        claims=dict(t.claims),
        boundary_hint=t.boundary_hint,
        interior_union_fn=t.interior_union_fn,
    )
