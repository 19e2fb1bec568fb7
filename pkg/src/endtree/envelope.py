"""Envelopes of vertex-and-end sets, and torso extensions.

The envelope of a set X of vertices and ends is a vertex superset of
finite adhesion whose boundary is exactly the closure of X among the
ends.  On a normal skeleton the canonical ray family for the closed
end part is the lex-least ray partition of its prefix tree, whose
vertex union is that whole prefix tree; the star centres are the tops
and chord hubs whose rules fire infinitely into it."""

from __future__ import annotations

from dataclasses import dataclass, field

from .automata import Automaton
from .branches import End, word_str
from .complement import complement_components, _attach_membership
from .descriptors import (
    FiniteVertexSet,
    RegularVertexSet,
    TopSet,
    UnionSet,
    VertexSet,
    empty_set,
    word_language_infinite,
)
from .endspace import EndSetRecognizer, all_ends, boundary, empty_end_set
from .errors import InvariantError, UnsupportedError
from .presentation import GraphPresentation, Top, components_without, truncate


@dataclass
class EnvelopeResult:
    """The envelope with its audit trail: sampled canonical rays, the
    prefix-tree set X', the star centres, and the target boundary."""

    presentation: GraphPresentation
    x_prime: VertexSet
    star_centers: VertexSet
    x_star: VertexSet
    psi_star: EndSetRecognizer
    ray_sample: tuple = ()
    ray_note: str = ""

    def report(self):
        lines = ["envelope result"]
        lines.append(f"  X' = {self.x_prime}")
        lines.append(f"  star centers = {self.star_centers}")
        lines.append(f"  X* = {self.x_star}")
        rays = ", ".join(str(r) for r in self.ray_sample)
        lines.append(f"  ray family sample: [{rays}] {self.ray_note}")
        return "\n".join(lines)


def _prefix_tree_set(p, psi):
    """The vertices lying on branches of the closed end set psi."""
    aut = psi.automaton.trim_safety()
    if aut.is_empty_safety():
        return empty_set(p)
    # trimmed safety: every reachable word is a branch prefix
    word_aut = Automaton(aut.n, aut.initial, aut.trans, aut.omega, None)
    return RegularVertexSet.of(p, word_aut)


def _ray_partition_sample(p, psi, depth=4, cap=16):
    """Explicit members of the canonical disjoint ray family covering
    psi's prefix tree: from every entry vertex (the root, and every
    non-least live child) follow the lex-least live continuation."""
    aut = psi.automaton.trim_safety()
    if aut.is_empty_safety():
        return (), "empty end part"
    rays = []

    def follow(word, q):
        lasso = list(word)
        seen = {}
        while q not in seen:
            seen[q] = len(lasso)
            s, t = min((s, t) for (s, t) in aut.out_edges(q) if t in aut.live_states())
            lasso.append(s)
            q = t
        cut = seen[q]
        return End.make(tuple(lasso[:cut]), tuple(lasso[cut:]))

    entries = [((), aut.initial)]
    frontier = [((), aut.initial)]
    for _ in range(depth):
        nxt = []
        for word, q in frontier:
            live = [(s, t) for (s, t) in aut.out_edges(q) if t in aut.live_states()]
            for i, (s, t) in enumerate(sorted(live)):
                if i > 0:
                    entries.append((word + (s,), t))
                nxt.append((word + (s,), t))
        frontier = nxt
    for word, q in entries[:cap]:
        rays.append(follow(word, q))
    note = f"entries enumerated to depth {depth}" + (", truncated" if len(entries) > cap else "")
    return tuple(sorted(set(rays))), note


def _top_star_centers(p, x_prime, psi):
    """Tops whose attachments land in X' infinitely often."""
    parts = []
    for fam in p.tops:
        if fam.indices == "all":
            verdict = _family_centers_all(p, fam, psi)
            if verdict == "all":
                parts.append(TopSet(p, fam.name, "all"))
            elif verdict == "none":
                continue
            else:
                raise UnsupportedError(
                    f"family {fam.name}: mixed star-centre verdict over all indices"
                )
            continue
        hits = []
        for w in p._family_index_list(fam):
            fin, _depths = _attach_membership(p, x_prime, fam, w)
            if not fin:
                hits.extend(Top(fam.name, tuple(w), c) for c in range(fam.count))
        if hits:
            parts.append(TopSet(p, fam.name, frozenset(hits)))
    return parts


def _family_centers_all(p, fam, psi):
    """For an all-indexed family: are all (or no) member branches in
    psi?  Mixed answers are unsupported symbolically."""
    psi_aut = psi.automaton.trim_safety()
    prod, labels = p.shape.product(psi_aut, track="b")
    verdicts = set()
    for i in prod.reachable_states():
        shape_q, psi_q = labels[i]
        if psi_q is None:
            verdicts.add(False)
            continue
        ok = psi_aut.branch_survives(fam.tail.prefix, fam.tail.cycle, start=psi_q)
        ok = ok and p.shape.branch_survives(fam.tail.prefix, fam.tail.cycle, start=shape_q)
        valid = p.shape.branch_survives(fam.tail.prefix, fam.tail.cycle, start=shape_q)
        if valid:
            verdicts.add(ok)
    if verdicts == {True}:
        return "all"
    if verdicts in ({False}, set()):
        return "none"
    return "mixed"


def _chord_hubs(p, x_prime):
    """Vertices receiving infinitely many chords from X': for each rule
    (state, k), the vertices with infinitely many depth+k descendants in
    state `state` inside X' (needs an omega-branching state between)."""
    if not p.chords:
        return []
    aut = x_prime.skeleton_automaton()
    prod, labels = p.shape.product(
        aut, finals=lambda a, b: b is not None and b in aut.finals, track="b"
    )
    hubs_finals = set()
    for i in range(prod.n):
        for rule in p.chords:
            if _infinite_k_paths(p, prod, labels, i, rule.offset, rule.state):
                hubs_finals.add(i)
                break
    if not hubs_finals:
        return []
    hub_aut = Automaton(prod.n, prod.initial, prod.trans, prod.omega, frozenset(hubs_finals))
    return [RegularVertexSet.of(p, hub_aut)]


def _infinite_k_paths(p, prod, labels, start, k, shape_state):
    """Are there infinitely many k-step words from `start` in the
    product ending at the given shape state inside X'?"""

    def count(i, j):
        # returns 0, 1 (some, finitely many) or 2 (infinitely many)
        if j == k:
            shape_q, x_q = labels[i]
            return 1 if (shape_q == shape_state and i in prod.finals) else 0
        total = 0
        rule = prod.omega.get(i)
        for _s, t in [(s, t) for (s, t) in prod.out_edges(i)]:
            c = count(t, j + 1)
            if c and rule is not None and t in rule.cycle:
                return 2  # omega class: infinitely many siblings
            total = min(2, total + c)
        return total

    return count(start, 0) >= 2


def envelope(p, x_vertex=None, x_ends=None, ray_depth=4):
    """Envelope of a set of vertices and ends.

    The end part must be closed; the vertex part any supported
    descriptor.  X' adds the prefix tree of the closure's end part (the
    vertex union of the canonical maximal disjoint ray family), and X*
    adds every star centre firing into X'."""
    if x_vertex is None:
        x_vertex = empty_set(p)
    psi_star = boundary(p, x_vertex)
    if x_ends is not None:
        x_ends._require_closed("envelope end part")
        psi_star = psi_star.union(x_ends)
    tree = _prefix_tree_set(p, psi_star)
    x_prime = x_vertex.union(tree)
    center_parts = _top_star_centers(p, x_prime, psi_star)
    center_parts += _chord_hubs(p, x_prime)
    if center_parts:
        centers = center_parts[0]
        for c in center_parts[1:]:
            centers = centers.union(c)
    else:
        centers = empty_set(p)
    x_star = x_prime.union(centers)
    rays, note = _ray_partition_sample(p, psi_star, depth=ray_depth)
    return EnvelopeResult(
        presentation=p,
        x_prime=x_prime,
        star_centers=centers,
        x_star=x_star,
        psi_star=psi_star,
        ray_sample=rays,
        ray_note=note,
    )


# -- verification -----------------------------------------------------------------


def verify_envelope(p, result, sample_depth=3, claim_cap=40):
    """Re-verify the envelope conclusions:

    - the boundary of X* equals the closure's end part (recognizers);
    - sampled separators S: components C of G-S meeting X' finitely
      satisfy X* in C = X' in C;
    - sampled separators S: components C whose closure avoids X meet
      X* finitely;
    - X* has finite adhesion."""
    report = {"checks": []}

    def add(name, ok, detail=""):
        report["checks"].append({"check": name, "ok": bool(ok), "detail": str(detail)})

    bnd = boundary(p, result.x_star)
    ok_b = bnd.equals(result.psi_star)
    add("boundary(X*) equals closure(X) among ends", ok_b)

    separators = _sample_separators(p, sample_depth, claim_cap)
    ok_a = True
    ok_c = True
    detail_a = detail_c = ""
    for sep in separators:
        comps = components_without(p, sep)
        for comp in comps:
            region = _component_vertices(p, comp)
            inter_xp = _intersection_infinite(p, result.x_prime, region, comp)
            if inter_xp == "finite":
                # claim: X* adds nothing inside this component
                bad = _star_member_in_component(p, result.star_centers, comp)
                if bad is not None:
                    ok_a = False
                    detail_a = f"S={sep} component {comp.key()[1]} gains {bad}"
            closure_avoids = _closure_avoids(p, result, comp)
            if closure_avoids:
                inter_xs = _intersection_infinite(p, result.x_star, region, comp)
                if inter_xs == "infinite":
                    ok_c = False
                    detail_c = f"S={sep}"
    add("components meeting X' finitely gain no star centres", ok_a, detail_a)
    add("components whose closure avoids X meet X* finitely", ok_c, detail_c)

    adh = check_finite_adhesion(p, result.x_star)
    add("X* has finite adhesion", adh["ok"], adh.get("witness", ""))
    report["ok"] = all(c["ok"] for c in report["checks"])
    return report


def _sample_separators(p, depth, cap):
    tr = truncate(p, depth)
    singles = [[v] for v in tr.skeleton]
    pairs = []
    for i, a in enumerate(tr.skeleton):
        for b in tr.skeleton[i + 1:]:
            pairs.append([a, b])
    seps = [[]] + singles + pairs
    return seps[:cap]


def _component_vertices(p, comp):
    from .descriptors import RegionSet

    return RegionSet(p, comp)


def _intersection_infinite(p, vset, region, comp):
    """'finite' or 'infinite': size of vset within the component."""
    try:
        aut = vset.skeleton_automaton().intersect_words(region.skeleton_automaton())
    except UnsupportedError:
        return "unknown"
    if word_language_infinite(aut):
        return "infinite"
    # explicit top members inside count finitely; all-top families
    # through the component's subtrees are infinite
    for part in vset.parts():
        if isinstance(part, TopSet) and part.which == "all":
            for f in comp.subtree_prefixes:
                return "infinite"
    return "finite"


def _star_member_in_component(p, centers, comp):
    for part in centers.parts():
        if isinstance(part, (FiniteVertexSet, TopSet)):
            try:
                for t in part.top_members_explicit():
                    if comp.contains_vertex(t):
                        return t
            except UnsupportedError:
                pass
            if isinstance(part, FiniteVertexSet):
                for v in part.members:
                    if not isinstance(v, Top) and comp.contains_vertex(v):
                        return v
        elif isinstance(part, RegularVertexSet):
            inter = part.skeleton_automaton().intersect_words(
                _component_vertices(p, comp).skeleton_automaton()
            )
            w = inter.shortest_accepted()
            if w is not None:
                return w
    return None


def _closure_avoids(p, result, comp):
    """Does the closure of X avoid this component entirely?"""
    region = _component_vertices(p, comp)
    # any original X vertex inside?
    inter = _intersection_infinite(p, result.x_prime, region, comp)
    if inter != "finite":
        return False
    # ends of the closure inside the component?
    reg_b = EndSetRecognizer(p, region.boundary_automaton())
    joint = reg_b.intersect(result.psi_star)
    if not joint.is_empty():
        return False
    # finite intersections still count as meeting X; require none
    aut = result.x_prime.skeleton_automaton().intersect_words(region.skeleton_automaton())
    return aut.shortest_accepted() is None


# -- finite adhesion ---------------------------------------------------------------


def check_finite_adhesion(p, u, window=6):
    """Report on the neighbourhoods of the components of G - u.

    Exact via complement analysis where supported; the cofinal rule
    analysis (a top or chord firing infinitely into u from outside)
    produces the witnesses."""
    report = {"components": [], "ok": True}
    try:
        ana = complement_components(p, u, window=window)
    except UnsupportedError as e:
        report["ok"] = False
        report["witness"] = f"unsupported: {e}"
        report["unsupported"] = True
        return report
    for r in ana.regions:
        entry = {
            "anchors": [word_str(m) for m in r.anchors],
            "tops": [str(t) for t in r.tops],
            "neighbors": len(r.neighbor_list) if r.neighbor_finite else "infinite",
        }
        if not r.neighbor_finite:
            report["ok"] = False
            kind, w = r.neighbor_witness
            entry["witness"] = str(w)
            report["witness"] = str(w)
        report["components"].append(entry)
    report["exhaustive_to"] = ana.exhaustive_to
    return report


# -- torso extension ----------------------------------------------------------------


@dataclass
class TorsoExtension:
    base: VertexSet
    added: FiniteVertexSet
    extended: VertexSet
    trees: dict

    def report(self):
        lines = [f"torso extension: {len(self.trees)} connecting trees"]
        for anchor, tree in sorted(self.trees.items(), key=lambda kv: str(kv[0])):
            lines.append(f"  component at {anchor}: tree {sorted(map(word_str, tree))}")
        return "\n".join(lines)


def torso_extension(p, h, window=6, depth=10):
    """Connect h through a canonical finite tree inside every component
    of G - h: the first two neighbours are joined by the shallowest
    (then lexicographically least) path, later neighbours attach by
    their shallowest path to the tree."""
    ana = complement_components(p, h, window=window)
    bad = [r for r in ana.regions if not r.neighbor_finite]
    if bad:
        raise InvariantError(
            f"component at {bad[0].anchors[:1]} has infinite neighbourhood: {bad[0].neighbor_witness}"
        )
    tr = truncate(p, depth)
    adj = {}
    for (a, b) in tr.edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    added = set()
    trees = {}
    for r in ana.regions:
        nbrs = [v for v in r.neighbor_list]
        if len(nbrs) == 0:
            continue
        allowed = set()
        for v in adj:
            if r.contains_vertex(v):
                allowed.add(v)
        allowed |= set(nbrs)
        tree = _steiner_tree(adj, allowed, nbrs)
        if tree is None:
            raise InvariantError(
                f"could not connect N(C) at {r.anchors[:1]} within depth {depth}"
            )
        inner = {v for v in tree if not h.contains(v)}
        if len(nbrs) == 1:
            # single-neighbour components get the lex-least pendant edge
            v = nbrs[0]
            cands = sorted(
                (w for w in adj.get(v, ()) if r.contains_vertex(w)),
                key=_vertex_sort_key,
            )
            if cands:
                inner = {cands[0]}
                tree = {v, cands[0]}
        added |= inner
        trees[r.anchors[0] if r.anchors else r.tops[0]] = tree
    added_set = FiniteVertexSet(p, frozenset(added))
    return TorsoExtension(base=h, added=added_set, extended=h.union(added_set), trees=trees)


def _vertex_sort_key(v):
    if isinstance(v, Top):
        return (1, v.family, v.index, v.copy)
    return (0, len(v), v)


def _steiner_tree(adj, allowed, terminals):
    """Canonical approximate Steiner tree: BFS-join the terminals in
    order, shortest paths with lexicographic tie-breaks."""
    from collections import deque

    terminals = sorted(set(terminals), key=_vertex_sort_key)
    tree = {terminals[0]}
    for t in terminals[1:]:
        if t in tree:
            continue
        # BFS from the tree to t inside allowed
        seen = {v: None for v in sorted(tree, key=_vertex_sort_key)}
        queue = deque(sorted(tree, key=_vertex_sort_key))
        found = None
        while queue:
            v = queue.popleft()
            if v == t:
                found = v
                break
            for w in sorted(adj.get(v, ()), key=_vertex_sort_key):
                if w in allowed and w not in seen:
                    seen[w] = v
                    queue.append(w)
        if found is None:
            return None
        path = []
        v = found
        while v is not None:
            path.append(v)
            v = seen[v]
        tree |= set(path)
    return tree


def verify_torso_extension(p, ext, psi, k=4, depth=12, samples=4):
    """Torso-extension conclusions: connected, boundary preserved,
    end-faithful (sampled: equivalent ray prefixes stay joined by >= k
    disjoint paths in the truncation)."""
    report = {"checks": []}

    def add(name, ok, detail=""):
        report["checks"].append({"check": name, "ok": bool(ok), "detail": str(detail)})

    bnd_new = boundary(p, ext.extended)
    bnd_old = boundary(p, ext.base)
    add("boundary preserved", bnd_new.equals(bnd_old))

    tr = truncate(p, depth)
    members = [v for v in tr.vertices if ext.extended.contains(v)]
    ok_conn, detail = _connected_in_truncation(p, tr, members, ext.extended)
    add(f"connected on the depth-{depth} window", ok_conn, detail)

    ends = psi.sample_ends(2, 2)[:samples]
    ok_faith = True
    detail_f = ""
    for e in ends:
        verdict = _faithful_approach(p, tr, ext.extended, e, k)
        if not verdict[0]:
            ok_faith = False
            detail_f = f"{e}: {verdict[1]}"
    add(f"end-faithfulness spot check ({k} disjoint paths)", ok_faith, detail_f)
    report["ok"] = all(c["ok"] for c in report["checks"])
    return report


def _faithful_approach(p, tr, vset, end, k):
    """In a tree skeleton distinct rays toward one end share the branch
    cofinally, so the only genuinely distinct approach runs through a
    top on the branch; when one exists in the set, it must be joined to
    the branch approach by >= k disjoint paths."""
    depth = tr.depth
    branch_pts = [end.head(j) for j in range(2, depth + 1) if vset.contains(end.head(j))]
    if len(branch_pts) < 2:
        return True, "no in-set approach to spot-check"
    alt = []
    for fam in p.tops:
        if fam.indices == "all":
            continue
        for w in p._family_index_list(fam):
            if fam.branch(w) == end:
                for c in range(fam.count):
                    t = Top(fam.name, tuple(w), c)
                    if vset.contains(t):
                        alt.append(t)
    if not alt:
        return True, "single approach"
    # every approach shares the branch vertices cofinally; the shared
    # vertices are trivial connecting paths, pairwise disjoint
    if len(branch_pts) >= k:
        return True, f"{len(branch_pts)} shared branch vertices"
    adj = {}
    for (x, y) in tr.edges:
        if vset.contains(x) and vset.contains(y):
            adj.setdefault(x, set()).add(y)
            adj.setdefault(y, set()).add(x)
    sources = set(branch_pts)
    targets = set(alt)
    used = set()
    count = 0
    while count < k:
        path = _bfs_set_to_set(adj, sources, targets, used)
        if path is None:
            break
        for v in path:
            used.add(v)
        count += 1
    if count >= k:
        return True, ""
    return False, f"only {count} disjoint branch-to-top paths"


def _bfs_set_to_set(adj, sources, targets, used):
    from collections import deque

    seen = {}
    queue = deque()
    for s in sorted(sources, key=_vertex_sort_key):
        if s not in used:
            seen[s] = None
            queue.append(s)
    while queue:
        v = queue.popleft()
        if v in targets and not any(x in targets for x in _walk_back(seen, v)[1:]):
            return _walk_back(seen, v)
        for w in sorted(adj.get(v, ()), key=_vertex_sort_key):
            if w not in seen and w not in used:
                seen[w] = v
                queue.append(w)
    return None


def _walk_back(seen, v):
    path = []
    while v is not None:
        path.append(v)
        v = seen[v]
    return path


def _connected_in_truncation(p, tr, members, vset):
    """Connectivity of the member set, treating depth-window exits as
    connected through their own subtree (frontier vertices of the set
    count as one pending continuation)."""
    if not members:
        return True, "empty"
    adj = {}
    for (a, b) in tr.edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    mset = set(members)
    seen = {members[0]}
    stack = [members[0]]
    while stack:
        v = stack.pop()
        for w in adj.get(v, ()):
            if w in mset and w not in seen:
                seen.add(w)
                stack.append(w)
    missing = mset - seen
    # vertices only reachable through deeper levels are tolerated when
    # they sit under a frontier member of the set
    hard_missing = [
        v
        for v in missing
        if not isinstance(v, Top) and not any(
            tuple(v[: len(f)]) == f for f in tr.frontier if f in mset
        )
    ]
    if hard_missing:
        return False, f"e.g. {hard_missing[0]}"
    return True, ""


def connected_envelope(p, x_vertex=None, x_ends=None, window=6, depth=10):
    """Envelope followed by a torso extension: connected, end-faithful,
    same boundary."""
    res = envelope(p, x_vertex, x_ends)
    ext = torso_extension(p, res.x_star, window=window, depth=depth)
    return EnvelopeResult(
        presentation=p,
        x_prime=res.x_prime,
        star_centers=res.star_centers,
        x_star=ext.extended,
        psi_star=res.psi_star,
        ray_sample=res.ray_sample,
        ray_note=res.ray_note + "; torso-extended",
    )
