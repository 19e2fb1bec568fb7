"""Tree-decompositions of finite adhesion as lazily generated trees.

A decomposition is a rooted tree of nodes, each carrying a part (a
vertex-set descriptor), the finite adhesion set shared with its parent,
and a region descriptor for the side of the tree past that edge.  The
tree is never materialized: children are generated on demand, node
signatures mark isomorphic template classes, and every verification is
a certified-to-depth statement over truncations and recognizers."""

from __future__ import annotations

from dataclasses import dataclass, field

from .branches import End, word_str
from .descriptors import FiniteVertexSet, RegularVertexSet, VertexSet, empty_set
from .endspace import (
    EndSetRecognizer,
    all_ends,
    boundary,
    direction,
    empty_end_set,
    enumerate_ends,
)
from .errors import InvariantError, UndeterminedError, UnsupportedError
from .presentation import GraphPresentation, Top, components_without, truncate


@dataclass
class DecompNode:
    """One node of the decomposition tree.

    path: template path of child keys from the root.
    part: the node's part V_t.
    adhesion: the finite separator shared with the parent (empty at
    the root).
    region: answers membership for the graph side strictly past the
    parent edge (contains_vertex / contains_end); None at the root.
    signature: template class key; equal signatures mean the subtree
    construction repeats.
    """

    path: tuple
    part: VertexSet
    adhesion: tuple = ()
    region: object = None
    signature: object = None
    payload: object = None

    @property
    def level(self):
        return len(self.path)

    def name(self):
        return "/".join(str(k) for k in self.path) or "root"


@dataclass
class ChildFamily:
    """A parameterized class of children: one isomorphic child per
    parameter value; instantiate(param) builds the concrete node."""

    key_base: object
    params: object  # human-readable description of the parameter set
    instantiate: object  # callable param -> DecompNode
    param_for_end: object  # callable End -> param | None
    param_for_vertex: object = None
    sample_params: tuple = ()


class TreeDecomposition:
    """Lazy rooted tree-decomposition of finite adhesion."""

    def __init__(self, p, root, children_fn, provenance="", claims=None, boundary_hint=None, level_cover_fn=None, interior_union_fn=None):
        self.presentation = p
        self.root = root
        self._children_fn = children_fn
        self._cache = {}
        self.provenance = provenance
        self.claims = dict(claims or {})
        self.boundary_hint = boundary_hint
        self._level_cover_fn = level_cover_fn
        # for builders that absorb prescribed ends into parts: an end in
        # that union must never be reported as a tree end, however
        # periodic the walk looks before the absorbing level
        self.interior_union_fn = interior_union_fn

    def children(self, node):
        """(explicit child nodes, child families) below the node."""
        key = node.path
        if key not in self._cache:
            self._cache[key] = self._children_fn(node)
        return self._cache[key]

    def child_for_end(self, node, end):
        explicit, families = self.children(node)
        hits = [c for c in explicit if c.region.contains_end(end)]
        for fam in families:
            param = fam.param_for_end(end)
            if param is not None:
                hits.append(fam.instantiate(param))
        if len(hits) > 1:
            raise InvariantError(
                f"end {end} lives past two children of {node.name()}"
            )
        return hits[0] if hits else None

    def child_for_vertex(self, node, v):
        explicit, families = self.children(node)
        hits = [c for c in explicit if c.region.contains_vertex(v)]
        for fam in families:
            if fam.param_for_vertex is not None:
                param = fam.param_for_vertex(v)
                if param is not None:
                    hits.append(fam.instantiate(param))
        if len(hits) > 1:
            raise InvariantError(f"vertex past two children of {node.name()}")
        return hits[0] if hits else None

    def nodes_to_level(self, level, width_cap=64):
        """Explicit nodes to the given level, families sampled."""
        out = [self.root]
        frontier = [self.root]
        for _ in range(level):
            nxt = []
            for node in frontier:
                explicit, families = self.children(node)
                kids = list(explicit)
                for fam in families:
                    for param in fam.sample_params:
                        kids.append(fam.instantiate(param))
                nxt.extend(kids[:width_cap])
            out.extend(nxt)
            frontier = nxt
        return out

    def edges_to_level(self, level, width_cap=64):
        """(parent, child) pairs with child level <= level."""
        out = []
        frontier = [self.root]
        for _ in range(level):
            nxt = []
            for node in frontier:
                explicit, families = self.children(node)
                kids = list(explicit)
                for fam in families:
                    for param in fam.sample_params:
                        kids.append(fam.instantiate(param))
                for c in kids[:width_cap]:
                    out.append((node, c))
                    nxt.append(c)
            frontier = nxt
        return out

    def level_cover(self, n):
        """Union of the parts over the first n+1 levels (exact)."""
        if self._level_cover_fn is not None:
            return self._level_cover_fn(n)
        if any(self.children(node)[1] for node in self.nodes_to_level(n)):
            raise UnsupportedError("level cover over child families needs a builder hook")
        out = None
        for node in self.nodes_to_level(n, width_cap=10**9):
            out = node.part if out is None else out.union(node.part)
        return out

    def dump(self, depth=3):
        lines = [f"[tree] provenance={self.provenance}"]
        for node in self.nodes_to_level(depth, width_cap=8):
            lines.append(f"[part {node.name()}] {node.part}")
            if node.adhesion:
                sep = ", ".join(_vn(v) for v in node.adhesion)
                lines.append(f"[adhesion {node.name()}] {{{sep}}}")
        return "\n".join(lines)


def _vn(v):
    if isinstance(v, Top):
        return str(v)
    return word_str(tuple(v))


# -- the end-to-tree map f_T ----------------------------------------------------


@dataclass(frozen=True)
class EndImage:
    kind: str  # "node" | "tree_end"
    node_path: tuple = None
    ray: End = None  # eventually periodic template path

    def __str__(self):
        if self.kind == "node":
            return f"Node({'/'.join(map(str, self.node_path)) or 'root'})"
        return f"TreeEnd({self.ray})"


def f_T(t, end, max_depth=48):
    """The node or tree end the end points to: orient every edge along
    a descending walk; report a tree end once the walk's (signature,
    branch-suffix) pair repeats consistently, and raise Undetermined if
    no repetition stabilizes within the bound."""
    p = t.presentation
    if not p.valid_end(end):
        raise InvariantError(f"{end} is not a branch of the shape")
    interior_bound = (
        t.interior_union_fn(end) if t.interior_union_fn is not None else False
    )
    node = t.root
    trail = []  # (key, signature, suffix key)
    seen = {}
    while len(trail) < max_depth:
        child = t.child_for_end(node, end)
        if child is None:
            return EndImage("node", node_path=node.path)
        key = child.path[-1]
        suffix = _suffix_key(end, child)
        sig = (child.signature, suffix, key)
        if sig in seen and not interior_bound:
            start = seen[sig]
            pre = tuple(k for (k, _s) in trail[:start])
            cyc = tuple(k for (k, _s) in trail[start:])
            if cyc:
                return EndImage("tree_end", ray=End.make(pre, _canon_cycle(cyc)))
        seen[sig] = len(trail)
        trail.append((key, sig))
        node = child
    raise UndeterminedError(f"orientation of {end} did not stabilize", max_depth)


def _canon_cycle(cyc):
    # template path keys may not be ints; keep them as-is in the cycle
    return cyc


def _suffix_key(end, child):
    """The end's residual description relative to the child's region:
    the canonical tail past an anchor depth when one is available."""
    region = child.region
    anchor_depth = None
    for attr in ("anchors", "subtree_prefixes"):
        xs = getattr(region, attr, None)
        if xs:
            anchor_depth = min(len(x) for x in xs)
            break
    if anchor_depth is None:
        anchor_depth = child.level
    return end.tail_from(anchor_depth)


# -- verification -----------------------------------------------------------------


def verify_decomposition(t, depth=8, sample_width=48):
    """Check (T1), (T2) on the depth-d truncation, (T3) along descent
    paths, finiteness of the adhesion sets, and the upwards-connected
    and connected-parts flags; failures carry witnesses."""
    p = t.presentation
    report = {"checks": [], "depth": depth}

    def add(name, ok, detail=""):
        report["checks"].append({"check": name, "ok": bool(ok), "detail": str(detail)})

    tr = truncate(p, depth)

    # (T1) + (T3) during the same walks
    ok_t1 = True
    ok_t3 = True
    witness_t1 = witness_t3 = ""
    for v in tr.vertices:
        found = _minimal_node_for(t, v, max_level=3 * depth + 6)
        if found is None:
            ok_t1 = False
            witness_t1 = _vn(v)
            break
        node, seen_in = found
        # (T3): the nodes containing v along the walk form one interval
        gaps = _containment_gaps(seen_in)
        if gaps:
            ok_t3 = False
            witness_t3 = f"{_vn(v)} missing at level {gaps[0]}"
    add("(T1) every vertex in some part", ok_t1, witness_t1)

    ok_t2 = True
    witness_t2 = ""
    for (a, b) in tr.edges:
        if not _edge_in_some_part(t, a, b, max_level=3 * depth + 6):
            ok_t2 = False
            witness_t2 = f"({_vn(a)}, {_vn(b)})"
            break
    add("(T2) every edge inside some part", ok_t2, witness_t2)
    add("(T3) containment connected along descents", ok_t3, witness_t3)

    ok_fin = True
    max_adh = 0
    for (parent, child) in t.edges_to_level(depth, width_cap=sample_width):
        max_adh = max(max_adh, len(child.adhesion))
    add("finite adhesion", ok_fin, f"max |X_e| = {max_adh} on sampled edges")

    if t.claims.get("upwards_connected"):
        oku, detail = _verify_upwards_connected(t, depth, sample_width)
        add("upwards connected", oku, detail)
    if t.claims.get("connected_parts"):
        okc, detail = _verify_connected_parts(t, depth, sample_width)
        add("connected parts", okc, detail)

    report["ok"] = all(c["ok"] for c in report["checks"])
    return report


def _minimal_node_for(t, v, max_level):
    node = t.root
    seen_in = []
    level = 0
    while level <= max_level:
        inside = node.part.contains(v)
        seen_in.append(inside)
        if inside:
            return node, seen_in
        child = t.child_for_vertex(node, v)
        if child is None:
            return None
        node = child
        level += 1
    return None


def _containment_gaps(seen_in):
    # the walk stops at the first containing node, so gaps cannot occur
    # here; retained for walks extended past it by callers
    started = False
    gaps = []
    for i, flag in enumerate(seen_in):
        if flag:
            started = True
        elif started:
            gaps.append(i)
    return gaps


def _edge_in_some_part(t, a, b, max_level):
    node = t.root
    for _ in range(max_level):
        if node.part.contains(a) and node.part.contains(b):
            return True
        ca = t.child_for_vertex(node, a)
        cb = t.child_for_vertex(node, b)
        if ca is not None and cb is not None:
            if ca.path != cb.path:
                return False
            node = ca
        elif ca is not None:
            node = ca
        elif cb is not None:
            node = cb
        else:
            return False
    return False


def _verify_upwards_connected(t, depth, sample_width, per_class=3):
    """Every sampled edge's upper side must be a component of G - X_e;
    edges are grouped into template classes and a few representatives
    of each class are checked."""
    p = t.presentation
    counts = {}
    checked = 0
    for (parent, child) in t.edges_to_level(depth, width_cap=sample_width):
        sig = (parent.signature, child.signature)
        if counts.get(sig, 0) >= per_class:
            continue
        counts[sig] = counts.get(sig, 0) + 1
        checked += 1
        ok, detail = _region_is_component(p, child.adhesion, child.region)
        if not ok:
            return False, f"edge into {child.name()}: {detail}"
    return True, f"{len(counts)} edge classes, {checked} edges checked"


def _region_is_component(p, adhesion, region):
    comps = components_without(p, list(adhesion))
    probe = _region_probe_vertex(p, region)
    if probe is None:
        return True, "region shows no vertex to probe"
    target = None
    for c in comps:
        if c.is_family():
            if not isinstance(probe, Top) and c._under_residual(tuple(probe)):
                target = c.instantiate(probe[len(c.family[0])])
        elif c.contains_vertex(probe):
            target = c
    if target is None:
        return False, f"no component of G-X_e holds {probe}"
    # region subset of component and vice versa, sampled on a window
    tr = truncate(p, max((len(x) for x in _skel(adhesion)), default=1) + 3)
    for v in tr.vertices:
        inr = region.contains_vertex(v)
        inc = target.contains_vertex(v)
        if inr != inc:
            return False, f"region and component differ at {_vn(v)}"
    return True, ""


def _skel(vs):
    return [v for v in vs if not isinstance(v, Top)]


def _region_probe_vertex(p, region):
    for attr in ("anchors", "subtree_prefixes"):
        xs = getattr(region, attr, None)
        if xs:
            return sorted(xs, key=len)[0]
    core = getattr(region, "core", None)
    if core:
        skel = [v for v in core if not isinstance(v, Top)]
        if skel:
            return sorted(skel, key=len)[0]
    return None


def _verify_connected_parts(t, depth, sample_width):
    p = t.presentation
    tr = truncate(p, depth + 2)
    adj = {}
    for (a, b) in tr.edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen_sigs = set()
    for node in t.nodes_to_level(depth, width_cap=sample_width):
        if node.signature in seen_sigs:
            continue
        seen_sigs.add(node.signature)
        members = [v for v in tr.vertices if node.part.contains(v)]
        if not members:
            continue
        reach = {members[0]}
        stack = [members[0]]
        mset = set(members)
        while stack:
            v = stack.pop()
            for w in adj.get(v, ()):
                if w in mset and w not in reach:
                    reach.add(w)
                    stack.append(w)
        hard = [
            v
            for v in mset - reach
            if isinstance(v, Top)
            or not any(tuple(v[: len(f)]) == f for f in tr.frontier if f in mset)
        ]
        if hard:
            return False, f"part {node.name()} splits at {_vn(hard[0])}"
    return True, f"{len(seen_sigs)} part classes checked"


# -- classification ----------------------------------------------------------------


@dataclass
class Classification:
    verdicts: dict
    witnesses: dict
    depth: int
    sampled_ends: tuple
    images: dict

    def verdict(self, name):
        return self.verdicts.get(name)

    def report(self):
        lines = [f"classification (certified to depth {self.depth})"]
        for k in sorted(self.verdicts):
            w = self.witnesses.get(k)
            lines.append(f"  {k}: {self.verdicts[k]}" + (f"  [{w}]" if w else ""))
        return "\n".join(lines)


def classify(t, psi=None, depth=8, pre_len=3, cycle_len=2):
    """Verdicts for displays / homeomorphically displays / distributes /
    bijectively distributes / distinguishes / represents, on the
    describable ends (period bounded), each certified to the depth."""
    p = t.presentation
    if psi is None:
        psi = t.boundary_hint if t.boundary_hint is not None else all_ends(p)
    sample = enumerate_ends(p, pre_len, cycle_len)
    images = {}
    for e in sample:
        images[e] = f_T(t, e)
    verdicts = {}
    witnesses = {}

    boundary_sample = [e for e in sample if images[e].kind == "tree_end"]
    interior_sample = [e for e in sample if images[e].kind == "node"]

    # boundary matches psi on the sample
    ok_b = all((images[e].kind == "tree_end") == psi.contains(e) for e in sample)
    if not ok_b:
        witnesses["boundary"] = next(
            f"{e} -> {images[e]}" for e in sample if (images[e].kind == "tree_end") != psi.contains(e)
        )
    verdicts["boundary_matches"] = ok_b

    inj = len({str(images[e]) for e in boundary_sample}) == len(boundary_sample)
    if not inj:
        seenm = {}
        for e in boundary_sample:
            k = str(images[e])
            if k in seenm:
                witnesses["displays"] = f"{seenm[k]} and {e} -> {k}"
                break
            seenm[k] = e
    onto, onto_wit = _tree_ends_covered(t, images, boundary_sample, depth)
    verdicts["displays"] = bool(ok_b and inj and onto)
    if not onto:
        witnesses["displays"] = onto_wit

    if verdicts["displays"]:
        homeo, wit = _homeomorphic_check(t, psi, images, boundary_sample, depth)
        verdicts["homeomorphic_display"] = homeo
        if wit:
            witnesses["homeomorphic_display"] = wit
    else:
        verdicts["homeomorphic_display"] = False

    node_images = [str(images[e]) for e in interior_sample]
    dist_inj = len(set(node_images)) == len(node_images)
    interior_ok = all(not psi.contains(e) for e in interior_sample)
    verdicts["distributes"] = bool(dist_inj and interior_ok and ok_b)
    if not dist_inj:
        seenm = {}
        for e in interior_sample:
            k = str(images[e])
            if k in seenm:
                witnesses["distributes"] = f"{seenm[k]} and {e} live in {k}"
                break
            seenm[k] = e
    ended_nodes = {str(images[e]) for e in interior_sample}
    verdicts["bijectively_distributes"] = bool(
        verdicts["distributes"] and _nodes_covered(t, ended_nodes, depth)
    )

    verdicts["distinguishes"] = (
        len({str(images[e]) for e in sample}) == len(sample)
    )
    verdicts["realises"] = bool(verdicts["displays"] and verdicts["distributes"])
    verdicts["represents"] = bool(
        verdicts["displays"] and verdicts["bijectively_distributes"]
    )
    return Classification(
        verdicts=verdicts,
        witnesses=witnesses,
        depth=depth,
        sampled_ends=tuple(sample),
        images=images,
    )


def _tree_ends_covered(t, images, boundary_sample, depth):
    """Surjectivity onto the tree ends, sampled: walk template lassos
    to `depth` and pull each back to an end of the graph."""
    hit = {str(images[e].ray): e for e in boundary_sample}
    for ray in _sample_tree_ends(t, depth):
        if str(ray) not in hit:
            back = pullback_end(t, ray, max_depth=3 * depth + 8)
            if back is None:
                return False, f"tree end {ray} has no graph end in the sample"
            if f_T(t, back).kind != "tree_end":
                return False, f"pullback of {ray} lives in a part"
    return True, ""


def _sample_tree_ends(t, depth, cap=24):
    """Eventually periodic template paths found by walking signatures."""
    out = []

    def walk(node, path, seen, budget):
        if len(out) >= cap or budget <= 0:
            return
        explicit, families = t.children(node)
        kids = list(explicit)
        for fam in families:
            for paramv in fam.sample_params[:2]:
                kids.append(fam.instantiate(paramv))
        for c in kids[:6]:
            key = c.path[-1]
            sig = (c.signature, key)
            if sig in seen:
                # the first occurrence's key sits at index seen[sig];
                # the lasso repeats the keys strictly after it
                start = seen[sig]
                pre = path[: start + 1]
                cyc = path[start + 1:] + (key,)
                try:
                    out.append(End.make(tuple(pre), tuple(cyc)))
                except Exception:
                    pass
                continue
            walk(c, path + (key,), {**seen, sig: len(path)}, budget - 1)

    walk(t.root, (), {}, depth)
    uniq = []
    for r in out:
        if all(str(r) != str(x) for x in uniq):
            uniq.append(r)
    return uniq


def pullback_end(t, ray, max_depth=32):
    """The graph end corresponding to a tree end given as an eventually
    periodic template path: intersect the nested regions."""
    node = t.root
    for i in range(max_depth):
        key = ray.symbol(i)
        explicit, families = t.children(node)
        nxt = None
        for c in explicit:
            if c.path[-1] == key:
                nxt = c
                break
        if nxt is None:
            for fam in families:
                try:
                    nxt = fam.instantiate(key)
                    break
                except Exception:
                    continue
        if nxt is None:
            return None
        node = nxt
        end = _region_limit_end(t.presentation, node.region)
        if end is not None and i >= len(ray.prefix) + len(ray.cycle):
            return end
    return _region_limit_end(t.presentation, node.region)


def _region_limit_end(p, region):
    aut = region.boundary_automaton() if hasattr(region, "boundary_automaton") else None
    if aut is None:
        return None
    rec = EndSetRecognizer(p, aut)
    if rec.is_empty():
        return None
    if rec.has_single_end():
        ends = rec.explicit_ends()
        if ends:
            return ends[0]
    return None


def _homeomorphic_check(t, psi, images, boundary_sample, depth):
    """Both continuity directions at finite precision."""
    p = t.presentation
    # forward: graph neighborhoods map inside tree neighborhoods
    for e in boundary_sample:
        node = t.root
        for j in range(min(3, depth)):
            child = t.child_for_end(node, e)
            if child is None:
                break
            S = list(child.adhesion)
            inside = [x for x in boundary_sample if _same_direction(p, S, e, x)]
            for x in inside:
                if not _tree_end_extends(images[x].ray, images[e].ray, j):
                    return False, (
                        f"f[Omega({_sep_name(S)}, {e})] leaves the tree neighborhood: {x}"
                    )
            node = child
    # inverse: tree neighborhoods pull back inside graph neighborhoods;
    # the candidate tree neighborhood is the one past the levels whose
    # parts cover S
    for e in boundary_sample:
        for S in _inverse_separator_samples(t, e, depth):
            j_cover = _covering_level(t, S, 3 * depth + 6)
            ok_some_level = False
            if j_cover is not None:
                for j in (j_cover + 1, j_cover + 2):
                    pulled = [
                        x
                        for x in boundary_sample
                        if _tree_end_extends(images[x].ray, images[e].ray, j)
                    ]
                    deep_ray = _deep_tree_end_escape(t, p, images[e].ray, j, S, e, depth)
                    if all(_same_direction(p, S, e, x) for x in pulled) and not deep_ray:
                        ok_some_level = True
                        break
            if not ok_some_level:
                return False, (
                    f"no tree neighborhood of {images[e]} pulls back into "
                    f"Omega({_sep_name(S)}, {e})"
                )
    return True, ""


def _covering_level(t, S, cap):
    """The least level whose cover holds all of S (tries the builder's
    exact level covers, then the sampled parts)."""
    for j in range(cap + 1):
        try:
            cover = t.level_cover(j)
        except UnsupportedError:
            cover = None
        if cover is not None:
            if all(cover.contains(v) for v in S):
                return j
            continue
        nodes = t.nodes_to_level(j, width_cap=32)
        if all(any(n.part.contains(v) for n in nodes) for v in S):
            return j
    return None


def _sep_name(S):
    return "{" + ",".join(_vn(v) for v in S) + "}"


def _same_direction(p, S, e, x):
    if not S:
        return True
    de = direction(p, S, e)
    return de.contains_end(x)


def _tree_end_extends(ray_x, ray_e, j):
    """Do the two tree ends share their first j template steps?"""
    return all(ray_x.symbol(i) == ray_e.symbol(i) for i in range(j))


def _inverse_separator_samples(t, e, depth):
    """Finite separators to test inverse continuity against: the
    adhesion sets along the end's own descent, and small balls."""
    p = t.presentation
    out = []
    node = t.root
    for _ in range(min(3, depth)):
        child = t.child_for_end(node, e)
        if child is None:
            break
        if child.adhesion:
            out.append(list(child.adhesion))
        node = child
    out.append([e.head(1)])
    out.append([()])
    return [S for S in out if S]


def _deep_tree_end_escape(t, p, ray_e, j, S, e, depth):
    """Is there a tree end sharing j steps with ray_e whose pullback
    escapes Omega(S, e)?  Searches template children near the shared
    prefix, including family members beyond the sample."""
    node = t.root
    for i in range(j):
        key = ray_e.symbol(i)
        explicit, families = t.children(node)
        nxt = None
        for c in explicit:
            if c.path[-1] == key:
                nxt = c
        if nxt is None:
            for fam in families:
                try:
                    nxt = fam.instantiate(key)
                except Exception:
                    continue
        if nxt is None:
            return False
        node = nxt
    explicit, families = t.children(node)
    candidates = list(explicit)
    for fam in families:
        for paramv in list(fam.sample_params)[:3]:
            try:
                candidates.append(fam.instantiate(paramv))
            except Exception:
                pass
    for c in candidates:
        if c.path[-1] == ray_e.symbol(j):
            continue
        back = _region_limit_end(p, c.region)
        if back is None:
            aut = c.region.boundary_automaton() if hasattr(c.region, "boundary_automaton") else None
            if aut is not None:
                rec = EndSetRecognizer(p, aut)
                ends = rec.sample_ends(2, 2)
                back = ends[0] if ends else None
        if back is not None and f_T(t, back).kind == "tree_end":
            if not _same_direction(p, S, e, back):
                return True
    return False


def local_end_automaton(t, node):
    """Recognizer pieces for the ends living exactly at this node: the
    node's side minus every child's side."""
    p = t.presentation
    if node.region is None:
        base = p.shape.trim_safety()
    else:
        base = node.region.boundary_automaton()
    explicit, families = t.children(node)
    kid_bounds = [c.region.boundary_automaton() for c in explicit]
    for fam in families:
        for paramv in fam.sample_params[:2]:
            kid_bounds.append(fam.instantiate(paramv).region.boundary_automaton())
    return base, kid_bounds


def node_has_local_end(t, node):
    from .cbrank import exists_branch

    base, kid_bounds = local_end_automaton(t, node)
    return exists_branch([base], kid_bounds) is not None


def _nodes_covered(t, ended_nodes, depth):
    """Does every sampled node carry an end living exactly there?
    (bijective distribution needs onto-ness on the nodes; the local-end
    test is recognizer-exact, so deep parts beyond the sampled ends
    still count.)"""
    for node in t.nodes_to_level(min(depth, 3), width_cap=12):
        if f"Node({_path_name(node.path)})" in ended_nodes:
            continue
        if not node_has_local_end(t, node):
            return False
    return True


def _path_name(path):
    return "/".join(str(k) for k in path) or "root"


# -- the normal-skeleton builder ---------------------------------------------------


@dataclass
class _SubtreeRegion:
    presentation: GraphPresentation
    prefix: tuple

    def contains_vertex(self, v):
        if isinstance(v, Top):
            return False
        v = tuple(v)
        return len(v) >= len(self.prefix) and v[: len(self.prefix)] == self.prefix

    def contains_end(self, end):
        return end.passes_through(self.prefix)

    def boundary_automaton(self):
        from .descriptors import subtree_automaton, limit_branches

        aut = subtree_automaton(self.presentation, self.prefix)
        return limit_branches(self.presentation, aut)

    @property
    def subtree_prefixes(self):
        return (self.prefix,)


def nst_decomposition(p, width=3):
    """The down-closure decomposition over the skeleton itself: parts
    are the finite root paths, one per skeleton vertex.  Requires a
    top-free presentation (the skeleton plus chords is then a normal
    spanning tree of the graph)."""
    if p.tops:
        raise InvariantError("presentation has tops")

    def make_node(address):
        part = FiniteVertexSet.of(p, [address[:i] for i in range(len(address) + 1)])
        return DecompNode(
            path=address,
            part=part,
            adhesion=tuple(address[:i] for i in range(len(address))),
            region=_SubtreeRegion(p, address),
            signature=("nst", p.shape.run(address)),
        )

    def children_fn(node):
        address = node.path
        q = p.shape.run(address)
        explicit = []
        families = []
        rule = p.shape.omega.get(q)
        syms = p.shape.symbols_window(q, width)
        live = p.shape.live_states()
        for s in syms:
            tq = p.shape.target(q, s)
            if tq is not None:
                explicit.append(make_node(address + (s,)))
        if rule is not None:
            from_sym = max(syms) + 1 if syms else rule.threshold

            def param_for_end(end, address=address, from_sym=from_sym):
                if not end.passes_through(address):
                    return None
                s = end.symbol(len(address))
                return s if s >= from_sym else None

            def param_for_vertex(v, address=address, from_sym=from_sym):
                if isinstance(v, Top):
                    return None
                v = tuple(v)
                if len(v) <= len(address) or v[: len(address)] != address:
                    return None
                s = v[len(address)]
                return s if s >= from_sym else None

            families.append(
                ChildFamily(
                    key_base=("omega", address),
                    params=f"symbols >= {from_sym}",
                    instantiate=lambda s, address=address: make_node(address + (s,)),
                    param_for_end=param_for_end,
                    param_for_vertex=param_for_vertex,
                    sample_params=(from_sym, from_sym + 1),
                )
            )
        return explicit, families

    def level_cover_fn(n):
        from .descriptors import RegularVertexSet
        from .automata import Automaton

        # all addresses of length <= n
        states = n + 2
        trans = {}
        from .automata import OmegaRule

        omega = {i: OmegaRule(0, (i + 1,)) for i in range(n + 1)}
        aut = Automaton(states, 0, trans, omega, frozenset(range(n + 1)))
        return RegularVertexSet.of(p, aut)

    root = make_node(())
    return TreeDecomposition(
        p,
        root,
        children_fn,
        provenance="nst",
        claims={"upwards_connected": True, "connected_parts": True, "finite_parts": True},
        boundary_hint=all_ends(p),
        level_cover_fn=level_cover_fn,
    )
