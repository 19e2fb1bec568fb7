"""Deterministic partial automata over integer child symbols.

One machine underlies every symbolic set in this package: shapes of
infinite trees, closed end sets (safety semantics: a branch belongs iff
its run never dies) and regular vertex sets (finite-word semantics with
accepting states).  States whose vertex has countably many children
carry an omega rule: for every symbol >= a threshold the target cycles
through a fixed tuple, so countably-branching shapes stay finite-state.

All constructions renumber states to 0..n-1 in BFS order from the
initial state, which makes structurally equal results compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lcm


@dataclass(frozen=True)
class OmegaRule:
    """Targets for all symbols >= threshold, cycling through `cycle`.

    A cycle entry of None marks a symbol class with no transition
    (left behind when trimming removes dead targets).
    """

    threshold: int
    cycle: tuple

    def target(self, sym):
        if sym < self.threshold:
            return None
        return self.cycle[(sym - self.threshold) % len(self.cycle)]

    def live_entries(self):
        return [c for c in self.cycle if c is not None]


class Automaton:
    """Deterministic partial automaton with optional final states.

    trans maps (state, symbol) -> state for explicitly listed symbols;
    omega maps state -> OmegaRule for all remaining symbols above the
    rule threshold.  finals defaults to all states (safety usage).
    """

    __slots__ = ("n", "initial", "trans", "omega", "finals", "_live", "_out")

    def __init__(self, n, initial, trans, omega=None, finals=None):
        self.n = n
        self.initial = initial
        self.trans = dict(trans)
        self.omega = dict(omega or {})
        self.finals = frozenset(range(n)) if finals is None else frozenset(finals)
        self._live = None
        self._out = None

    # -- basic stepping ------------------------------------------------

    def target(self, q, sym):
        t = self.trans.get((q, sym))
        if t is not None:
            return t
        rule = self.omega.get(q)
        if rule is not None:
            return rule.target(sym)
        return None

    def run(self, word, start=None):
        """State after reading word, or None if the run dies."""
        q = self.initial if start is None else start
        for s in word:
            q = self.target(q, s)
            if q is None:
                return None
        return q

    def accepts_word(self, word):
        q = self.run(word)
        return q is not None and q in self.finals

    def explicit_symbols(self, q):
        return {s for (p, s) in self.trans if p == q}

    def out_edges(self, q):
        """Distinct (symbol representative, target) pairs; each live
        omega cycle entry is represented by one fresh symbol."""
        if self._out is None:
            out = {p: [] for p in range(self.n)}
            for (p, s), t in self.trans.items():
                out[p].append((s, t))
            for p, rule in self.omega.items():
                expl = {s for (s, _t) in out[p]}
                for i, t in enumerate(rule.cycle):
                    if t is None:
                        continue
                    sym = rule.threshold + i
                    while sym in expl:
                        sym += len(rule.cycle)
                    out[p].append((sym, t))
            self._out = {p: sorted(v) for p, v in out.items()}
        return self._out[q]

    def successors(self, q):
        return {t for _s, t in self.out_edges(q)}

    # -- liveness / reachability ---------------------------------------

    def live_states(self):
        """States with at least one infinite run."""
        if self._live is not None:
            return self._live
        live = set(range(self.n))
        changed = True
        while changed:
            changed = False
            for q in list(live):
                if not (self.successors(q) & live):
                    live.discard(q)
                    changed = True
        self._live = frozenset(live)
        return self._live

    def reachable_states(self):
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            q = stack.pop()
            for t in self.successors(q):
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return seen

    def is_empty_safety(self):
        return self.initial not in self.live_states()

    # -- renumbering / trimming -----------------------------------------

    def _renumber(self, keep):
        """Restrict to keep (containing initial), renumber in BFS symbol
        order; transitions leaving keep are dropped."""
        index = {self.initial: 0}
        order = [self.initial]
        pos = 0
        while pos < len(order):
            q = order[pos]
            pos += 1
            for _s, t in self.out_edges(q):
                if t in keep and t not in index:
                    index[t] = len(order)
                    order.append(t)
        trans = {}
        omega = {}
        for q in order:
            i = index[q]
            for s in self.explicit_symbols(q):
                t = self.trans[(q, s)]
                if t in index:
                    trans[(i, s)] = index[t]
            rule = self.omega.get(q)
            if rule is not None:
                cyc = tuple(index.get(t) for t in rule.cycle)
                if any(c is not None for c in cyc):
                    omega[i] = OmegaRule(rule.threshold, cyc)
        finals = frozenset(index[q] for q in order if q in self.finals)
        return Automaton(len(order), 0, trans, omega, finals)

    def trim_safety(self):
        """Keep only states reachable from initial that admit an
        infinite run; empty language collapses to the dead automaton."""
        live = self.live_states()
        if self.initial not in live:
            return empty()
        keep = self.reachable_states() & live
        pruned = Automaton(
            self.n,
            self.initial,
            {k: t for k, t in self.trans.items() if k[0] in keep and t in keep},
            {
                q: OmegaRule(r.threshold, tuple(t if t in keep else None for t in r.cycle))
                for q, r in self.omega.items()
                if q in keep and any(t in keep for t in r.live_entries())
            },
            self.finals & keep,
        )
        return pruned._renumber(keep)

    def trim_words(self):
        """Keep states reachable from initial and co-reachable to a
        final state (finite-word semantics)."""
        pred = {q: set() for q in range(self.n)}
        for q in range(self.n):
            for t in self.successors(q):
                pred[t].add(q)
        co = set(self.finals)
        stack = list(co)
        while stack:
            q = stack.pop()
            for p in pred[q]:
                if p not in co:
                    co.add(p)
                    stack.append(p)
        keep = self.reachable_states() & co
        if self.initial not in keep:
            return empty()
        pruned = Automaton(
            self.n,
            self.initial,
            {k: t for k, t in self.trans.items() if k[0] in keep and t in keep},
            {
                q: OmegaRule(r.threshold, tuple(t if t in keep else None for t in r.cycle))
                for q, r in self.omega.items()
                if q in keep and any(t in keep for t in r.live_entries())
            },
            self.finals & keep,
        )
        return pruned._renumber(keep)

    # -- products --------------------------------------------------------

    def _aligned(self, other, qa, qb):
        """Joint (symbol, ta, tb) moves covering every symbol on which
        either side is defined; a dead side yields None.  Returns
        (explicit list, omega spec) with omega spec None or
        (threshold, [(ta, tb) per cycle position])."""
        ra = self.omega.get(qa) if qa is not None else None
        rb = other.omega.get(qb) if qb is not None else None
        syms = set()
        if qa is not None:
            syms |= self.explicit_symbols(qa)
        if qb is not None:
            syms |= other.explicit_symbols(qb)
        rules = [r for r in (ra, rb) if r is not None]

        def ta_of(s):
            return self.target(qa, s) if qa is not None else None

        def tb_of(s):
            return other.target(qb, s) if qb is not None else None

        if not rules:
            return [(s, ta_of(s), tb_of(s)) for s in sorted(syms)], None
        thr = max([r.threshold for r in rules] + [s + 1 for s in syms])
        lo = min(r.threshold for r in rules)
        explicit = [
            (s, ta_of(s), tb_of(s))
            for s in sorted(syms | set(range(lo, thr)))
            if ta_of(s) is not None or tb_of(s) is not None
        ]
        period = lcm(*[len(r.cycle) for r in rules])
        pairs = [(ta_of(thr + i), tb_of(thr + i)) for i in range(period)]
        return explicit, (thr, pairs)

    def product(self, other, finals=None, track="none"):
        """Synchronous product.

        track selects when a pair survives a move: "none" needs both
        sides alive, "b" keeps going on a dead b-side, "both" keeps
        going while either side is alive.  finals(qa, qb) marks final
        pairs (dead side passed as None).  Returns (automaton, labels)
        where labels maps product state index -> (qa, qb).
        """
        def ok(ta, tb):
            if track == "none":
                return ta is not None and tb is not None
            if track == "b":
                return ta is not None
            return ta is not None or tb is not None

        start = (self.initial, other.initial)
        index = {start: 0}
        order = [start]
        trans = {}
        omega = {}
        pos = 0
        while pos < len(order):
            qa, qb = order[pos]
            i = pos
            pos += 1
            explicit, om = self._aligned(other, qa, qb)
            for s, ta, tb in explicit:
                if not ok(ta, tb):
                    continue
                nxt = (ta, tb)
                if nxt not in index:
                    index[nxt] = len(order)
                    order.append(nxt)
                trans[(i, s)] = index[nxt]
            if om is not None:
                thr, pairs = om
                cyc = []
                for ta, tb in pairs:
                    if not ok(ta, tb):
                        cyc.append(None)
                        continue
                    nxt = (ta, tb)
                    if nxt not in index:
                        index[nxt] = len(order)
                        order.append(nxt)
                    cyc.append(index[nxt])
                if any(c is not None for c in cyc):
                    omega[i] = OmegaRule(thr, tuple(cyc))
        if finals is None:
            fin = frozenset(range(len(order)))
        else:
            fin = frozenset(i for i, p in enumerate(order) if finals(*p))
        aut = Automaton(len(order), 0, trans, omega, fin)
        return aut, dict(enumerate(order))

    def intersect(self, other):
        """Safety intersection (both runs must survive)."""
        aut, _ = self.product(other)
        return aut.trim_safety()

    def intersect_words(self, other):
        aut, _ = self.product(
            other, finals=lambda a, b: a in self.finals and b in other.finals
        )
        return aut.trim_words()

    def union_words(self, other):
        aut, _ = self.product(
            other,
            finals=lambda a, b: (a is not None and a in self.finals)
            or (b is not None and b in other.finals),
            track="both",
        )
        return aut.trim_words()

    def minus_words(self, other):
        aut, _ = self.product(
            other,
            finals=lambda a, b: a is not None
            and a in self.finals
            and (b is None or b not in other.finals),
            track="b",
        )
        return aut.trim_words()

    # -- safety language predicates -------------------------------------

    def safety_subset_of(self, other):
        """Is every surviving branch of self surviving in other?
        Returns (True, None) or (False, witness prefix)."""
        trimmed = self.trim_safety()
        if trimmed.is_empty_safety():
            return True, None
        aut, labels = trimmed.product(other, track="b")
        live = aut.live_states()
        parents = {0: None}
        queue = [0]
        while queue:
            i = queue.pop(0)
            if labels[i][1] is None and i in live:
                word = []
                j = i
                while parents[j] is not None:
                    j, s = parents[j]
                    word.append(s)
                return False, tuple(reversed(word))
            for s, t in aut.out_edges(i):
                if t not in parents:
                    parents[t] = (i, s)
                    queue.append(t)
        return True, None

    def safety_equal(self, other):
        ab, _ = self.safety_subset_of(other)
        if not ab:
            return False
        ba, _ = other.safety_subset_of(self)
        return ba

    def word_subset_of(self, other):
        """Accepted-word inclusion; returns (bool, witness word or None)."""
        diff = self.minus_words(other)
        w = diff.shortest_accepted()
        return (w is None), w

    def shortest_accepted(self):
        if self.initial in self.finals:
            return ()
        parents = {self.initial: None}
        queue = [self.initial]
        while queue:
            q = queue.pop(0)
            for s, t in self.out_edges(q):
                if t not in parents:
                    parents[t] = (q, s)
                    if t in self.finals:
                        word = []
                        j = t
                        while parents[j] is not None:
                            j, sym = parents[j]
                            word.append(sym)
                        return tuple(reversed(word))
                    queue.append(t)
        return None

    # -- structure queries ----------------------------------------------

    def live_option_count(self, q):
        """Live outgoing choices; an omega rule with a live entry counts
        as infinitely many (reported as 2)."""
        live = self.live_states()
        cnt = 0
        for s in self.explicit_symbols(q):
            if self.trans[(q, s)] in live:
                cnt += 1
                if cnt >= 2:
                    return 2
        rule = self.omega.get(q)
        if rule is not None and any(t in live for t in rule.live_entries()):
            return 2
        return cnt

    def unique_continuation_states(self):
        """States whose reachable live part has exactly one live option
        per state: every branch through them is forced."""
        live = self.live_states()
        bad = {q for q in live if self.live_option_count(q) != 1}
        pred = {q: set() for q in range(self.n)}
        for q in live:
            for t in self.successors(q):
                if t in live:
                    pred[t].add(q)
        tainted = set(bad)
        stack = list(bad)
        while stack:
            q = stack.pop()
            for p in pred.get(q, ()):
                if p not in tainted:
                    tainted.add(p)
                    stack.append(p)
        return frozenset(q for q in live if q not in tainted)

    def has_single_branch(self):
        t = self.trim_safety()
        if t.is_empty_safety():
            return True
        return all(t.live_option_count(q) <= 1 for q in range(t.n))

    def branch_survives(self, prefix, cycle, start=None):
        """Does the eventually periodic branch prefix-cycle^w survive?"""
        q = self.run(prefix, start=self.initial if start is None else start)
        if q is None:
            return False
        seen = set()
        while q not in seen:
            seen.add(q)
            q = self.run(cycle, start=q)
            if q is None:
                return False
        return True

    def branch_visits_final(self, prefix, cycle):
        """Does the run on the branch survive and visit a final state?"""
        q = self.initial
        visited_final = q in self.finals
        for s in prefix:
            q = self.target(q, s)
            if q is None:
                return False
            visited_final = visited_final or q in self.finals
        seen = set()
        while q not in seen:
            seen.add(q)
            for s in cycle:
                q = self.target(q, s)
                if q is None:
                    return False
                visited_final = visited_final or q in self.finals
        return visited_final

    # -- enumeration -----------------------------------------------------

    def words(self, depth, omega_width=2, start=None):
        """All defined words of length <= depth in lexicographic order;
        omega classes expanded to omega_width symbols per cycle entry."""
        out = []

        def rec(q, word):
            out.append(word)
            if len(word) == depth:
                return
            for s in self.symbols_window(q, omega_width):
                t = self.target(q, s)
                if t is not None:
                    rec(t, word + (s,))

        rec(self.initial if start is None else start, ())
        return out

    def symbols_window(self, q, omega_width=2):
        """Deterministic finite window of defined symbols at q."""
        syms = set(self.explicit_symbols(q))
        rule = self.omega.get(q)
        if rule is not None:
            syms.update(rule.threshold + k for k in range(omega_width * len(rule.cycle)))
        return sorted(s for s in syms if self.target(q, s) is not None)

    def dump(self, name="A"):
        lines = [f"[automaton {name}]", f"states: {self.n}", "initial: q0"]
        for (q, s), t in sorted(self.trans.items()):
            mark = "*" if t in self.finals else ""
            lines.append(f"  q{q} {s}->q{t}{mark}")
        for q, rule in sorted(self.omega.items()):
            cyc = " ".join("-" if c is None else f"q{c}" for c in rule.cycle)
            lines.append(f"  q{q} >={rule.threshold}->({cyc})")
        return "\n".join(lines)


def empty():
    """The automaton with no surviving branch and no accepted word."""
    return Automaton(1, 0, {}, {}, frozenset())


def single_word_automaton(word):
    """Accepts exactly `word` (and survives along nothing)."""
    n = len(word) + 1
    trans = {(i, s): i + 1 for i, s in enumerate(word)}
    return Automaton(n, 0, trans, {}, frozenset([n - 1]))
