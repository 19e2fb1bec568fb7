"""Eventually periodic branches u.v^w and word helpers.

A branch is the symbolic form of one infinite path from the root of a
tree shape; the canonical form (minimal cycle, then minimal prefix) is
unique per path, so equality of branches is equality of ends.
"""

from __future__ import annotations

from dataclasses import dataclass


def _minimal_period(word):
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word == word[:p] * (n // p):
            return word[:p]
    return word


@dataclass(frozen=True, order=True)
class End:
    """An end given as the eventually periodic branch prefix.cycle^w."""

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        if not self.cycle:
            raise ValueError("branch cycle must be nonempty")

    @staticmethod
    def make(prefix, cycle):
        """Canonical form: shortest cycle, then shortest prefix."""
        prefix = tuple(prefix)
        cycle = _minimal_period(tuple(cycle))
        while prefix and prefix[-1] == cycle[-1]:
            prefix = prefix[:-1]
            cycle = (cycle[-1],) + cycle[:-1]
        return End(prefix, cycle)

    def symbol(self, i):
        if i < len(self.prefix):
            return self.prefix[i]
        return self.cycle[(i - len(self.prefix)) % len(self.cycle)]

    def head(self, n):
        """The depth-n vertex on this branch (its length-n prefix)."""
        return tuple(self.symbol(i) for i in range(n))

    def tail_from(self, n):
        """The branch re-rooted after its first n symbols, canonical."""
        if n <= len(self.prefix):
            return End.make(self.prefix[n:], self.cycle)
        k = (n - len(self.prefix)) % len(self.cycle)
        return End.make((), self.cycle[k:] + self.cycle[:k])

    def lcp(self, other):
        """Length of the longest common prefix, or None when equal."""
        bound = (
            len(self.prefix) + len(other.prefix)
            + 2 * len(self.cycle) * len(other.cycle)
        )
        for i in range(bound + 1):
            if self.symbol(i) != other.symbol(i):
                return i
        return None

    def passes_through(self, address):
        return self.head(len(address)) == tuple(address)

    def __str__(self):
        return f"{word_str(self.prefix)}({word_str(self.cycle)})"


def word_str(word):
    if not word:
        return "e"
    if all(0 <= s <= 9 for s in word):
        return "".join(str(s) for s in word)
    return ".".join(str(s) for s in word)


def parse_word(text):
    """Inverse of word_str: plain digit runs or dot-separated ints."""
    text = text.strip()
    if text in ("", "e"):
        return ()
    if "." in text:
        return tuple(int(p) for p in text.split(".") if p != "")
    return tuple(int(c) for c in text)


def parse_end(text):
    """Parse PREFIX(CYCLE), e.g. 0(0) for 0^w, (01) for (01)^w."""
    text = text.strip()
    if "(" not in text or not text.endswith(")"):
        raise ValueError(f"branch must look like PREFIX(CYCLE): {text!r}")
    pre, cyc = text[:-1].split("(", 1)
    cycle = parse_word(cyc)
    if not cycle:
        raise ValueError(f"branch cycle must be nonempty: {text!r}")
    return End.make(parse_word(pre), cycle)
