"""Braid words on n strands and an exact equality test.

A word is stored as a tuple of signed generator indices: ``+i`` is sigma_i,
``-i`` its inverse, and the empty tuple is the identity braid.  Equality of
group elements is decided by acting on integer loop (Dynnikov) coordinates,
which is a faithful piecewise-linear action.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class BraidError(ValueError):
    pass


@dataclass(frozen=True)
class Generator:
    index: int
    sign: int

    def __post_init__(self):
        if self.index < 1:
            raise BraidError(f"generator index must be >= 1, got {self.index}")
        if self.sign not in (1, -1):
            raise BraidError(f"generator sign must be +1 or -1, got {self.sign}")

    @classmethod
    def from_int(cls, letter: int) -> "Generator":
        if letter == 0:
            raise BraidError("0 is not a generator")
        return cls(abs(letter), 1 if letter > 0 else -1)

    def __int__(self) -> int:
        return self.sign * self.index


@dataclass(frozen=True)
class BraidWord:
    strands: int
    letters: tuple[int, ...] = ()

    def __post_init__(self):
        if self.strands < 2:
            raise BraidError(f"need at least 2 strands, got {self.strands}")
        letters = tuple(int(x) for x in self.letters)
        for x in letters:
            if x == 0 or abs(x) >= self.strands:
                raise BraidError(f"letter {x} invalid on {self.strands} strands")
        object.__setattr__(self, "letters", letters)

    @classmethod
    def identity(cls, strands: int) -> "BraidWord":
        return cls(strands, ())

    @property
    def generators(self) -> tuple[Generator, ...]:
        return tuple(Generator.from_int(x) for x in self.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __mul__(self, other: "BraidWord") -> "BraidWord":
        return compose(self, other)

    def inverse(self) -> "BraidWord":
        return BraidWord(self.strands, tuple(-x for x in reversed(self.letters)))

    def exponent_sum(self) -> int:
        return sum(1 if x > 0 else -1 for x in self.letters)

    def __str__(self) -> str:
        return format_word(self)


@dataclass(frozen=True)
class Permutation:
    """``mapping[k]`` is the final position (1-based) of the strand starting at k+1."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(x) for x in self.mapping)
        if sorted(m) != list(range(1, len(m) + 1)):
            raise BraidError(f"not a bijection on 1..{len(m)}: {m}")
        object.__setattr__(self, "mapping", m)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    def __call__(self, k: int) -> int:
        return self.mapping[k - 1]

    def then(self, other: "Permutation") -> "Permutation":
        """Apply ``self`` first, then ``other``."""
        return Permutation(tuple(other(self(k)) for k in range(1, len(self.mapping) + 1)))

    def inverse(self) -> "Permutation":
        out = [0] * len(self.mapping)
        for k, v in enumerate(self.mapping, start=1):
            out[v - 1] = k
        return Permutation(tuple(out))


def _check_same(a: BraidWord, b: BraidWord) -> None:
    if a.strands != b.strands:
        raise BraidError(f"strand count mismatch: {a.strands} vs {b.strands}")


def compose(a: BraidWord, b: BraidWord) -> BraidWord:
    _check_same(a, b)
    return BraidWord(a.strands, a.letters + b.letters)


def free_reduce(w: BraidWord) -> BraidWord:
    out: list[int] = []
    for x in w.letters:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return BraidWord(w.strands, tuple(out))


def permutation_of(w: BraidWord) -> Permutation:
    # position_of[s] = current position of the strand that started at s
    strand_at = list(range(1, w.strands + 1))
    for x in w.letters:
        k = abs(x) - 1
        strand_at[k], strand_at[k + 1] = strand_at[k + 1], strand_at[k]
    final = [0] * w.strands
    for pos, strand in enumerate(strand_at, start=1):
        final[strand - 1] = pos
    return Permutation(tuple(final))


# -- loop coordinates -------------------------------------------------------

@dataclass(frozen=True)
class LoopCoordinates:
    """Dynnikov coordinates ``(a_1..a_m, b_1..b_m)`` of an integral lamination.

    B_n is realised on a disk with n + 2 punctures, the two outer ones held
    fixed, so m = n and every generator uses the same interior update rule.
    The outer punctures also make the action faithful (the full twist is no
    longer central).
    """

    a: tuple[int, ...]
    b: tuple[int, ...]

    @classmethod
    def base(cls, strands: int) -> "LoopCoordinates":
        return cls((0,) * strands, (1,) * strands)

    @property
    def coords(self) -> tuple[int, ...]:
        return self.a + self.b

    def act(self, letters: Iterable[int]) -> "LoopCoordinates":
        a = list(self.a)
        b = list(self.b)
        for x in letters:
            if x > 0:
                _sigma(a, b, x - 1)
            else:
                # sigma_i^-1 is sigma_i conjugated by the mirror (a -> -a)
                for k in range(len(a)):
                    a[k] = -a[k]
                _sigma(a, b, -x - 1)
                for k in range(len(a)):
                    a[k] = -a[k]
        return LoopCoordinates(tuple(a), tuple(b))


def _sigma(a: list[int], b: list[int], j: int) -> None:
    # in-place update of pairs j, j+1; Python ints never overflow
    a0, a1, b0, b1 = a[j], a[j + 1], b[j], b[j + 1]
    b0p, b0n = max(b0, 0), min(b0, 0)
    b1p, b1n = max(b1, 0), min(b1, 0)
    c = a0 - a1 + b1p - b0n
    cp = max(c, 0)
    a[j] = a0 + b0p + max(b1p - c, 0)
    b[j] = b1 - cp
    a[j + 1] = a1 + b1n + min(b0n + c, 0)
    b[j + 1] = b0 + cp


def loop_coordinates(w: BraidWord) -> LoopCoordinates:
    return LoopCoordinates.base(w.strands).act(w.letters)


def canonical_key(w: BraidWord) -> tuple:
    """Hashable key; equal keys iff the words are the same braid."""
    if w.strands == 2:
        return (2, w.exponent_sum())
    return (w.strands,) + loop_coordinates(w).coords


def are_equal(a: BraidWord, b: BraidWord) -> bool:
    _check_same(a, b)
    if a.letters == b.letters:
        return True
    if a.strands == 2:
        return a.exponent_sum() == b.exponent_sum()
    return canonical_key(a) == canonical_key(b)


def mode_count_bound(n: int, depth: int, *, max_bits: int | None = None) -> int:
    """Upper bound [2(n-1)]^D + 1 on the number of distinct braid words of depth <= D.

    Exact integer arithmetic; ``max_bits`` turns oversized results into an
    ``OverflowError`` for callers that need a fixed-width value.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    value = (2 * (n - 1)) ** depth + 1
    if max_bits is not None and value.bit_length() > max_bits:
        raise OverflowError(f"mode count bound needs {value.bit_length()} bits > {max_bits}")
    return value


# -- text format -------------------------------------------------------------

def parse_word(text: str, strands: int) -> BraidWord:
    """Parse whitespace-separated signed integers, e.g. ``"3 1 -2 -3 -1"``."""
    try:
        letters = tuple(int(tok) for tok in text.split())
    except ValueError as exc:
        raise BraidError(f"bad braid word {text!r}") from exc
    return BraidWord(strands, letters)


def format_word(w: BraidWord) -> str:
    return " ".join(str(x) for x in w.letters)


def word(strands: int, letters: Sequence[int]) -> BraidWord:
    return BraidWord(strands, tuple(letters))
