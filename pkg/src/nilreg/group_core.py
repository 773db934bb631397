"""Exact integer models of unitriangular groups and their lattice actions.

``N_d`` is the group of (d+1)x(d+1) lower-triangular integer matrices with unit
diagonal. It acts on Z^d through ``m @ (1, i_1, ..., i_d)``. The metabelian
family generated by ``f, g_0, ..., g_d`` is called ``M_d`` here.

Words are applied left to right: the first letter acts first.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence


class InvalidGenerator(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class UnitriangularMatrix:
    """Lower unitriangular matrix of size (d+1)x(d+1) with Python int entries."""

    d: int
    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        size = self.d + 1
        if len(self.entries) != size or any(len(r) != size for r in self.entries):
            raise DimensionMismatch(f"expected {size}x{size} entries")
        for a in range(size):
            if self.entries[a][a] != 1:
                raise ValueError("diagonal entries must be 1")
            for b in range(a + 1, size):
                if self.entries[a][b] != 0:
                    raise ValueError("entries above the diagonal must vanish")

    @classmethod
    def identity(cls, d: int) -> "UnitriangularMatrix":
        size = d + 1
        return cls(d, tuple(tuple(int(a == b) for b in range(size)) for a in range(size)))

    def __matmul__(self, other: "UnitriangularMatrix") -> "UnitriangularMatrix":
        if other.d != self.d:
            raise DimensionMismatch("matrix dimensions differ")
        size = self.d + 1
        rows = []
        for a in range(size):
            row = []
            for b in range(size):
                # lower triangular: only b <= c <= a contributes
                row.append(sum(self.entries[a][c] * other.entries[c][b] for c in range(b, a + 1)))
            rows.append(tuple(row))
        return UnitriangularMatrix(self.d, tuple(rows))

    def inverse(self) -> "UnitriangularMatrix":
        # forward substitution column by column; exact since the diagonal is 1
        size = self.d + 1
        inv = [[int(a == b) for b in range(size)] for a in range(size)]
        for b in range(size):
            for a in range(b + 1, size):
                inv[a][b] = -sum(self.entries[a][c] * inv[c][b] for c in range(b, a))
        return UnitriangularMatrix(self.d, tuple(tuple(r) for r in inv))

    def fixes_last_coordinate(self) -> bool:
        """True when the last row is that of the identity (the N_{d-1}* subgroup)."""
        last = self.entries[-1]
        return all(v == (1 if b == self.d else 0) for b, v in enumerate(last))


def elementary(d: int, i: int, j: int) -> UnitriangularMatrix:
    """The matrix f_{i,j}: identity plus a single 1 at row i, column j (1-based)."""
    if not (1 <= j < i <= d + 1):
        raise InvalidGenerator(f"f_({i},{j}) is not a generator of N_{d}")
    size = d + 1
    rows = [[int(a == b) for b in range(size)] for a in range(size)]
    rows[i - 1][j - 1] = 1
    return UnitriangularMatrix(d, tuple(tuple(r) for r in rows))


def act_on_index(m: UnitriangularMatrix, v: Sequence[int]) -> tuple[int, ...]:
    if len(v) != m.d:
        raise DimensionMismatch(f"point of length {len(v)} for N_{m.d}")
    col = (1, *v)
    out = []
    for a in range(1, m.d + 1):
        out.append(sum(m.entries[a][c] * col[c] for c in range(a + 1)))
    return tuple(out)


def generator_index_rule(d: int, j: int, v: Sequence[int]) -> tuple[int, ...]:
    """Action of f_{j+1,j}: j=1 shifts i_1 by one, j>=2 adds i_{j-1} to i_j."""
    if not 1 <= j <= d:
        raise InvalidGenerator(f"generator index {j} outside 1..{d}")
    if len(v) != d:
        raise DimensionMismatch(f"point of length {len(v)} for dimension {d}")
    out = list(v)
    out[j - 1] += 1 if j == 1 else v[j - 2]
    return tuple(out)


@dataclass(frozen=True)
class Letter:
    """Signed elementary generator f_{i,j}^sign."""

    i: int
    j: int
    sign: int = 1

    def inverse(self) -> "Letter":
        return Letter(self.i, self.j, -self.sign)


@dataclass(frozen=True)
class GeneratorWord:
    letters: tuple[Letter, ...] = ()

    def __post_init__(self) -> None:
        for let in self.letters:
            if let.sign not in (1, -1) or not let.i > let.j >= 1:
                raise InvalidGenerator(f"bad letter {let}")

    def inverse(self) -> "GeneratorWord":
        return GeneratorWord(tuple(let.inverse() for let in reversed(self.letters)))

    def __add__(self, other: "GeneratorWord") -> "GeneratorWord":
        return GeneratorWord(self.letters + other.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def check_dimension(self, d: int) -> None:
        for let in self.letters:
            if let.i > d + 1:
                raise DimensionMismatch(f"letter {let} does not belong to N_{d}")

    def matrix(self, d: int) -> UnitriangularMatrix:
        """Matrix acting as the word: the first letter is applied first."""
        self.check_dimension(d)
        m = UnitriangularMatrix.identity(d)
        for let in self.letters:
            e = elementary(d, let.i, let.j)
            m = (e if let.sign > 0 else e.inverse()) @ m
        return m


def _apply_letter(let: Letter, v: list[int]) -> None:
    # f_{i,j} adds (coordinate j-1, with coordinate 0 == 1) to coordinate i-1
    src = 1 if let.j == 1 else v[let.j - 2]
    v[let.i - 2] += let.sign * src


def evaluate_word(w: GeneratorWord, v: Sequence[int]) -> tuple[int, ...]:
    d = len(v)
    w.check_dimension(d)
    out = list(v)
    for let in w.letters:
        _apply_letter(let, out)
    return tuple(out)


def word_from_pairs(pairs: Iterable[tuple[int, int, int]]) -> GeneratorWord:
    return GeneratorWord(tuple(Letter(i, j, s) for i, j, s in pairs))


# --- metabelian family M_d -------------------------------------------------


@dataclass(frozen=True)
class MetabelianGenerator:
    """Either ``f`` (k is None) or ``g_k``; ``sign`` selects the inverse."""

    k: int | None = None
    sign: int = 1

    @property
    def name(self) -> str:
        base = "f" if self.k is None else f"g{self.k}"
        return base if self.sign > 0 else base + "^-1"

    def inverse(self) -> "MetabelianGenerator":
        return MetabelianGenerator(self.k, -self.sign)

    def check(self, d: int) -> None:
        if self.k is not None and not 0 <= self.k <= d:
            raise InvalidGenerator(f"g_{self.k} outside 0..{d}")


F = MetabelianGenerator()


def G(k: int) -> MetabelianGenerator:
    return MetabelianGenerator(k)


def r_binomial(k: int, i: int) -> int:
    """r_k(i) = i(i+1)...(i+k-1)/k!, exactly; r_0 = 1."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return 1
    if i > 0:
        return comb(i + k - 1, k)
    if i > -k:
        return 0
    # every factor negative: r_k(i) = (-1)^k C(-i, k)
    return (-1) ** k * comb(-i, k)


def metabelian_index_action(gen: MetabelianGenerator, v: Sequence[int]) -> tuple[int, int]:
    i, j = v
    if gen.k is None:
        return (i + gen.sign, j)
    return (i, j + gen.sign * r_binomial(gen.k, i))


def evaluate_metabelian(word: Sequence[MetabelianGenerator], v: Sequence[int]) -> tuple[int, int]:
    out = (v[0], v[1])
    for g in word:
        out = metabelian_index_action(g, out)
    return out


def commutator(a: Sequence, b: Sequence) -> list:
    """[a, b] = a^-1 b^-1 a b for words given as lists of invertible letters."""
    inv = lambda w: [x.inverse() for x in reversed(w)]  # noqa: E731
    return inv(a) + inv(b) + list(a) + list(b)
