"""Latent-variable grouping combinatorics.

Two structures are built here and consumed everywhere else:

* ``LatentLayout`` -- a partition of the latent dimensions into contiguous,
  equal-size blocks.  The block size ``b_hat`` (the grouping factor) must
  divide ``n``; its normalized form ``g = b_hat / m`` is the disentangling
  granularity, where ``m`` is the largest valid grouping factor.
* ``PairingLevels`` -- the merge tree of the iterative total-correlation
  decomposition: at every level the current groups are paired off two by
  two (an odd group count leaves the last group as a remainder), until
  exactly two groups are left.

Dimension indices are stored 0-based.
"""

from dataclasses import dataclass
from fractions import Fraction


class LayoutError(ValueError):
    """Raised for grouping parameters that do not describe a valid layout."""


Group = tuple[int, ...]


def valid_grouping_factors(n: int) -> tuple[int, ...]:
    """All valid grouping factors for ``n`` latent dimensions, ascending.

    These are the divisors of ``n`` strictly less than ``n``: one block
    containing every dimension would make the grouped total correlation
    identically zero, so ``n`` itself is excluded.
    """
    if n < 2:
        raise LayoutError(f"need at least 2 latent dimensions, got n={n}")
    return tuple(b for b in range(1, n) if n % b == 0)


def max_grouping_factor(n: int) -> int:
    """The normalization constant ``m`` = largest valid grouping factor."""
    return valid_grouping_factors(n)[-1]


@dataclass(frozen=True)
class LatentLayout:
    """Partition of ``n`` latent dimensions into blocks of size ``b_hat``.

    Attributes:
        n: latent dimension count.
        b_hat: grouping factor (block size); a proper divisor of ``n``.
        m: largest valid grouping factor, used to normalize ``b_hat``.
        groups: the ``n // b_hat`` contiguous blocks, in index order.
    """

    n: int
    b_hat: int
    m: int
    groups: tuple[Group, ...]

    @property
    def g(self) -> Fraction:
        """Disentangling granularity ``b_hat / m`` as an exact rational."""
        return Fraction(self.b_hat, self.m)


def make_layout(n: int, b_hat: int) -> LatentLayout:
    """Build the contiguous-block layout for grouping factor ``b_hat``.

    Block ``j`` (0-based) covers dimensions ``b_hat*j .. b_hat*(j+1)-1``.
    ``b_hat = 1`` gives ``n`` singleton blocks, the degenerate case in
    which the grouped total correlation equals the full one.
    """
    factors = valid_grouping_factors(n)
    if b_hat not in factors:
        raise LayoutError(
            f"b_hat={b_hat} is not a valid grouping factor of n={n}; "
            f"valid factors are {list(factors)}"
        )
    groups = tuple(
        tuple(range(b_hat * j, b_hat * (j + 1))) for j in range(n // b_hat)
    )
    return LatentLayout(n=n, b_hat=b_hat, m=factors[-1], groups=groups)


def singleton_layout(n: int) -> LatentLayout:
    """Shorthand for ``make_layout(n, 1)``."""
    return make_layout(n, 1)


def decomposition_depth(n: int) -> int:
    """Number of mutual-information levels in the full decomposition.

    Equals ``ceil(log2 n) - 1``.  A value of 0 (n = 2) means there is no
    iteration: the whole total correlation is the mutual information of
    the two dimensions themselves.
    """
    if n < 2:
        raise LayoutError(f"need at least 2 latent dimensions, got n={n}")
    return (n - 1).bit_length() - 1


@dataclass(frozen=True)
class PairingLevel:
    """One decomposition level: the group pairs merged at this level.

    ``remainder`` is the group left unpaired when the level starts with an
    odd number of groups; it is carried unchanged to the next level.
    """

    pairs: tuple[tuple[Group, Group], ...]
    remainder: Group | None


@dataclass(frozen=True)
class PairingLevels:
    """The full contiguous-pairing merge schedule for ``n`` dimensions.

    ``levels[0]`` pairs singleton dimensions; each later level pairs the
    groups produced by the one before it.  The last level always pairs
    exactly two groups, whose mutual information is the decomposition's
    residual term.  ``depth`` counts the levels *before* the final pair,
    i.e. the number of mutual-information summation terms.
    """

    n: int
    levels: tuple[PairingLevel, ...]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def final_pair(self) -> tuple[Group, Group]:
        return self.levels[-1].pairs[0]

    def groups_at(self, level: int) -> tuple[Group, ...]:
        """Groups in play after ``level`` merge rounds (0 = singletons)."""
        if not 0 <= level <= len(self.levels):
            raise LayoutError(
                f"level must be in 0..{len(self.levels)}, got {level}"
            )
        groups: tuple[Group, ...] = tuple((d,) for d in range(self.n))
        for lev in self.levels[:level]:
            merged = tuple(l + r for l, r in lev.pairs)
            groups = merged + ((lev.remainder,) if lev.remainder else ())
        return groups


def pairing_levels(n: int) -> PairingLevels:
    """Build the contiguous pairing schedule ((1,2),(3,4),... per level).

    Groups are paired in index order at every level; an odd group count
    leaves the final group as the level's remainder.  The schedule ends
    when a level pairs exactly two groups.
    """
    if n < 2:
        raise LayoutError(f"need at least 2 latent dimensions, got n={n}")
    groups: list[Group] = [(d,) for d in range(n)]
    levels: list[PairingLevel] = []
    while len(groups) > 1:
        pairs = tuple(
            (groups[2 * i], groups[2 * i + 1]) for i in range(len(groups) // 2)
        )
        remainder = groups[-1] if len(groups) % 2 else None
        levels.append(PairingLevel(pairs=pairs, remainder=remainder))
        groups = [l + r for l, r in pairs] + ([remainder] if remainder else [])
    return PairingLevels(n=n, levels=tuple(levels))
