"""Grouping combinatorics: factors, layouts, granularity, pairing levels."""

from fractions import Fraction

import pytest

from stcvae.grouping import (
    LayoutError,
    decomposition_depth,
    make_layout,
    pairing_levels,
    valid_grouping_factors,
)


class TestValidGroupingFactors:
    def test_twelve(self):
        assert valid_grouping_factors(12) == (1, 2, 3, 4, 6)

    def test_two(self):
        assert valid_grouping_factors(2) == (1,)

    def test_eight(self):
        # all divisors of 8 except 8 itself
        assert valid_grouping_factors(8) == (1, 2, 4)

    def test_rejects_tiny_n(self):
        with pytest.raises(LayoutError):
            valid_grouping_factors(1)
        with pytest.raises(LayoutError):
            valid_grouping_factors(0)


class TestMakeLayout:
    def test_full_granularity(self):
        layout = make_layout(12, 6)
        assert layout.g == 1
        assert layout.groups == (tuple(range(6)), tuple(range(6, 12)))

    def test_singleton_degeneracy(self):
        layout = make_layout(12, 1)
        assert layout.g == Fraction(1, 6)
        assert len(layout.groups) == 12
        assert all(len(g) == 1 for g in layout.groups)

    def test_half_granularity_blocks(self):
        layout = make_layout(8, 2)
        assert layout.g == Fraction(1, 2)
        assert layout.groups == ((0, 1), (2, 3), (4, 5), (6, 7))

    def test_invalid_factor(self):
        with pytest.raises(LayoutError, match="not a valid grouping factor"):
            make_layout(12, 5)
        with pytest.raises(LayoutError):
            make_layout(12, 12)  # the whole-latent group is excluded

    def test_g_is_exact_rational(self):
        layout = make_layout(12, 4)
        assert layout.g * layout.m == layout.b_hat  # no float rounding


class TestDecompositionDepth:
    def test_examples(self):
        assert decomposition_depth(2) == 0
        assert decomposition_depth(8) == 2
        assert decomposition_depth(12) == 3

    def test_rejects_tiny_n(self):
        with pytest.raises(LayoutError):
            decomposition_depth(1)


class TestPairingLevels:
    def test_four(self):
        levels = pairing_levels(4)
        assert len(levels.levels) == 2
        assert levels.levels[0].pairs == (((0,), (1,)), ((2,), (3,)))
        assert levels.levels[0].remainder is None
        assert levels.levels[1].pairs == (((0, 1), (2, 3)),)

    def test_five_has_remainder(self):
        levels = pairing_levels(5)
        assert levels.levels[0].pairs == (((0,), (1,)), ((2,), (3,)))
        assert levels.levels[0].remainder == (4,)
        assert levels.final_pair == ((0, 1, 2, 3), (4,))

    def test_two_is_base_case(self):
        levels = pairing_levels(2)
        assert len(levels.levels) == 1
        assert levels.levels[0].pairs == (((0,), (1,)),)
        assert levels.depth == 0

    def test_final_level_pairs_exactly_two_groups(self):
        for n in range(2, 65):
            last = pairing_levels(n).levels[-1]
            assert len(last.pairs) == 1
            assert last.remainder is None

    def test_depth_matches_formula(self):
        for n in range(2, 65):
            assert pairing_levels(n).depth == decomposition_depth(n)

    def test_level_transitions_partition(self):
        # union of pairs plus remainder at each level equals the previous
        # level's group set; group counts strictly decrease
        for n in (2, 3, 5, 8, 12, 17, 31, 64):
            levels = pairing_levels(n)
            prev = [(d,) for d in range(n)]
            for lev in levels.levels:
                used = [g for pair in lev.pairs for g in pair]
                if lev.remainder is not None:
                    used.append(lev.remainder)
                assert sorted(used) == sorted(prev)
                merged = [l + r for l, r in lev.pairs]
                if lev.remainder is not None:
                    merged.append(lev.remainder)
                assert len(merged) < len(prev)
                prev = merged
            assert len(prev) == 1

    def test_groups_at_replays_levels(self):
        levels = pairing_levels(12)
        assert levels.groups_at(0) == tuple((d,) for d in range(12))
        assert levels.groups_at(1) == tuple(
            (2 * j, 2 * j + 1) for j in range(6)
        )


class TestLayoutProperties:
    def test_partition_for_all_small_n(self):
        for n in range(2, 65):
            for b_hat in valid_grouping_factors(n):
                layout = make_layout(n, b_hat)
                flat = [d for g in layout.groups for d in g]
                assert sorted(flat) == list(range(n))
                assert all(len(g) == b_hat for g in layout.groups)

    def test_granularity_monotone_and_spans_range(self):
        for n in range(2, 65):
            factors = valid_grouping_factors(n)
            gs = [make_layout(n, b).g for b in factors]
            assert gs == sorted(gs)
            assert gs[0] == Fraction(1, factors[-1])
            assert gs[-1] == 1
