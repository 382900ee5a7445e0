import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairfed.errors import ContractViolationError, UndefinedInputError
from fairfed.metrics import CSV_HEADER, GapVariant, compute_row, gini, jain, selection_gap, utility_cv

positive_vectors = arrays(float, st.integers(1, 30), elements=st.floats(0.01, 1e4))


def pairwise_gini(values):
    values = np.asarray(values, dtype=float)
    return np.abs(values[:, None] - values[None, :]).sum() / (2 * values.size ** 2 * values.mean())


class TestJain:

    @pytest.mark.parametrize("values, expected", [
        ((2, 2, 2, 2), 1.0),
        ((1, 0, 0, 0), 0.25),
        ((1, 2, 3), 0.857143),
    ])
    def test_examples(self, values, expected):
        assert jain(values) == pytest.approx(expected, abs=1e-6)

    def test_all_zero_is_flagged(self, caplog):
        with caplog.at_level(logging.WARNING, logger="fairfed.metrics"):
            assert jain([0.0, 0.0]) == 1.0
        assert "all-zero" in caplog.text

    def test_negative(self):
        with pytest.raises(ContractViolationError):
            jain([1.0, -1.0])

    @given(positive_vectors, st.floats(0.1, 100))
    def test_scale_invariant(self, values, scale):
        assert jain(values * scale) == pytest.approx(jain(values), abs=1e-12)

    @given(st.integers(1, 20), st.integers(0, 19), st.floats(0.1, 10))
    def test_single_holder_reaches_minimum(self, n, index, value):
        values = np.zeros(n)
        values[index % n] = value
        assert jain(values) == pytest.approx(1 / n)


class TestUtilityCv:

    @pytest.mark.parametrize("values, expected", [((4, 4, 4), 0.0), ((0, 2), 1.0), ((1, 2, 3), 0.40825)])
    def test_examples(self, values, expected):
        assert utility_cv(values, epsilon_cv=0.0) == pytest.approx(expected, abs=1e-5)

    @given(positive_vectors, st.floats(0.1, 100))
    def test_scale_invariant(self, values, scale):
        assert utility_cv(values * scale, 0.0) == pytest.approx(utility_cv(values, 0.0), rel=1e-9, abs=1e-12)

    def test_empty(self):
        with pytest.raises(UndefinedInputError):
            utility_cv([])


class TestSelectionGap:

    @pytest.mark.parametrize("variant", list(GapVariant))
    def test_one_sided(self, variant):
        assert selection_gap([10, 0], 1, 10, 2, variant) == pytest.approx(1.0)

    @pytest.mark.parametrize("variant", list(GapVariant))
    def test_uniform_is_zero(self, variant):
        assert selection_gap([6, 6, 6, 6], 2, 12, variant=variant) == 0.0

    def test_variants_agree(self):
        counts = [7, 3, 2]
        share = selection_gap(counts, 2, 6, variant=GapVariant.FREQUENCY_SHARE)
        literal = selection_gap(counts, 2, 6, variant=GapVariant.ROUND_AVERAGE)
        assert literal == pytest.approx(share)
        assert share == pytest.approx(abs(7 / 12 - 1 / 3) + abs(3 / 12 - 1 / 3) + abs(2 / 12 - 1 / 3))

    def test_invalid(self):
        with pytest.raises(ContractViolationError):
            selection_gap([1, 1], 0, 5)

    @given(st.lists(st.integers(0, 50), min_size=2, max_size=10))
    def test_zero_iff_uniform(self, counts):
        total = sum(counts)
        if total == 0:
            return
        gap = selection_gap(counts, 1, total)
        assert (gap < 1e-12) == (len(set(counts)) == 1)


class TestGini:

    @pytest.mark.parametrize("values, expected", [((5, 5, 5), 0.0), ((1, 0), 0.5), ((1, 2, 3), 0.2222)])
    def test_examples(self, values, expected):
        assert gini(values) == pytest.approx(expected, abs=1e-4)

    def test_all_zero(self):
        with pytest.raises(UndefinedInputError):
            gini([0, 0, 0])

    @given(positive_vectors)
    def test_matches_pairwise_oracle(self, values):
        assert gini(values) == pytest.approx(pairwise_gini(values), abs=1e-9)

    @given(positive_vectors, st.floats(0.1, 100))
    def test_scale_invariant_and_bounded(self, values, scale):
        value = gini(values)
        assert gini(values * scale) == pytest.approx(value, abs=1e-9)
        assert 0.0 <= value <= 1.0 - 1.0 / values.size + 1e-12


class TestComputeRow:

    def test_row(self):
        row = compute_row(4, "fair", 0.5, [0.5, 0.5], [2.0, 4.0], [3, 1], 1, 0.25, 2)
        assert row.fairness_variance == pytest.approx(1.0)
        assert row.jain_perf == 1.0
        assert row.jain_utility == pytest.approx(36 / 40)
        assert row.selgap_share == pytest.approx(0.5)
        assert row.gini == pytest.approx(0.25)
        assert row.max_deviation == pytest.approx(1.0)
        assert row.surrogate_contribution == 0.25

    def test_gini_before_selection(self):
        row = compute_row(1, "vanilla", 0.0, [0.0, 0.0], [0.0, 0.0], [0, 0], 1)
        assert row.gini == 0.0
        assert row.jain_utility == 1.0

    def test_csv_fields(self):
        row = compute_row(2, "fair", 1 / 3, [1.0], [1.0], [2], 1, n_available=1)
        fields = row.csv_fields()
        assert len(fields) == len(CSV_HEADER)
        assert fields[:3] == ["2", "fair", "0.333333"]
        assert fields[-1] == "1"

    @given(positive_vectors)
    def test_shared_moments_match_the_metrics(self, values):
        counts = np.arange(values.size)
        row = compute_row(3, "fair", 1.0, values, values, counts, 1)
        assert row.fairness_variance == pytest.approx(np.var(values), rel=1e-9, abs=1e-9)
        assert row.jain_utility == pytest.approx(jain(values), rel=1e-9)
        assert row.utility_cv == pytest.approx(utility_cv(values), rel=1e-9, abs=1e-12)
        assert row.max_deviation == pytest.approx(np.max(np.abs(values - values.mean())), rel=1e-9, abs=1e-9)
