import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survgam.data import make_dataset
from survgam.errors import DataValidationError
from survgam.quadrature import expand, lobatto_rule, partition_at_events


class TestLobattoRule:
    def test_two_nodes_is_trapezoid(self):
        rule = lobatto_rule(2)
        np.testing.assert_allclose(rule.nodes, [-1.0, 1.0])
        np.testing.assert_allclose(rule.weights, [1.0, 1.0])

    def test_three_nodes_moment_derived(self):
        # moment equations for nodes {-1, 0, 1}: w0+w1+w2=2, w0+w2=2/3
        rule = lobatto_rule(3)
        np.testing.assert_allclose(rule.nodes, [-1.0, 0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(rule.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-14)

    def test_four_nodes_moment_derived(self):
        rule = lobatto_rule(4)
        s5 = 1.0 / np.sqrt(5.0)
        np.testing.assert_allclose(rule.nodes, [-1.0, -s5, s5, 1.0], atol=1e-14)
        np.testing.assert_allclose(rule.weights, [1 / 6, 5 / 6, 5 / 6, 1 / 6], atol=1e-14)

    @pytest.mark.parametrize("n", range(2, 11))
    def test_exact_for_monomials_up_to_degree(self, n):
        rule = lobatto_rule(n)
        for k in range(2 * n - 2):
            quad = float(np.sum(rule.weights * rule.nodes**k))
            exact = (1.0 - (-1.0) ** (k + 1)) / (k + 1)
            assert abs(quad - exact) < 1e-12, (n, k)

    @pytest.mark.parametrize("n", [2, 5, 17, 33, 64])
    def test_structure(self, n):
        rule = lobatto_rule(n)
        assert rule.nodes[0] == -1.0 and rule.nodes[-1] == 1.0
        assert np.all(np.diff(rule.nodes) > 0)
        assert np.all(rule.weights > 0)
        assert abs(rule.weights.sum() - 2.0) < 1e-12

    def test_too_few_nodes_rejected(self):
        with pytest.raises(ValueError):
            lobatto_rule(1)


class TestExpand:
    def test_event_record_three_nodes(self):
        d = make_dataset([0.0], [2.0], [1], [[0.0]], ["x"])
        e = expand(d, 3)
        np.testing.assert_allclose(e.node_time, [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(e.y, [0, 0, 1])
        np.testing.assert_allclose(e.log_weight, np.log([1 / 3, 4 / 3, 1 / 3]))

    def test_censored_record_trapezoid(self):
        d = make_dataset([0.0], [2.0], [0], [[0.0]], ["x"])
        e = expand(d, 2)
        np.testing.assert_allclose(e.node_time, [0.0, 2.0])
        np.testing.assert_array_equal(e.y, [0, 0])
        np.testing.assert_allclose(e.log_weight, [0.0, 0.0], atol=1e-15)

    @given(
        entry=st.floats(0.0, 5.0),
        gap=st.floats(0.01, 50.0),
        n=st.integers(2, 20),
        event=st.integers(0, 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_weights_sum_to_followup_and_shape(self, entry, gap, n, event):
        d = make_dataset([entry], [entry + gap], [event], [[0.0]], ["x"])
        e = expand(d, n)
        assert e.n_rows == n
        assert abs(np.exp(e.log_weight).sum() - gap) < 1e-10 * max(1.0, gap)
        assert e.node_time[0] == entry and e.node_time[-1] == entry + gap
        assert np.all(np.diff(e.node_time) > 0)
        assert e.y[-1] == event and np.all(e.y[:-1] == 0)

    def test_row_count_linear_in_subjects(self, rng):
        from tests.conftest import random_survival_dataset

        d = random_survival_dataset(rng, 57)
        for n in (2, 5, 9):
            assert expand(d, n).n_rows == 57 * n

    def test_rows_grouped_and_ordered_by_subject(self, three_subject_dataset):
        e = expand(three_subject_dataset, 4)
        np.testing.assert_array_equal(e.subject, np.repeat([0, 1, 2], 4))


class TestPartitionAtEvents:
    def test_three_subject_risk_sets(self, three_subject_dataset):
        part = partition_at_events(three_subject_dataset)
        np.testing.assert_array_equal(part.boundaries, [1.0, 2.0])
        np.testing.assert_array_equal(part.death_counts, [1, 1])
        np.testing.assert_array_equal(part.interval_lengths, [1.0, 1.0])
        # A is at risk only in (0,1]; B and C in both intervals
        np.testing.assert_array_equal(part.at_risk.sum(axis=1), [1, 2, 2])
        # risk sets: R_1 = {A,B,C}, R_2 = {B,C}
        np.testing.assert_array_equal(part.at_risk[:, 0], [True, True, True])
        np.testing.assert_array_equal(part.at_risk[:, 1], [False, True, True])

    def test_single_subject(self):
        d = make_dataset([0.0], [1.5], [1], [[0.0]], ["x"])
        part = partition_at_events(d)
        assert part.n_intervals == 1
        assert part.death_counts[0] == 1
        assert part.at_risk[0, 0]

    def test_tied_events_counted_once_per_boundary(self):
        d = make_dataset(
            [0, 0, 0, 0], [1.0, 1.0, 2.0, 2.5], [1, 1, 1, 0], [[0.0]] * 4, ["x"]
        )
        part = partition_at_events(d)
        np.testing.assert_array_equal(part.boundaries, [1.0, 2.0])
        np.testing.assert_array_equal(part.death_counts, [2, 1])

    def test_death_counts_sum_to_events(self, rng):
        from tests.conftest import random_survival_dataset

        d = random_survival_dataset(rng, 200)
        part = partition_at_events(d)
        assert part.death_counts.sum() == d.n_events
        assert np.all(part.death_counts >= 1)

    def test_risk_sets_nested_without_delayed_entry(self, rng):
        from tests.conftest import random_survival_dataset

        d = random_survival_dataset(rng, 120)
        part = partition_at_events(d)
        risk_sizes = part.at_risk.sum(axis=0)
        assert np.all(np.diff(risk_sizes) <= 0)

    def test_no_events_rejected(self):
        d = make_dataset([0.0], [1.0], [0], [[0.0]], ["x"])
        with pytest.raises(DataValidationError):
            partition_at_events(d)

    def test_exposure_reconciles_with_expansion(self, rng):
        # summing full-interval exposures over members reproduces |R_k| * dt_k
        from tests.conftest import random_survival_dataset

        d = random_survival_dataset(rng, 80)
        part = partition_at_events(d)
        per_interval = part.at_risk.sum(axis=0) * part.interval_lengths
        explicit = np.array(
            [
                sum(
                    part.interval_lengths[k]
                    for i in range(d.n_subjects)
                    if part.at_risk[i, k]
                )
                for k in range(part.n_intervals)
            ]
        )
        np.testing.assert_allclose(per_interval, explicit, rtol=1e-12)
