import json
import math

import numpy as np
import pytest

from wffilter.errors import DepthError, DomainError
from wffilter.filter import FilterState, gaps_from_times, log_likelihood, predict_h, run_filter
from wffilter.kernel import ModelParams, eigen_rate
from wffilter.mixture import BetaMixture, normalize, stationary
from wffilter.observation import ObservationModel, component_marginal
from wffilter.propagation import propagate
from wffilter.simulation_oracle import build_grid_model, grid_filter, simulate_dataset

UNIT = ModelParams(2.0, 2.0)
BERN = ObservationModel.bernoulli()
P46 = ModelParams(4.0, 6.0)


def half_life_gap(params):
    """Gap with exp(-a_1 gap) = 1/2."""
    return math.log(2) / eigen_rate(1, params)


@pytest.fixture(scope="module")
def sim200():
    return simulate_dataset(P46, 200, 0.5, BERN, 11)


class TestWorkedExamples:
    def test_single_one(self):
        tr = run_filter([1], 1.0, BERN, UNIT)
        assert tr.steps[0].updated.components == {(1, 0): 1.0}
        assert tr.steps[0].predictive_prob == pytest.approx(0.5, rel=1e-15)
        assert tr.loglik == pytest.approx(math.log(0.5), rel=1e-15)

    def test_one_then_zero(self):
        tr = run_filter([1, 0], half_life_gap(UNIT), BERN, UNIT)
        pred = tr.steps[1].predicted.components
        assert pred[(1, 0)] == pytest.approx(0.5, rel=1e-14)
        assert pred[(0, 0)] == pytest.approx(0.5, rel=1e-14)
        assert tr.steps[1].predictive_prob == pytest.approx(5 / 12, rel=1e-14)

    def test_single_observation_ratio(self):
        # P(y = 1) = delta' / (delta + delta') under the stationary law
        assert log_likelihood([1], 0.5, BERN, ModelParams(2.0, 6.0)) == pytest.approx(math.log(0.75), rel=1e-15)

    def test_update_then_predict_order(self):
        # the first observation is absorbed by the initial law, not a transported one
        init = BetaMixture(UNIT, {(3, 0): 1.0})
        tr = run_filter([1], 5.0, BERN, UNIT, init=init)
        assert tr.steps[0].predicted == init
        assert tr.steps[0].predictive_prob == pytest.approx(component_marginal((3, 0), 1, BERN, UNIT), rel=1e-15)


class TestInvariants:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_component_count_law(self, seed):
        rng = np.random.default_rng(seed)
        obs = rng.integers(0, 2, size=12).tolist()
        tr = run_filter(obs, [0.3] * 12, BERN, ModelParams(3.0, 5.0), prune_epsilon=0.0)
        predicted = [s.predicted for s in tr.steps[1:]] + [tr.final_predicted]
        for n, (step, pred) in enumerate(zip(tr.steps, predicted), start=1):
            s = sum(obs[:n])
            count = (1 + s) * (1 + n - s)
            # the updated law fills the rectangle below its top index; transport fills the gaps
            top = step.updated.indices.max(axis=0)
            assert (top[0] + 1) * (top[1] + 1) == count
            assert pred.n_components == count

    def test_means_in_unit_interval(self, sim200):
        m = run_filter(sim200.obs, 0.5, BERN, P46).filter_means()
        assert np.all((m > 0) & (m < 1))

    def test_pruning_invariance(self, sim200):
        obs = sim200.obs[:100]
        a = log_likelihood(obs, 0.5, BERN, P46, prune_epsilon=0.0)
        b = log_likelihood(obs, 0.5, BERN, P46, prune_epsilon=1e-12)
        assert abs(a - b) <= 1e-8

    def test_pruned_means_stable(self, sim200):
        obs = sim200.obs[:60]
        a = run_filter(obs, 0.5, BERN, P46, prune_epsilon=0.0).filter_means()
        b = run_filter(obs, 0.5, BERN, P46, prune_epsilon=1e-12).filter_means()
        assert np.max(np.abs(a - b)) < 1e-10

    def test_loglik_is_sum_of_logs(self, sim200):
        tr = run_filter(sim200.obs, 0.5, BERN, P46)
        assert tr.loglik == pytest.approx(math.fsum(np.log(tr.predictive_probs())), abs=1e-12)

    def test_updated_normalized(self, sim200):
        tr = run_filter(sim200.obs[:30], 0.5, BERN, P46)
        for s in tr.steps:
            assert abs(s.updated.total_weight() - 1) <= 1e-12
            assert abs(s.predicted.total_weight() - 1) <= 1e-12


class TestAgainstOracles:
    def test_grid_200(self, sim200):
        # finer than the default grid: the midpoint rule is second order in the cell width
        tr = run_filter(sim200.obs, 0.5, BERN, P46, prune_epsilon=1e-12)
        grid = grid_filter(sim200.obs, 0.5, BERN, build_grid_model(P46, 0.5, M=800))
        assert np.max(np.abs(tr.filter_means() - grid.means)) <= 1e-6

    def test_iid_limit(self, sim200):
        obs = sim200.obs[:50]
        p1 = P46.delta_prime / (P46.delta + P46.delta_prime)
        iid = math.fsum(math.log(p1 if y else 1 - p1) for y in obs)
        assert log_likelihood(obs, 100.0, BERN, P46) == pytest.approx(iid, abs=1e-6)


class TestLikelihoodPaths:
    @pytest.mark.parametrize(
        "om, params, n",
        [
            (BERN, P46, 150),
            (ObservationModel.binomial(3), ModelParams(2.5, 3.5), 40),
            (ObservationModel.negbinomial(2), ModelParams(6.0, 9.0), 25),
        ],
    )
    def test_compiled_matches_trace(self, om, params, n):
        d = simulate_dataset(params, n, 0.4, om, 3)
        tr = run_filter(d.obs, 0.4, om, params)
        assert log_likelihood(d.obs, 0.4, om, params) == pytest.approx(tr.loglik, abs=1e-12 * n)

    def test_variable_gaps(self):
        rng = np.random.default_rng(8)
        obs = rng.integers(0, 2, size=30).tolist()
        gaps = rng.uniform(0.05, 1.0, size=29)
        tr = run_filter(obs, gaps, BERN, P46)
        assert log_likelihood(obs, gaps, BERN, P46) == pytest.approx(tr.loglik, abs=1e-11)

    def test_custom_init(self):
        init = normalize(BetaMixture(P46, {(0, 0): 0.5, (4, 1): 0.5}))
        obs = [1, 1, 0, 1, 0, 0, 1]
        tr = run_filter(obs, 0.2, BERN, P46, init=init)
        assert log_likelihood(obs, 0.2, BERN, P46, init=init) == pytest.approx(tr.loglik, abs=1e-12)

    def test_empty(self):
        assert log_likelihood([], 0.5, BERN, P46) == 0.0

    def test_depth_error(self):
        with pytest.raises(DepthError):
            log_likelihood([1] * 40, 0.01, BERN, UNIT, prune_epsilon=0.0, depth=16)
        with pytest.raises(DepthError, match="step"):
            run_filter([1] * 40, 0.01, BERN, UNIT, prune_epsilon=0.0, depth=16)

    def test_invalid_observation(self):
        with pytest.raises(DomainError):
            log_likelihood([0, 2], 0.5, BERN, P46)

    def test_gap_length_mismatch(self):
        with pytest.raises(DomainError):
            run_filter([1, 0, 1], [0.5], BERN, P46)

    def test_init_params_mismatch(self):
        with pytest.raises(DomainError):
            run_filter([1], 0.5, BERN, P46, init=stationary(UNIT))


class TestPredictH:
    @pytest.fixture
    def state(self):
        return run_filter([1, 0, 1, 1], 0.3, BERN, ModelParams(3.0, 5.0), prune_epsilon=0.0).final_state

    def test_one_step(self, state):
        assert predict_h(state, 1, 0.3, prune_epsilon=0.0) == propagate(state.current, 0.3, epsilon=0.0)

    def test_semigroup(self, state):
        a = predict_h(state, 4, 0.3, prune_epsilon=0.0)
        b = propagate(state.current, 1.2, epsilon=0.0)
        np.testing.assert_allclose(a.to_dense(), b.to_dense(), atol=1e-9)

    def test_same_rectangle(self, state):
        a = predict_h(state, 3, 0.1, prune_epsilon=0.0)
        top = state.current.indices.max(axis=0)
        assert a.n_components == (top[0] + 1) * (top[1] + 1)
        assert a.indices.max(axis=0).tolist() == top.tolist()

    def test_ergodic(self, state):
        p = state.current.params
        h = 20
        m = predict_h(state, h, 50.0 / eigen_rate(1, p) / h, prune_epsilon=0.0)
        assert m.components[(0, 0)] >= 1 - 1e-8

    def test_requires_updated(self, state):
        bad = FilterState(state.current, "predicted", state.step_index, state.cumulative_loglik)
        with pytest.raises(DomainError):
            predict_h(bad, 1, 0.3)
        with pytest.raises(DomainError):
            predict_h(state, 0, 0.3)


class TestTrace:
    def test_final_predicted(self):
        tr = run_filter([1, 0], [0.5, 0.25], BERN, P46)
        expected = propagate(tr.steps[-1].updated, 0.25)
        assert tr.final_predicted == expected

    def test_json(self):
        tr = run_filter([1, 0, 1], 0.5, BERN, P46)
        d = json.loads(tr.to_json())
        assert d["loglik"] == tr.loglik
        assert [s["y"] for s in d["steps"]] == [1, 0, 1]
        assert d["observation_model"] == BERN.to_config()

    def test_gaps_from_times(self):
        np.testing.assert_allclose(gaps_from_times([0.0, 0.5, 1.5]), [0.5, 1.0])
        with pytest.raises(DomainError):
            gaps_from_times([0.0, 0.0])

    def test_out_of_support(self):
        with pytest.raises(DomainError, match="step 2"):
            run_filter([1, 3], 0.5, ObservationModel.binomial(2), P46)
