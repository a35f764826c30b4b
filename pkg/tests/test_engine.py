import numpy as np
import pytest

from rfi_toolkit.backend.engine import (
    ChainState,
    DiracLaw,
    GaussianLaw,
    UniformBoxLaw,
    cesaro_pool,
    ensemble_sampling_error,
    initial_law_from_config,
    markov_kernel_mc,
    rfi_step,
    run_chain,
    run_coupled_pair,
    run_ensemble,
)
from rfi_toolkit.backend.measures import EmpiricalMeasure
from rfi_toolkit.backend.operators import AffineMap
from rfi_toolkit.backend.problems import AffineFeasibilityProblem, FiniteFamily, NoisyHyperplaneFamily
from rfi_toolkit.backend.sampling import IndexSampler
from rfi_toolkit.shared.errors import DimensionMismatchError, InsufficientDataError, NonFiniteInputError
from rfi_toolkit.shared.models import DiracLawConfig, GaussianLawConfig, NoiseSpec


@pytest.fixture
def noisy_line():
    return NoisyHyperplaneFamily(
        [1.0, 0.0], [0.0, 0.0],
        xi_noise=NoiseSpec(kind="ball", scale=0.5),
        zeta_noise=NoiseSpec(kind="uniform", scale=0.01),
    )


class TestSingleChain:
    def test_negation_alternates(self, negation, make_sampler):
        log = run_chain([1.0], 4, make_sampler(negation), negation)
        np.testing.assert_array_equal(log.iterates[:, 0], [1.0, -1.0, 1.0, -1.0, 1.0])
        np.testing.assert_array_equal(log.residuals, [2.0, 2.0, 2.0, 2.0])
        assert log.iterations == 4
        assert log.final.k == 4

    def test_halving_converges(self, halving, make_sampler):
        log = run_chain([8.0], 3, make_sampler(halving), halving)
        np.testing.assert_allclose(log.iterates[:, 0], [8.0, 4.0, 2.0, 1.0])

    def test_rfi_step_advances_counter(self, halving, make_sampler):
        state = ChainState.start([2.0])
        state = rfi_step(state, make_sampler(halving), halving)
        assert state.k == 1
        np.testing.assert_allclose(state.x, [1.0])

    def test_cyclic_projections_solve_the_system(self):
        problem = AffineFeasibilityProblem.from_system([[1.0, 0.0], [0.0, 1.0]], [1.0, 2.0])
        sampler = IndexSampler.for_family(0, problem)
        log = run_chain([0.0, 0.0], 1, sampler, problem)
        np.testing.assert_allclose(log.final.x, [1.0, 2.0])

    def test_cyclic_projections_on_oblique_rows(self):
        # rows at 45 degrees: each sweep halves the step
        problem = AffineFeasibilityProblem.from_system([[1.0, 0.0], [1.0, 1.0]], [1.0, 3.0])
        log = run_chain([0.0, 0.0], 200, IndexSampler.for_family(0, problem), problem)
        assert log.residuals[0] == pytest.approx(np.sqrt(5.0))
        assert log.residuals[1] == pytest.approx(np.sqrt(0.5))
        settled = int(np.argmax(log.residuals < 1e-8))
        assert 0 < settled < 200
        assert np.all(np.diff(log.residuals[:settled + 1]) <= 0.0)
        assert np.all(log.residuals[settled:] < 1e-8)
        np.testing.assert_allclose(log.final.x, [1.0, 2.0], atol=1e-8)

    def test_same_seed_same_trajectory(self, noisy_line):
        first = run_chain([3.0, 4.0], 25, IndexSampler.for_family(5, noisy_line), noisy_line)
        second = run_chain([3.0, 4.0], 25, IndexSampler.for_family(5, noisy_line), noisy_line)
        np.testing.assert_array_equal(first.iterates, second.iterates)

    def test_invalid_inputs(self, halving, make_sampler):
        with pytest.raises(ValueError):
            run_chain([1.0], 0, make_sampler(halving), halving)
        with pytest.raises(DimensionMismatchError):
            run_chain([1.0, 2.0], 3, make_sampler(halving), halving)
        with pytest.raises(NonFiniteInputError):
            run_chain([np.nan], 3, make_sampler(halving), halving)


class TestInitialLaws:
    def test_laws_are_keyed_by_chain(self):
        law = GaussianLaw(3, mean=[1.0, 0.0, 0.0], scale=2.0)
        together = law.sample(8, [0, 1, 2])
        alone = law.sample(8, [1])
        np.testing.assert_array_equal(together[1], alone[0])

    def test_uniform_box(self):
        points = UniformBoxLaw(2, low=-1.0, high=3.0).sample(0, range(100))
        assert points.min() >= -1.0 and points.max() <= 3.0

    def test_from_config(self):
        assert isinstance(initial_law_from_config(DiracLawConfig(), 2), DiracLaw)
        law = initial_law_from_config(DiracLawConfig(point=[1.0, 2.0]), 2)
        np.testing.assert_array_equal(law.sample(0, [0])[0], [1.0, 2.0])
        assert isinstance(initial_law_from_config(GaussianLawConfig(scale=0.5), 4), GaussianLaw)
        with pytest.raises(DimensionMismatchError):
            initial_law_from_config(DiracLawConfig(point=[1.0]), 2)


class TestEnsemble:
    def test_negation_ensemble_alternates_between_diracs(self, negation, make_sampler):
        history = run_ensemble([1.0], 5, 3, make_sampler(negation), negation)
        np.testing.assert_array_equal(history[3].atoms, -np.ones((5, 1)))
        np.testing.assert_array_equal(history[2].atoms, np.ones((5, 1)))
        assert history.stored_iterations == [0, 1, 2, 3]

    def test_thinning_keeps_final_snapshot(self, negation, make_sampler):
        history = run_ensemble([1.0], 2, 10, make_sampler(negation), negation, thinning=4)
        assert history.stored_iterations == [0, 4, 8, 10]
        assert len(history.summaries) == 11
        assert np.isnan(history.summaries[0].mean_residual)
        assert history.summaries[1].mean_residual == pytest.approx(2.0)

    def test_summaries_track_second_moment(self, halving, make_sampler):
        history = run_ensemble([4.0], 3, 2, make_sampler(halving), halving)
        arrays = history.summary_arrays()
        np.testing.assert_allclose(arrays["second_moment"], [16.0, 4.0, 1.0])
        np.testing.assert_allclose(arrays["second_moment_se"], 0.0)

    def test_results_do_not_depend_on_thread_count(self, noisy_line):
        law = GaussianLaw(2, scale=5.0)
        serial = run_ensemble(law, 200, 15, IndexSampler.for_family(3, noisy_line), noisy_line)
        threaded = run_ensemble(law, 200, 15, IndexSampler.for_family(3, noisy_line), noisy_line, threads=4)
        np.testing.assert_array_equal(serial.final.atoms, threaded.final.atoms)

    def test_coupled_particles_from_one_point_stay_together(self, noisy_line):
        sampler = IndexSampler.for_family(3, noisy_line, coupled=True)
        history = run_ensemble([5.0, 5.0], 10, 6, sampler, noisy_line)
        atoms = history.final.atoms
        np.testing.assert_array_equal(atoms, np.repeat(atoms[:1], 10, axis=0))

    def test_independent_particles_spread_out(self, noisy_line):
        sampler = IndexSampler.for_family(3, noisy_line)
        history = run_ensemble([5.0, 5.0], 10, 6, sampler, noisy_line)
        assert history.final.compressed().size > 1

    def test_empirical_initial_measure(self, halving, make_sampler):
        start = EmpiricalMeasure([[2.0], [4.0]], [0.5, 0.5])
        history = run_ensemble(start, 50, 1, make_sampler(halving), halving)
        assert set(history[1].atoms[:, 0]) <= {1.0, 2.0}

    def test_max_snapshots_evicts_oldest(self, negation, make_sampler):
        history = run_ensemble([1.0], 2, 5, make_sampler(negation), negation, max_snapshots=2)
        assert history.stored_iterations == [4, 5]
        assert history.evicted_until == 3
        with pytest.raises(InsufficientDataError):
            history.points(0)

    def test_time_budget_overrun_is_flagged_not_truncated(self, halving, make_sampler):
        history = run_ensemble([1.0], 2, 50, make_sampler(halving), halving, time_budget=0.0)
        assert history.time_budget_exceeded
        assert history.last_k == 50
        unbounded = run_ensemble([1.0], 2, 50, make_sampler(halving), halving)
        assert not unbounded.time_budget_exceeded
        np.testing.assert_array_equal(history.final.atoms, unbounded.final.atoms)

    def test_invalid_arguments(self, halving, make_sampler):
        with pytest.raises(ValueError):
            run_ensemble([1.0], 0, 5, make_sampler(halving), halving)
        with pytest.raises(ValueError):
            run_ensemble([1.0], 2, 5, make_sampler(halving), halving, threads=0)
        with pytest.raises(ValueError):
            run_ensemble([1.0], 2, 5, make_sampler(halving), halving, thinning=0)


class TestCesaroPool:
    def test_negation_pool_is_symmetric(self, negation, make_sampler):
        history = run_ensemble([1.0], 3, 4, make_sampler(negation), negation)
        pooled = cesaro_pool(history, 2).compressed()
        np.testing.assert_array_equal(pooled.atoms[:, 0], [-1.0, 1.0])
        np.testing.assert_allclose(pooled.weights, [0.5, 0.5])
        pooled = cesaro_pool(history, 3).compressed()
        np.testing.assert_allclose(pooled.weights, [2.0 / 3.0, 1.0 / 3.0])

    def test_thinned_pool_weights_sum_to_one(self, halving, make_sampler):
        history = run_ensemble([1.0], 4, 10, make_sampler(halving), halving, thinning=4)
        pooled = cesaro_pool(history, 6)
        assert pooled.weights.sum() == pytest.approx(1.0)
        # snapshot 4 stands for iterations 1..4, snapshot 8 for 5..6
        masses = pooled.compressed()
        np.testing.assert_allclose(masses.atoms[:, 0], [2.0 ** -8, 2.0 ** -4])
        np.testing.assert_allclose(masses.weights, [2.0 / 6.0, 4.0 / 6.0])

    def test_pool_needs_history(self, negation, make_sampler):
        history = run_ensemble([1.0], 2, 4, make_sampler(negation), negation)
        with pytest.raises(InsufficientDataError):
            cesaro_pool(history, 5)
        with pytest.raises(ValueError):
            cesaro_pool(history, 0)

    def test_pool_refuses_evicted_history(self, negation, make_sampler):
        history = run_ensemble([1.0], 2, 6, make_sampler(negation), negation, max_snapshots=3)
        with pytest.raises(InsufficientDataError):
            cesaro_pool(history, 6)


class TestKernelAndCoupling:
    def test_markov_kernel_matches_weights(self):
        family = FiniteFamily([AffineMap.constant([0.0]), AffineMap.constant([1.0])], weights=[0.3, 0.7])
        kernel = markov_kernel_mc([5.0], 4000, IndexSampler.for_family(1, family), family)
        mass_at_one = kernel.weights[kernel.atoms[:, 0] == 1.0].sum()
        # four standard errors of a binomial proportion
        assert abs(mass_at_one - 0.7) < 4 * np.sqrt(0.21 / 4000)

    def test_markov_kernel_ignores_coupling(self):
        family = FiniteFamily([AffineMap.constant([0.0]), AffineMap.constant([1.0])])
        independent = markov_kernel_mc([5.0], 200, IndexSampler.for_family(1, family), family)
        coupled = markov_kernel_mc([5.0], 200, IndexSampler.for_family(1, family, coupled=True), family)
        assert coupled.compressed().size == 2
        np.testing.assert_array_equal(coupled.atoms, independent.atoms)

    def test_coupled_pair_contracts(self, halving, make_sampler):
        profile = run_coupled_pair([4.0], [0.0], 5, make_sampler(halving), halving)
        np.testing.assert_allclose(profile.distances, 4.0 * 0.5 ** np.arange(6))
        np.testing.assert_allclose(profile.discrepancies, (profile.distances[:-1] / 2.0) ** 2)
        assert np.all(profile.averaged_slack(0.75) >= 0.0)

    def test_coupled_pair_of_projections_never_separates(self, noisy_line):
        profile = run_coupled_pair([3.0, 1.0], [-2.0, 7.0], 50, IndexSampler.for_family(0, noisy_line), noisy_line)
        assert np.all(np.diff(profile.distances) <= 1e-12)

    def test_sampling_error_vanishes_for_deterministic_maps(self, negation, make_sampler):
        assert ensemble_sampling_error([1.0], 10, 3, make_sampler(negation), negation) == 0.0

    def test_sampling_error_is_positive_for_noise(self, noisy_line):
        sampler = IndexSampler.for_family(2, noisy_line)
        error = ensemble_sampling_error(GaussianLaw(2, scale=3.0), 50, 5, sampler, noisy_line)
        assert error > 0.0
