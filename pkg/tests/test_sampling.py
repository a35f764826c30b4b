import numpy as np
import pytest

from rfi_toolkit.backend.sampling import (
    FiniteDiscrete,
    IndexSampler,
    Mixture,
    NoiseComponent,
    NoiseDriven,
    SEED_LIMIT,
    check_seed,
    stream,
)
from rfi_toolkit.shared.errors import ResampleExhaustedError
from rfi_toolkit.shared.models import NoiseSpec


class RejectingFamily:
    """Scalar Gaussian draws; draws below ``threshold`` are degenerate."""

    def __init__(self, threshold):
        self.threshold = threshold

    def is_degenerate(self, draw):
        return draw < self.threshold


def gaussian(scale=1.0, size=None):
    return NoiseComponent(NoiseSpec(kind="gaussian", scale=scale), size)


def test_draws_are_keyed_by_chain_and_iteration():
    sampler = IndexSampler(42, gaussian(size=3))
    first = sampler.draw(3, 5)
    for k in range(10):
        sampler.draw(0, k)
    np.testing.assert_array_equal(sampler.draw(3, 5), first)
    assert not np.array_equal(sampler.draw(4, 5), first)
    assert not np.array_equal(sampler.draw(3, 6), first)


def test_different_seeds_give_different_draws():
    a = IndexSampler(1, gaussian(size=2)).draw(0, 0)
    b = IndexSampler(2, gaussian(size=2)).draw(0, 0)
    assert not np.array_equal(a, b)


def test_coupled_sampler_shares_draws_across_chains():
    sampler = IndexSampler(7, gaussian(size=2), coupled=True)
    np.testing.assert_array_equal(sampler.draw(0, 11), sampler.draw(9, 11))


def test_initial_stream_is_separate_from_step_stream():
    step = stream(5, 0, 0).standard_normal()
    initial = stream(5, 0, 0, purpose=1).standard_normal()
    assert step != initial


def test_seed_range():
    assert check_seed(0) == 0
    assert check_seed(SEED_LIMIT - 1) == SEED_LIMIT - 1
    with pytest.raises(ValueError):
        check_seed(-1)
    with pytest.raises(ValueError):
        check_seed(SEED_LIMIT)


def test_finite_discrete_frequencies():
    law = FiniteDiscrete([0.2, 0.8])
    sampler = IndexSampler(3, law)
    draws = np.array([sampler.draw(0, k) for k in range(5000)])
    assert abs(draws.mean() - 0.8) < 0.03


def test_single_point_law_is_deterministic():
    law = FiniteDiscrete([0.0, 1.0, 0.0])
    assert law.is_deterministic
    assert law.sample(None) == 1
    assert IndexSampler(0, law).draw(5, 5) == 1


def test_finite_discrete_validation():
    with pytest.raises(ValueError):
        FiniteDiscrete([0.0, 0.0])
    with pytest.raises(ValueError):
        FiniteDiscrete([-0.5, 1.5])
    with pytest.raises(ValueError):
        FiniteDiscrete()


@pytest.mark.parametrize("kind,expected", [
    ("gaussian", 4.0),
    ("uniform", 4.0 / 3.0),
    ("ball", 4.0 / 4.0),
])
def test_component_variance_matches_samples(kind, expected):
    component = NoiseComponent(NoiseSpec(kind=kind, scale=2.0), size=2)
    assert component.component_variance == pytest.approx(expected)
    samples = component.sample_many(np.random.default_rng(0), 200_000)
    assert samples.var(axis=0).mean() == pytest.approx(expected, rel=0.02)


def test_ball_noise_stays_in_ball():
    component = NoiseComponent(NoiseSpec(kind="ball", scale=0.5), size=3)
    samples = component.sample_many(np.random.default_rng(1), 1000)
    assert np.all(np.linalg.norm(samples, axis=1) <= 0.5 + 1e-12)


def test_noise_mean_shift():
    component = NoiseComponent(NoiseSpec(kind="none", mean=3.0))
    assert component.is_deterministic
    assert component.sample(None) == 3.0


def test_noise_driven_keys_and_order():
    law = NoiseDriven({"xi": gaussian(size=2), "zeta": gaussian()})
    draw = law.sample(np.random.default_rng(0))
    assert set(draw) == {"xi", "zeta"}
    assert draw["xi"].shape == (2,)
    assert isinstance(draw["zeta"], float)


def test_mixture_draws_branch_index():
    law = Mixture(FiniteDiscrete([1.0, 0.0]), [gaussian(), gaussian(scale=10.0)])
    index, value = law.sample(np.random.default_rng(0))
    assert index == 0
    assert isinstance(value, float)
    with pytest.raises(ValueError):
        Mixture(FiniteDiscrete(size=3), [gaussian()])


def test_degenerate_draws_are_resampled():
    sampler = IndexSampler(9, gaussian())
    family = RejectingFamily(threshold=0.0)
    draws = [sampler.draw(0, k, family) for k in range(200)]
    assert min(draws) >= 0.0
    # resampling is deterministic too
    assert sampler.draw(0, 17, family) == draws[17]


def test_resampling_gives_up():
    sampler = IndexSampler(9, gaussian())
    with pytest.raises(ResampleExhaustedError):
        sampler.draw(0, 0, RejectingFamily(threshold=np.inf))


def test_deterministic_degenerate_draw_fails_immediately():
    sampler = IndexSampler(0, NoiseComponent(NoiseSpec(kind="none")))
    with pytest.raises(ResampleExhaustedError):
        sampler.draw(0, 0, RejectingFamily(threshold=1.0))


def test_iter_draws_matches_direct_draws():
    sampler = IndexSampler(4, gaussian())
    stream_draws = sampler.iter_draws(chain_id=2, start=3)
    for k in range(3, 8):
        assert next(stream_draws) == sampler.draw(2, k)
