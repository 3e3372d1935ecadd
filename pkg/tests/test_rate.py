import numpy as np
import pytest

from app.core.channel import Scenario, make_link, random_scenario, sample_realization
from app.core.exceptions import ValidationException
from app.core.numkern import logdet_pd
from app.core.rate import (
    bs_powers,
    check_beams,
    make_beams,
    massive_ewsr,
    mmse_rx,
    monte_carlo_ewsr,
    mse_matrix,
    pathwise_rx_covariances,
    rx_covariances,
    user_rates,
    wsmse_cost,
    wsr,
    wsr_given_receivers,
)

SEED = 11
EULER_GAMMA = 0.5772156649015329


def _random_beams(scn, rng, fill=0.5):
    """Complex Gaussian beams using `fill` of every BS budget, split evenly over its users."""
    beams = []
    for k in range(scn.n_users):
        bs = scn.serving[k]
        g = rng.standard_normal((scn.nt[bs], scn.streams[k])) + 1j * rng.standard_normal((scn.nt[bs], scn.streams[k]))
        beams.append(g * np.sqrt(fill * scn.power[bs] / len(scn.users_of(bs))) / np.linalg.norm(g))
    return make_beams(beams, n_cells=scn.n_cells)


def _single_link_scenario(amplitudes, power, nt=1, nr=1, aod=None, aoa=None):
    n = len(amplitudes)
    link = make_link(amplitudes, aod if aod is not None else np.zeros(n), aoa if aoa is not None else np.zeros(n), nt, nr)
    return Scenario(n_cells=1, serving=(0,), nt=(nt,), nr=(nr,), power=(power,), weights=(1.0,),
                    links=((link,),), streams=(1,))


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def two_cell(rng):
    scn = random_scenario(2, 2, 3, nt=4, nr=2, power=10.0, rng=rng, streams=1)
    return scn, sample_realization(scn, rng)


def test_scalar_link_rate():
    """One path of unit amplitude: |h| = 1 for every draw, so the rate is ln(1 + P)."""
    scn = _single_link_scenario([1.0], power=4.0)
    h = sample_realization(scn, np.random.default_rng(0))
    beams = make_beams([np.array([[2.0]])], n_cells=1)
    assert wsr(scn, h, beams) == pytest.approx(np.log(5.0))


def test_covariances_differ_by_own_signal(two_cell, rng):
    scn, h = two_cell
    beams = _random_beams(scn, rng)
    covs = rx_covariances(scn, h, beams)
    for k in range(scn.n_users):
        hg = h[k, scn.serving[k]] @ beams.beams[k]
        assert np.allclose(covs.r[k] - covs.rbar[k], hg @ hg.conj().T)
    rates = user_rates(scn, h, beams)
    expected = [logdet_pd(covs.r[k]) - logdet_pd(covs.rbar[k]) for k in range(scn.n_users)]
    assert np.allclose(rates, expected)


def test_wsmse_returns_the_rate(rng):
    """With MMSE receivers and W = E^-1 the weighted MSE equals sum u_k d_k - WSR."""
    for _ in range(10):
        scn = random_scenario(2, 2, 3, nt=3, nr=3, power=5.0, rng=rng, streams=2)
        h = sample_realization(scn, rng)
        beams = _random_beams(scn, rng)
        receivers = [mmse_rx(scn, h, beams, k) for k in range(scn.n_users)]
        weights = [np.linalg.inv(mse_matrix(scn, h, beams, k, receivers[k])) for k in range(scn.n_users)]
        value = wsr(scn, h, beams)
        cost = wsmse_cost(scn, h, beams, receivers, weights)
        assert cost == pytest.approx(2 * scn.n_users - value, rel=1e-9)


def test_mmse_receivers_lose_nothing(two_cell, rng):
    scn, h = two_cell
    beams = _random_beams(scn, rng)
    receivers = [mmse_rx(scn, h, beams, k) for k in range(scn.n_users)]
    assert wsr_given_receivers(scn, h, beams, receivers) == pytest.approx(wsr(scn, h, beams), rel=1e-9)


def test_budget_checks(two_cell):
    scn, _ = two_cell
    beams = make_beams([np.ones((4, 1)) * 2.0] * scn.n_users, n_cells=2)
    assert bs_powers(scn, beams) == pytest.approx([32.0, 32.0])
    with pytest.raises(ValidationException):
        check_beams(scn, beams)
    with pytest.raises(ValidationException):
        check_beams(scn, make_beams([np.ones((3, 1))] * scn.n_users))


def test_single_path_massive_rate():
    """L = 1: ln det(I + Hr D diag(Ht^H Q Ht) D Hr^H) = ln(1 + Nr A^2 |ht^H g|^2)."""
    scn = _single_link_scenario([0.8], power=3.0, nt=4, nr=3, aod=[0.4], aoa=[-0.2])
    ht = scn.link(0, 0).ht[:, 0]
    beams = make_beams([np.sqrt(3.0) * ht[:, None]], n_cells=1)
    assert massive_ewsr(scn, beams) == pytest.approx(np.log1p(3 * 0.64 * 3.0))


def test_single_trial_matches_sample_realization(two_cell, rng):
    scn, _ = two_cell
    beams = _random_beams(scn, rng)
    estimate = monte_carlo_ewsr(scn, beams, trials=1, seed=5)
    h = sample_realization(scn, np.random.default_rng([5, 0]))
    assert estimate.mean == pytest.approx(wsr(scn, h, beams), rel=1e-10)
    assert estimate.stderr == 0.0


def test_monte_carlo_is_seeded(two_cell, rng):
    scn, _ = two_cell
    beams = _random_beams(scn, rng)
    first = monte_carlo_ewsr(scn, beams, trials=300, seed=9)
    again = monte_carlo_ewsr(scn, beams, trials=300, seed=9)
    assert first.mean == again.mean and first.stderr == again.stderr
    assert first.stderr > 0


def test_monte_carlo_rejects_zero_trials(two_cell, rng):
    scn, _ = two_cell
    with pytest.raises(ValidationException):
        monte_carlo_ewsr(scn, _random_beams(scn, rng), trials=0, seed=0)


def test_euler_mascheroni_gap():
    """64 equal paths make the scalar channel nearly Rayleigh; the large-array limit
    then overshoots the true expected rate by about Euler's constant at high SNR."""
    scn = _single_link_scenario([1.0 / 8.0] * 64, power=1000.0, aod=np.linspace(-1, 1, 64), aoa=np.linspace(-1, 1, 64))
    beams = make_beams([np.array([[np.sqrt(1000.0)]])], n_cells=1)
    limit = massive_ewsr(scn, beams)
    assert limit == pytest.approx(np.log(1001.0))
    estimate = monte_carlo_ewsr(scn, beams, trials=200_000, seed=1)
    gap = limit - estimate.mean
    assert 0.50 <= gap <= 0.62
    assert abs(gap - EULER_GAMMA) < 0.05


# --- PROPERTIES ---

def test_rates_ignore_a_unitary_rotation_of_the_streams(rng):
    scn = random_scenario(2, 2, 3, nt=3, nr=3, power=5.0, rng=rng, streams=2)
    h = sample_realization(scn, rng)
    beams = _random_beams(scn, rng)
    rotations = [np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
                 for _ in range(scn.n_users)]
    rotated = make_beams([g @ q for g, q in zip(beams.beams, rotations)], n_cells=2)
    assert wsr(scn, h, rotated) == pytest.approx(wsr(scn, h, beams), rel=1e-10)
    assert massive_ewsr(scn, rotated) == pytest.approx(massive_ewsr(scn, beams), rel=1e-10)


def test_single_path_link_has_no_fading():
    """One user and one path: every phase draw gives the same rate."""
    scn = _single_link_scenario([0.9], power=2.0, nt=3, nr=2, aod=[0.3], aoa=[-0.4])
    g = np.ones((3, 1)) * np.sqrt(2.0 / 3.0)
    beams = make_beams([g], n_cells=1)
    estimate = monte_carlo_ewsr(scn, beams, trials=500, seed=4)
    assert estimate.stderr <= 1e-12
    assert estimate.mean == pytest.approx(massive_ewsr(scn, beams), rel=1e-10)


def test_mmse_receiver_minimizes_the_mse(two_cell, rng):
    scn, h = two_cell
    beams = _random_beams(scn, rng)
    for k in range(scn.n_users):
        f = mmse_rx(scn, h, beams, k)
        best = np.trace(mse_matrix(scn, h, beams, k, f)).real
        for scale in (1e-3, 1e-1, 1.0):
            other = f + scale * np.linalg.norm(f) * (rng.standard_normal(f.shape) + 1j * rng.standard_normal(f.shape))
            assert np.trace(mse_matrix(scn, h, beams, k, other)).real >= best - 1e-12


def test_pathwise_covariances_are_the_phase_average(rng):
    scn = random_scenario(2, 2, 3, nt=4, nr=2, power=10.0, rng=rng)
    beams = _random_beams(scn, rng)
    draws = np.array([rx_covariances(scn, sample_realization(scn, rng), beams).r for _ in range(5000)])
    mean = draws.mean(axis=0)
    stderr = draws.std(axis=0) / np.sqrt(draws.shape[0])
    closed = np.array(pathwise_rx_covariances(scn, beams).r)
    assert np.all(np.abs(mean - closed) <= 5 * stderr + 1e-9)


def test_massive_rate_bounds_the_expected_rate_for_one_user(rng):
    """Without interference ln det is concave in the covariance, so the limit sits above the average."""
    for _ in range(5):
        scn = random_scenario(1, 1, 4, nt=4, nr=2, power=10.0, rng=rng, streams=2)
        beams = _random_beams(scn, rng, fill=1.0)
        estimate = monte_carlo_ewsr(scn, beams, trials=2000, seed=6)
        assert massive_ewsr(scn, beams) >= estimate.mean - 3 * estimate.stderr
