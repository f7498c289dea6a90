import numpy as np
import pytest
from numpy.testing import assert_allclose

from bearingloc import simulator
from bearingloc.controller import information_matrix
from bearingloc.errors import CoincidentPoints, ConfigError, DegenerateGeometry, Singular
from bearingloc.estimator import localize
from bearingloc.sensing import measure_all
from bearingloc.simulator import (
    SCENARIOS,
    BatchFailed,
    EpisodeError,
    Scenario,
    closeness,
    condition_number,
    episode_rng,
    initial_state,
    monte_carlo,
    run_episode,
    step,
    with_overrides,
)

S_A = SCENARIOS["S_a"]


def quiet(scenario, factor=1e-4):
    """Same closed-loop dynamics with the noise scaled down.

    The reward scales as sigma^-6, so scaling the gain by factor^6 leaves the
    commanded velocities unchanged.
    """
    return with_overrides(scenario, sigma=scenario.sigma * factor, gain=scenario.gain * factor**6)


def test_scenario_validation():
    with pytest.raises(ConfigError, match="n >= 2"):
        Scenario([0, 0, 0], [[1, 0, 0]])
    with pytest.raises(ConfigError):
        Scenario([0, 0, 0], [[1, 0, 0], [0, 0, 0]])
    with pytest.raises(ConfigError):
        Scenario([0, 0, 0], [[1, 0, 0], [0, 1, 0]], sample_period=0)
    with pytest.raises(ConfigError):
        Scenario([0, 0, 0], [[1, 0, 0], [0, 1, 0]], trials=0)
    assert Scenario([0, 0, 0], [[1, 0, 0], [0, 1, 0]], duration=15, sample_period=0.1).steps == 151


def test_closeness_paper_scenarios_a_b():
    assert closeness(S_A.seeker_init, S_A.target) == pytest.approx(0.16, abs=0.01)
    sb = SCENARIOS["S_b"]
    assert closeness(sb.seeker_init, sb.target) == pytest.approx(1.05, abs=0.01)


def test_closeness_scenario_c_hand_value():
    # pairs: two right angles and one with sin = 15/sqrt(234)
    expected = (np.pi + np.arcsin(15 / np.sqrt(234))) / 3
    sc = SCENARIOS["S_c"]
    assert closeness(sc.seeker_init, sc.target) == pytest.approx(expected, abs=1e-12)


def test_closeness_degenerate_cases():
    assert closeness([[-1, 0, 0], [-5, 0, 0]], [0, 0, 0]) == 0
    with pytest.raises(CoincidentPoints):
        closeness([[0, 0, 0], [1, 0, 0]], [0, 0, 0])


def test_condition_number():
    assert condition_number(np.eye(3)) == 1
    assert condition_number(np.diag([4.0, 1, 1])) == 4
    with pytest.raises(Singular):
        condition_number(np.diag([1.0, 1, 0]))


def test_condition_number_scenario_b():
    sb = SCENARIOS["S_b"]
    cov = np.linalg.inv(information_matrix(sb.target, sb.seeker_init, sb.noise))
    assert condition_number(cov) == pytest.approx(3, rel=0.10)


def test_step_zero_gain_keeps_positions():
    sc = with_overrides(S_A, gain=0.0)
    state = initial_state(sc)
    rng = episode_rng(1)
    for _ in range(5):
        new, rec = step(state, sc, rng)
        assert np.array_equal(new.seekers, state.seekers)
        assert np.all(rec.velocities == 0)
        state = new
    assert state.time == pytest.approx(0.5)


def test_step_quiet_limit_keeps_distances():
    sc = quiet(S_A)
    state = initial_state(sc)
    rng = episode_rng(0)
    d_prev = np.linalg.norm(state.seekers - sc.target, axis=1)
    for _ in range(30):
        state, rec = step(state, sc, rng)
        d = np.linalg.norm(state.seekers - sc.target, axis=1)
        step_len = np.linalg.norm(rec.velocities, axis=1) * sc.sample_period
        # exact tangential Euler chord: d' = sqrt(d^2 + (T|u|)^2)
        assert_allclose(d, np.sqrt(d_prev**2 + step_len**2), atol=1e-6)
        assert np.all(d >= d_prev - 1e-9)
        d_prev = d


def test_step_uses_warm_start_after_first():
    state = initial_state(S_A)
    rng = episode_rng(0)
    state, rec = step(state, S_A, rng)
    assert state.current_estimate is rec.estimate
    assert state.k == 1 and state.time == pytest.approx(0.1)


def test_step_error_carries_time(monkeypatch):
    def boom(*a, **k):
        raise DegenerateGeometry("forced")

    monkeypatch.setattr(simulator, "localize", boom)
    with pytest.raises(EpisodeError, match="t=0s"):
        step(initial_state(S_A), S_A, episode_rng(0))


def test_episode_length_and_zero_duration():
    assert len(run_episode(with_overrides(S_A, duration=0.0))) == 1
    recs = run_episode(with_overrides(S_A, duration=1.0))
    assert len(recs) == 11
    assert [r.time for r in recs] == pytest.approx([0.1 * k for k in range(11)])


@pytest.fixture(scope="module")
def s_a_run():
    sc = with_overrides(S_A, duration=20.0)
    return sc, run_episode(sc)


@pytest.mark.slow
def test_episode_reward_rises(s_a_run):
    sc, recs = s_a_run
    rt = np.array([r.reward_true for r in recs])
    assert rt[150] > 20e3
    # monotone apart from estimate jitter
    assert np.all(np.diff(rt) >= -1e-3 * rt[1:])
    assert recs[150].reward_est > 20e3


@pytest.mark.slow
def test_episode_condition_number_at_20s(s_a_run):
    _, recs = s_a_run
    assert recs[-1].condition_number <= 1.1


@pytest.mark.slow
def test_episode_condition_number_at_15s(s_a_run):
    _, recs = s_a_run
    assert recs[150].condition_number <= 1.1


@pytest.mark.slow
def test_episode_distance_non_decreasing_per_step(s_a_run):
    _, recs = s_a_run
    for prev, nxt in zip(recs, recs[1:]):
        p_est = prev.estimate.position
        before = np.linalg.norm(prev.seekers - p_est, axis=1)
        after = np.linalg.norm(nxt.seekers - p_est, axis=1)
        assert np.all(after >= before - 1e-6)


@pytest.mark.slow
def test_episode_distance_to_final_estimate(s_a_run):
    sc, recs = s_a_run
    d0 = np.linalg.norm(sc.seeker_init - sc.target, axis=1)
    d_final = np.linalg.norm(recs[-1].seekers - recs[-1].estimate.position, axis=1)
    assert np.all(d_final >= d0 - 1e-6)


@pytest.mark.slow
def test_episode_distance_to_final_estimate_quiet():
    sc = quiet(with_overrides(S_A, duration=15.0))
    recs = run_episode(sc)
    d0 = np.linalg.norm(sc.seeker_init - sc.target, axis=1)
    d_final = np.linalg.norm(recs[-1].seekers - recs[-1].estimate.position, axis=1)
    assert np.all(d_final >= d0 - 1e-6)


@pytest.mark.slow
def test_episode_agents_spread_out(s_a_run):
    sc, recs = s_a_run
    theta = np.array([closeness(r.seekers, sc.target) for r in recs])
    assert theta[-1] > 1.4
    assert np.all(np.diff(theta) >= -1e-3)


@pytest.mark.slow
def test_warm_start_not_worse_than_cold(s_a_run):
    sc, _ = s_a_run
    state = initial_state(sc)
    rng = episode_rng(sc.seed)
    wins = total = 0
    for k in range(sc.steps):
        if state.current_estimate is not None:
            m = measure_all(state.seekers, sc.target, sc.noise, np.random.default_rng([99, k]))
            warm = localize(m, sc.noise, previous=state.current_estimate)
            cold = localize(m, sc.noise)
            wins += warm.iterations <= cold.iterations
            total += 1
        state, _ = step(state, sc, rng)
    assert wins >= 0.9 * total, f"warm start no worse in only {wins}/{total} steps"


def test_episode_deterministic():
    sc = with_overrides(S_A, duration=2.0)
    a, b = run_episode(sc), run_episode(sc)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.seekers, rb.seekers)
        assert np.array_equal(ra.estimate.position, rb.estimate.position)


def test_monte_carlo_small_batch():
    s = monte_carlo(with_overrides(S_A, trials=2))
    assert sum(s.iteration_histogram.values()) == 2
    assert_allclose(s.empirical_cov, s.empirical_cov.T)
    assert np.all(np.linalg.eigvalsh(s.empirical_cov) >= -1e-15)


def test_monte_carlo_rejects_single_trial():
    with pytest.raises(ConfigError):
        monte_carlo(with_overrides(S_A, trials=1))


def test_monte_carlo_deterministic_and_thread_independent():
    sc = with_overrides(SCENARIOS["S_b"], trials=60, seed=42)
    a, b, c = monte_carlo(sc), monte_carlo(sc), monte_carlo(sc, threads=4)
    for other in (b, c):
        assert np.array_equal(a.empirical_mean, other.empirical_mean)
        assert np.array_equal(a.empirical_cov, other.empirical_cov)
        assert a.iteration_histogram == other.iteration_histogram
    assert not np.array_equal(a.empirical_mean, monte_carlo(with_overrides(sc, seed=43)).empirical_mean)


def test_monte_carlo_empirical_cov_formula():
    sc = with_overrides(SCENARIOS["S_c"], trials=25)
    s = monte_carlo(sc)
    pos = np.array([r.estimate.position for _, r in s.trials])
    assert_allclose(s.empirical_mean, pos.mean(axis=0), rtol=1e-14)
    assert_allclose(s.empirical_cov, np.cov(pos.T, ddof=1), rtol=1e-12)


def test_monte_carlo_tolerates_few_failures(monkeypatch):
    real = simulator.run_trial

    def flaky(scenario, k):
        if k == 3:
            raise DegenerateGeometry("forced")
        return real(scenario, k)

    monkeypatch.setattr(simulator, "run_trial", flaky)
    s = monte_carlo(with_overrides(S_A, trials=200))
    assert list(s.failures) == [3]
    assert sum(s.iteration_histogram.values()) == 199


def test_monte_carlo_fails_batch_above_one_percent(monkeypatch):
    real = simulator.run_trial

    def flaky(scenario, k):
        if k % 50 == 0:
            raise DegenerateGeometry("forced")
        return real(scenario, k)

    monkeypatch.setattr(simulator, "run_trial", flaky)
    with pytest.raises(BatchFailed) as info:
        monte_carlo(with_overrides(S_A, trials=100))
    assert sorted(info.value.failures) == [0, 50]


@pytest.mark.slow
def test_monte_carlo_scenario_a_bias():
    s = monte_carlo(S_A)
    assert 0.05 <= s.empirical_mean[0] <= 0.20
    assert max(s.iteration_histogram) <= 4


@pytest.mark.slow
def test_monte_carlo_scenario_c_unbiased():
    s = monte_carlo(SCENARIOS["S_c"])
    assert np.all(np.abs(s.empirical_mean) <= 0.05)
