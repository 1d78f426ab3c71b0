"""Systems, state grids, drift datasets, simulation, and the CSV format."""
import numpy as np
import pytest

from genhjb.dynamics import (StateGridSpec, accumulated_cost,
                             dataset_from_states, drift_under_input, flow,
                             generate_dataset, read_dataset,
                             simulate_closed_loop, write_dataset)
from genhjb.errors import ConfigError, DivergenceError
from genhjb.penalty import symmetric_box_penalty
from genhjb.systems import (cartpole_intrinsic_system, cartpole_system,
                            linear_1d_system, linear_2d_system, make_benchmark,
                            pendulum_intrinsic_system, pendulum_system)


def test_drift_under_input_hand_examples():
    sys_ = linear_1d_system()
    assert drift_under_input(sys_, [2.0], [0.0]) == pytest.approx([2.0])
    assert drift_under_input(sys_, [2.0], [-3.0]) == pytest.approx([-1.0])


def test_pendulum_upright_equilibrium():
    sys_ = pendulum_system()
    assert drift_under_input(sys_, [1.0, 0.0, 0.0], [0.0]) == pytest.approx(
        [0.0, 0.0, 0.0])


def test_pendulum_torque_scale():
    # J = I + m lc^2 = 0.3342, so unit torque adds 1/J to the spin rate
    sys_ = pendulum_system()
    d0 = drift_under_input(sys_, [1.0, 0.0, 0.0], [0.0])
    d1 = drift_under_input(sys_, [1.0, 0.0, 0.0], [1.0])
    assert d1[2] - d0[2] == pytest.approx(1.0 / 0.3342, rel=1e-12)


def test_embedded_and_intrinsic_pendulum_agree():
    sysE = pendulum_system()
    sysI = pendulum_intrinsic_system()
    rng = np.random.default_rng(0)
    for _ in range(50):
        th, w = rng.uniform(-np.pi, np.pi), rng.uniform(-8, 8)
        u = rng.uniform(-1.5, 1.5, size=1)
        dE = drift_under_input(sysE, [np.cos(th), np.sin(th), w], u)
        dI = drift_under_input(sysI, [th, w], u)
        assert dE[2] == pytest.approx(dI[1], rel=1e-12)
        # chain rule on the embedding: d/dt cos = -sin * w
        assert dE[0] == pytest.approx(-np.sin(th) * w, rel=1e-12, abs=1e-15)
        assert dE[1] == pytest.approx(np.cos(th) * w, rel=1e-12, abs=1e-15)


def test_embedded_and_intrinsic_cartpole_agree():
    sysE = cartpole_system()
    sysI = cartpole_intrinsic_system()
    rng = np.random.default_rng(1)
    for _ in range(50):
        p, v, th, w = rng.uniform(-2, 2, size=4) * [1.0, 1.5, 1.5, 4.0]
        u = rng.uniform(-7, 7, size=1)
        dE = drift_under_input(sysE, [p, v, np.cos(th), np.sin(th), w], u)
        dI = drift_under_input(sysI, [p, v, th, w], u)
        assert dE[1] == pytest.approx(dI[1], rel=1e-12)
        assert dE[4] == pytest.approx(dI[3], rel=1e-12)


def test_grid_points_and_embedding():
    grid = StateGridSpec(bounds=((-1.0, 1.0), (0.0, 2.0)), counts=(3, 2))
    pts = grid.grid_points()
    assert pts.shape == (6, 2)
    np.testing.assert_allclose(pts[0], [-1.0, 0.0])
    np.testing.assert_allclose(pts[-1], [1.0, 2.0])

    ang = StateGridSpec(bounds=((-np.pi, np.pi), (-1.0, 1.0)), counts=(5, 3),
                        angle_dims=(0,))
    assert ang.n_intrinsic == 2 and ang.n_x == 3
    states = ang.states()
    assert states.shape == (15, 3)
    np.testing.assert_allclose(states[:, 0]**2 + states[:, 1]**2, 1.0, atol=1e-14)
    np.testing.assert_allclose(ang.embed_point([0.0, 0.5]), [1.0, 0.0, 0.5])


def test_grid_validation():
    with pytest.raises(ValueError):
        StateGridSpec(bounds=((0.0, -1.0),), counts=(3,))
    with pytest.raises(ValueError):
        StateGridSpec(bounds=((0.0, 1.0),), counts=(0,))
    with pytest.raises(ValueError):
        StateGridSpec(bounds=((0.0, 1.0),), counts=(3, 3))
    with pytest.raises(ValueError):
        StateGridSpec(bounds=((0.0, 1.0),), counts=(3,), angle_dims=(1,))


def test_sample_states_latin_hypercube():
    grid = StateGridSpec(bounds=((-2.0, 2.0), (-np.pi, np.pi), (0.0, 4.0)),
                         counts=(5, 5, 5), angle_dims=(1,))
    S = grid.sample_states(128, seed=3)
    assert S.shape == (128, 4)
    # angle pair stays on the circle, other axes stay inside their bounds
    np.testing.assert_allclose(S[:, 1]**2 + S[:, 2]**2, 1.0, atol=1e-14)
    assert S[:, 0].min() >= -2.0 and S[:, 0].max() <= 2.0
    assert S[:, 3].min() >= 0.0 and S[:, 3].max() <= 4.0
    # one point per stratum along each intrinsic axis
    strata = np.floor((S[:, 0] + 2.0) / 4.0 * 128).astype(int)
    assert len(set(np.clip(strata, 0, 127))) == 128
    np.testing.assert_allclose(grid.sample_states(128, seed=3), S)


def test_generate_dataset_hand_example():
    sys_ = linear_1d_system()
    grid = StateGridSpec(bounds=((-1.0, 1.0),), counts=(3,))
    ds = generate_dataset(sys_, grid, lambda x: float(x[0]) ** 2)
    np.testing.assert_allclose(ds.X[:, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(ds.drift_labels[0][:, 0], [-1.0, 0.0, 1.0])
    np.testing.assert_allclose(ds.drift_labels[1][:, 0], [0.0, 1.0, 2.0])
    np.testing.assert_allclose(ds.q, [1.0, 0.0, 1.0])
    assert ds.n_points == 3 and ds.n_u == 1 and ds.n_x == 1


def test_single_point_dataset():
    sys_ = linear_1d_system()
    grid = StateGridSpec(bounds=((0.5, 0.5),), counts=(1,))
    ds = generate_dataset(sys_, grid, lambda x: 5.0)
    assert ds.n_points == 1
    np.testing.assert_allclose(ds.q, [5.0])


def test_generate_dataset_rejects_mismatched_grid():
    sys_ = linear_2d_system()
    grid = StateGridSpec(bounds=((-1.0, 1.0),), counts=(3,))
    with pytest.raises(ValueError):
        generate_dataset(sys_, grid, lambda x: 0.0)
    with pytest.raises(ConfigError):
        generate_dataset(sys_, StateGridSpec(bounds=((-1.0, 1.0), (-1.0, 1.0)),
                                             counts=(2, 2)),
                         lambda x: 0.0, label_mode="nope")


def test_channel_differences_recover_input_map_columns():
    benches = [make_benchmark(n) for n in
               ("linear-1d", "linear-2d", "pendulum", "cartpole")]
    for bench in benches:
        X = bench.grid.states()[::97]
        ds = dataset_from_states(bench.system, X, bench.stage_cost)
        for j in range(bench.system.n_u):
            cols = np.stack([bench.system.input_map(x)[:, j] for x in X])
            np.testing.assert_allclose(ds.drift_labels[j + 1] - ds.drift_labels[0],
                                       cols, rtol=1e-12, atol=1e-13)


def test_fd_labels_second_order_on_pendulum():
    # central differences of the noiseless flow: halving h divides the error
    # by about 4
    sys_ = pendulum_system()
    th = 2.0
    X = np.array([[np.cos(th), np.sin(th), 1.3]])
    exact = dataset_from_states(sys_, X, lambda x: 0.0)
    errs = []
    for h in (1e-2, 5e-3):
        fd = dataset_from_states(sys_, X, lambda x: 0.0,
                                 label_mode="finite-difference", fd_step=h)
        errs.append(np.linalg.norm(fd.drift_labels - exact.drift_labels))
    ratio = errs[0] / errs[1]
    assert 3.5 <= ratio <= 4.5


def test_fd_labels_close_to_analytic():
    sys_ = linear_2d_system()
    grid = StateGridSpec(bounds=((-1.0, 1.0), (-1.0, 1.0)), counts=(3, 3))
    an = generate_dataset(sys_, grid, lambda x: 0.0)
    fd = generate_dataset(sys_, grid, lambda x: 0.0,
                          label_mode="finite-difference", fd_step=1e-4)
    np.testing.assert_allclose(fd.drift_labels, an.drift_labels, atol=1e-9)


def test_simulation_hand_example_and_determinism():
    sys_ = linear_1d_system(epsilon=0.0)
    states, inputs = simulate_closed_loop(sys_, lambda x: np.zeros(1),
                                          [1.0], dt=0.1, steps=1, noise=False)
    assert states[1, 0] == pytest.approx(1.1, rel=1e-15)
    assert inputs.shape == (1, 1)

    noisy = linear_1d_system(epsilon=0.05)
    s1, _ = simulate_closed_loop(noisy, lambda x: np.zeros(1), [1.0],
                                 dt=0.01, steps=100, seed=42, noise=True)
    s2, _ = simulate_closed_loop(noisy, lambda x: np.zeros(1), [1.0],
                                 dt=0.01, steps=100, seed=42, noise=True)
    np.testing.assert_array_equal(s1, s2)
    s3, _ = simulate_closed_loop(noisy, lambda x: np.zeros(1), [1.0],
                                 dt=0.01, steps=100, seed=43, noise=True)
    assert not np.array_equal(s1, s3)


def test_constant_trajectory_without_drift_or_noise():
    sys_ = linear_1d_system(a=0.0, epsilon=0.0)
    states, _ = simulate_closed_loop(sys_, lambda x: np.zeros(1), [0.7],
                                     dt=0.1, steps=20, noise=False)
    np.testing.assert_allclose(states[:, 0], 0.7)


def test_simulation_matches_linear_closed_form():
    # global Euler error on dx = x dt is O(dt): about 0.013 at dt = 0.01 and
    # halving with dt
    sys_ = linear_1d_system(epsilon=0.0)
    errs = []
    for dt in (1e-2, 5e-3):
        steps = int(round(1.0 / dt))
        states, _ = simulate_closed_loop(sys_, lambda x: np.zeros(1), [1.0],
                                         dt=dt, steps=steps, noise=False)
        errs.append(abs(states[-1, 0] - np.e))
    assert errs[0] < 0.02
    assert 1.5 <= errs[0] / errs[1] <= 2.5


def test_simulation_clips_inputs_to_box():
    sys_ = linear_1d_system(u_max=0.5, epsilon=0.0)
    _, inputs = simulate_closed_loop(sys_, lambda x: np.array([10.0]), [0.0],
                                     dt=0.01, steps=10, noise=False)
    np.testing.assert_allclose(inputs, 0.5)


def test_zero_order_hold_interval():
    sys_ = linear_1d_system(epsilon=0.0)
    calls = []
    def policy(x):
        calls.append(float(x[0]))
        return np.zeros(1)
    simulate_closed_loop(sys_, policy, [1.0], dt=0.01, steps=10, noise=False,
                         control_interval=5)
    assert len(calls) == 2


def test_simulation_divergence_error():
    sys_ = linear_1d_system(a=100.0, epsilon=0.0)
    with pytest.raises(DivergenceError) as exc:
        simulate_closed_loop(sys_, lambda x: np.zeros(1), [1.0], dt=0.1,
                             steps=500, noise=False, blowup_norm=1e3)
    assert exc.value.step is not None


def test_rk4_flow_preserves_circle_constraint():
    # the noiseless deterministic integrator holds cos^2 + sin^2 = 1 to well
    # below 1e-6 per unit time at millisecond substeps
    sys_ = pendulum_system()
    x = np.array([np.cos(0.3), np.sin(0.3), 0.0])
    worst = 0.0
    for _ in range(1000):
        x = flow(sys_, x, [0.0], 1e-3)
        worst = max(worst, abs(x[0]**2 + x[1]**2 - 1.0))
    assert worst <= 1e-6


def test_euler_circle_drift_is_first_order():
    # Euler on the embedded state leaks off the circle at O(dt) per unit
    # time; this is why rollouts integrate the intrinsic coordinates
    sys_ = pendulum_system(epsilon=0.0)
    drifts = []
    for dt in (1e-3, 5e-4):
        states, _ = simulate_closed_loop(sys_, lambda x: np.zeros(1),
                                         [np.cos(0.3), np.sin(0.3), 0.0],
                                         dt=dt, steps=int(round(1.0 / dt)),
                                         noise=False)
        drifts.append(np.abs(states[:, 0]**2 + states[:, 1]**2 - 1.0).max())
    assert drifts[0] > 1e-3          # far from exact
    assert 1.5 <= drifts[0] / drifts[1] <= 2.5


def test_accumulated_cost_hand_examples():
    pen = symmetric_box_penalty([0.5], 5.0)
    states = np.array([[0.0], [1.0]])
    inputs = np.array([[2.0]])
    got = accumulated_cost(states, inputs, lambda x: 1.0, pen, dt=0.1)
    assert got == pytest.approx(0.3, rel=1e-15)
    assert accumulated_cost(states, inputs, lambda x: 1.0, pen, dt=0.2) \
        == pytest.approx(0.6, rel=1e-15)
    assert accumulated_cost(np.zeros((3, 1)), np.zeros((2, 1)),
                            lambda x: 0.0, pen, dt=0.1) == 0.0


def test_dataset_csv_roundtrip_byte_stable(tmp_path):
    bench = make_benchmark("pendulum")
    X = bench.grid.states()[::200]
    ds = dataset_from_states(bench.system, X, bench.stage_cost)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_dataset(p1, ds, config_hash="cafe")
    back, h = read_dataset(p1)
    assert h == "cafe"
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.drift_labels, ds.drift_labels)
    np.testing.assert_array_equal(back.q, ds.q)
    write_dataset(p2, back, config_hash="cafe")
    assert p1.read_bytes() == p2.read_bytes()


def test_read_dataset_rejects_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x_1,q\n1.0\n")
    with pytest.raises(ConfigError):
        read_dataset(p)
    p.write_text("nope\n")
    with pytest.raises(ConfigError):
        read_dataset(p)
