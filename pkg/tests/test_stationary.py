import numpy as np
import pytest

from roughcm import (ControlledPath, Grid, NonStableOrderError, derive_system,
                     lift_brownian, load_system, ou_stationary,
                     propagate_zeros, solve_hierarchy, stationarity_check,
                     stationary_affine)


@pytest.fixture(scope="module")
def window():
    return lift_brownian(7, Grid(-12.0, 0.0, 12 * 64))


@pytest.fixture(scope="module")
def cs_linear():
    return propagate_zeros(derive_system(
        load_system("examples/chekroun_linear.json")))


@pytest.fixture(scope="module")
def cs_nonlinear():
    return propagate_zeros(derive_system(
        load_system("examples/chekroun_nonlinear.json")))


class TestOuStationary:
    def test_variance(self):
        vals = [ou_stationary(lift_brownian(s, Grid(-6.0, 0.0, 6 * 32))).path.Y[-1, 0]
                for s in range(800)]
        assert abs(np.var(vals) - 0.5) < 0.08

    def test_short_horizon_rejected(self):
        with pytest.raises(ValueError):
            ou_stationary(lift_brownian(0, Grid(-2.0, 0.0, 64)))

    def test_derivative_is_identity(self, window):
        st = ou_stationary(window)
        assert np.allclose(st.path.Yp, np.eye(1))
        assert st.tail_bound < 1e-4


class TestStationaryAffine:
    def test_quasistatic_constant_forcing_is_exact(self, window):
        f = np.full(window.n + 1, 3.0)
        st = stationary_affine(-2.0, f, None, window, init="quasistatic")
        assert np.max(np.abs(st.path.Y[:, 0] - 1.5)) < 1e-12

    def test_zero_init_transient(self, window):
        f = np.ones(window.n + 1)
        st = stationary_affine(-1.0, f, None, window, init="zero")
        T = 12.0
        ref = 1 - np.exp(-(window.grid.nodes + T))
        assert np.max(np.abs(st.path.Y[:, 0] - ref)) < 1e-12

    def test_unstable_rejected(self, window):
        with pytest.raises(NonStableOrderError):
            stationary_affine(0.5, None, None, window)

    def test_diffusion_derivative(self, window):
        g = ControlledPath.constant(window, 1.0)
        st = stationary_affine(-1.0, None, g, window)
        assert np.allclose(st.path.Yp[:, 0, 0], 1.0)


class TestHierarchy:
    def test_deterministic_linear_example(self, window, cs_linear):
        res = solve_hierarchy(cs_linear, window,
                              params={"lam": 0.0, "kappa": -1.0, "sigma": 0.0})
        assert res.alpha0[1] == 0.0 and res.alpha0[3] == 0.0
        assert res.alpha0[2] == pytest.approx(-1.0, abs=1e-12)
        assert res.alpha0[4] == pytest.approx(-2.0, abs=1e-12)

    def test_nonlinear_example_tracks_ou(self, window, cs_nonlinear):
        res = solve_hierarchy(cs_nonlinear, window)
        z0 = ou_stationary(window).path.Y[-1, 0]
        assert res.alpha0[2] == pytest.approx(1.0, abs=1e-12)
        assert res.alpha0[4] == pytest.approx(-4.0, abs=1e-12)
        assert res.alpha0[5] == pytest.approx(-2.0 * z0, abs=1e-12)
        assert res.alpha0[6] == pytest.approx(40.0 + z0, abs=1e-10)

    def test_block_norms_reported(self, window, cs_nonlinear):
        res = solve_hierarchy(cs_nonlinear, window)
        assert set(res.block_norms) == {2, 4, 5, 6}
        assert all(v > 0 for v in res.block_norms.values())

    def test_zero_orders_are_zero_paths(self, window, cs_linear):
        res = solve_hierarchy(cs_linear, window,
                              params={"lam": 0.0, "kappa": -1.0, "sigma": 0.0})
        assert np.all(res.alphas[1].Y == 0.0)
        assert np.all(res.alphas[3].Y == 0.0)

    def test_resonant_order_rejected(self, window):
        # Ac > 0 makes As - i*Ac cross zero for no i here, so force it:
        # As = -2, Ac = -1 gives A_alpha[2] = 0 at order 2
        doc = {
            "gamma": 0.45, "q": 2, "noise_dim": 1, "Ac": -1, "As": -2,
            "Fc": [], "Fs": [{"i": 2, "j": 0, "c": 1}],
            "Gc": [[]], "Gs": [[]], "params": {}, "override": False,
        }
        cs = propagate_zeros(derive_system(load_system(doc)))
        with pytest.raises(NonStableOrderError):
            solve_hierarchy(cs, window)


class TestStationarityCheck:
    def test_ou_defect_matches_recursion(self, window):
        st = ou_stationary(window)
        g = ControlledPath.constant(window, 1.0)
        defect = stationarity_check(st.path, -1.0, None, g, window, horizon=6.0)
        assert defect < 1e-12

    def test_detects_wrong_path(self, window):
        wrong = ControlledPath.constant(window, 1.0)
        g = ControlledPath.constant(window, 1.0)
        defect = stationarity_check(wrong, -1.0, None, g, window, horizon=6.0)
        assert defect > 1e-3
