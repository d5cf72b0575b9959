"""Solver tests: operator exactness, step contracts, conservation, ordering,
and the discrete weak-form residual semantics."""

import math

import numpy as np
import pytest

from stefanlab import presets, solver
from stefanlab.graphs import RegularizedGraph
from stefanlab.solver import (Boundary, ConstantInSpace, DtPolicy, Grid,
                              InitialData, Scenario, ShapeMismatchError,
                              SpaceTimeBump, VectorField, build_initial,
                              conservation_defect, dissipation_profile,
                              enthalpy_totals, implicit_step,
                              p_laplacian_apply, run_simulation,
                              weak_form_residual)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(extents=(1.0,), nodes=(2,))
        with pytest.raises(ValueError):
            Grid(extents=(1.0, 2.0), nodes=(11, 11))  # non-uniform spacing
        with pytest.raises(ValueError):
            Grid(extents=(1.0, 1.0, 1.0), nodes=(5, 5, 5))

    def test_volumes_sum_to_domain(self):
        g1 = Grid(extents=(2.0,), nodes=(41,))
        assert np.sum(g1.volume_weights()) == pytest.approx(2.0, rel=1e-13)
        g2 = Grid(extents=(1.0, 1.0), nodes=(17, 17))
        assert np.sum(g2.volume_weights()) == pytest.approx(1.0, rel=1e-13)

    def test_ball_mask_counts(self):
        g = Grid(extents=(1.0,), nodes=(11,))
        assert int(g.ball_mask((0.5,), 0.25).sum()) == 5  # nodes at 0.3 ... 0.7
        assert int(g.ball_mask((0.5,), 0.3).sum()) == 7   # boundary nodes included


class TestVectorField:
    def test_certified_bounds_by_sampling(self):
        vf = VectorField(kind="anisotropic", weights=(0.5, 2.0))
        p = 3.0
        lam = vf.certified_lambda(2, p)
        rng = np.random.default_rng(11)
        xi = rng.normal(size=(500, 2))
        w = np.array(vf.axis_weights(2))
        a_val = w * np.abs(xi) ** (p - 2.0) * xi
        norm_xi = np.linalg.norm(xi, axis=1)
        assert np.all(np.linalg.norm(a_val, axis=1) <= lam * norm_xi ** (p - 1) * (1 + 1e-12))
        assert np.all(np.sum(a_val * xi, axis=1) >= norm_xi**p / lam * (1 - 1e-12))


class TestPLaplacianApply:
    def test_linear_gives_zero(self):
        g = Grid(extents=(1.0,), nodes=(11,))
        x = g.axes()[0]
        div = p_laplacian_apply(x, 3.0, g)
        assert np.max(np.abs(div[1:-1])) < 1e-13

    def test_p2_quadratic_exact(self):
        g = Grid(extents=(1.0,), nodes=(11,))
        x = g.axes()[0]
        div = p_laplacian_apply(x**2, 2.0, g)
        assert div[1:-1] == pytest.approx(np.full(9, 2.0), abs=1e-12)

    def test_p4_refinement_order(self):
        errs = []
        for n in (21, 41, 81):
            g = Grid(extents=(1.0,), nodes=(n,))
            x = g.axes()[0]
            div = p_laplacian_apply(x**2, 4.0, g)
            errs.append(np.max(np.abs(div[1:-1] - 24.0 * x[1:-1] ** 2)))
        order = math.log2(errs[0] / errs[1])
        assert order >= 1.0
        assert errs[2] < errs[1] < errs[0]

    def test_conservation_identity_zero_flux(self):
        g = Grid(extents=(1.0,), nodes=(13,))
        rng = np.random.default_rng(0)
        u = rng.normal(size=13)
        div = p_laplacian_apply(u, 3.0, g)
        assert abs(np.sum(div * g.volume_weights())) < 1e-12

    def test_conservation_identity_2d(self):
        g = Grid(extents=(1.0, 1.0), nodes=(9, 9))
        rng = np.random.default_rng(1)
        u = rng.normal(size=(9, 9))
        div = p_laplacian_apply(u, 2.5, g)
        assert abs(np.sum(div * g.volume_weights())) < 1e-12

    def test_2d_p2_quadratic(self):
        g = Grid(extents=(1.0, 1.0), nodes=(9, 9))
        X, Y = g.meshgrid()
        div = p_laplacian_apply(X**2 + Y**2, 2.0, g)
        assert div[2:-2, 2:-2] == pytest.approx(np.full((5, 5), 4.0), abs=1e-12)

    def test_shape_mismatch(self):
        g = Grid(extents=(1.0,), nodes=(11,))
        with pytest.raises(ShapeMismatchError):
            p_laplacian_apply(np.zeros(7), 2.0, g)


class TestImplicitStep:
    def test_zero_fixed_point(self):
        sc = presets.twophase_1d(nodes=21)
        u0 = np.zeros(21)
        u1, diag = implicit_step(u0, 1e-3, sc)
        assert np.array_equal(u1, u0)
        assert diag.residual <= diag.tolerance

    def test_constant_steady_state(self):
        sc = presets.constant_preset(nodes=21, value=0.4)
        u0 = build_initial(sc.grid, sc.initial)
        u1, _ = implicit_step(u0, 5e-3, sc)
        assert np.max(np.abs(u1 - u0)) < 1e-12

    def test_per_step_conservation(self):
        sc = presets.twophase_1d(nodes=41)
        u = build_initial(sc.grid, sc.initial)
        vol = sc.grid.volume_weights()
        for _ in range(5):
            e_before = float(np.sum(sc.graph.enthalpy_of_temperature(u) * vol))
            u, _ = implicit_step(u, 5e-4, sc)
            e_after = float(np.sum(sc.graph.enthalpy_of_temperature(u) * vol))
            assert abs(e_after - e_before) <= 1e-10 * (1.0 + abs(e_before))

    def test_bad_dt(self):
        sc = presets.constant_preset()
        u0 = build_initial(sc.grid, sc.initial)
        with pytest.raises(ValueError):
            implicit_step(u0, 0.0, sc)

    def test_nonfinite_input(self):
        sc = presets.constant_preset()
        u0 = build_initial(sc.grid, sc.initial)
        u0[3] = np.nan
        with pytest.raises(solver.NonfiniteValueError):
            implicit_step(u0, 1e-3, sc)

    def test_energy_decrease_recorded(self):
        sc = presets.twophase_1d(nodes=41, t_end=0.005, dt=5e-4)
        traj = run_simulation(sc)
        assert all(d.energy_decreased for d in traj.diagnostics)


class TestRunSimulation:
    def test_zero_horizon(self):
        sc = presets.twophase_1d(nodes=21, t_end=0.0)
        traj = run_simulation(sc)
        assert len(traj.times) == 1 and traj.times[0] == 0.0

    def test_enthalpy_conservation_zero_flux(self):
        sc = presets.twophase_1d(nodes=61, t_end=0.02, dt=5e-4)
        traj = run_simulation(sc)
        assert conservation_defect(traj) <= 1e-10

    def test_step_residuals_recorded(self):
        sc = presets.twophase_1d(nodes=31, t_end=0.005, dt=5e-4)
        traj = run_simulation(sc)
        assert all(d.residual <= d.tolerance for d in traj.diagnostics)

    def test_determinism(self):
        sc = presets.twophase_1d(nodes=41, t_end=0.01, dt=5e-4)
        h1 = run_simulation(sc).trajectory_hash()
        h2 = run_simulation(sc).trajectory_hash()
        assert h1 == h2

    def test_max_principle(self):
        sc = presets.twophase_1d(nodes=41, t_end=0.02, dt=5e-4)
        traj = run_simulation(sc)
        u0 = traj.temps[0]
        lo, hi = float(u0.min()), float(u0.max())
        for u in traj.temps:
            assert float(u.max()) <= hi + 1e-9
            assert float(u.min()) >= lo - 1e-9

    def test_comparison_principle_sample(self):
        rng = np.random.default_rng(5)
        for p in (2.0, 3.0):
            base = rng.uniform(-0.2, 0.2)
            amps = tuple(rng.normal(0, 0.2, size=2))
            scA = presets.twophase_1d(p=p, nodes=31, t_end=0.004, dt=4e-4)
            scA.initial = InitialData.of("fourier", base=base, amps=amps, freqs=(1.0, 2.0))
            scB = presets.twophase_1d(p=p, nodes=31, t_end=0.004, dt=4e-4)
            scB.initial = InitialData.of("fourier", base=base + 0.15, amps=amps,
                                         freqs=(1.0, 2.0))
            ta, tb = run_simulation(scA), run_simulation(scB)
            worst = max(float(np.max(ua - ub)) for ua, ub in zip(ta.temps, tb.temps))
            assert worst <= 1e-9

    def test_dissipation_profile_monotone(self):
        sc = presets.twophase_1d(nodes=41, t_end=0.02, dt=5e-4)
        traj = run_simulation(sc)
        prof = dissipation_profile(traj)
        assert np.all(np.diff(prof) <= 1e-10 * (1.0 + abs(prof[0])))

    def test_dirichlet_pinning(self):
        sc = presets.melting_front_1d(nodes=51, t_end=0.01, dt=1e-3, eps=0.05)
        traj = run_simulation(sc)
        for u in traj.temps:
            assert u[0] == pytest.approx(1.0, abs=1e-14)
            assert u[-1] == pytest.approx(0.0, abs=1e-14)

    def test_intrinsic_dt_policy(self):
        sc = presets.twophase_1d(nodes=21, t_end=0.002)
        sc.dt = DtPolicy(kind="intrinsic", safety=0.5)
        traj = run_simulation(sc)
        assert traj.times[-1] == pytest.approx(0.002, rel=1e-9)
        assert len(traj.times) > 2

    def test_heat_reference_against_refined(self):
        coarse = run_simulation(presets.heat_smooth_1d(nodes=41, dt=1e-3))
        fine = run_simulation(presets.heat_smooth_1d(nodes=161, dt=2.5e-4))
        err = np.max(np.abs(coarse.temps[-1] - fine.temps[-1][::4]))
        assert err < 1e-3

    def test_2d_run_conserves_and_orders(self):
        sc = presets.twophase_2d(p=3.0, nodes=17, dt=1e-3, t_end=0.01)
        traj = run_simulation(sc)
        assert conservation_defect(traj) <= 1e-10
        u0 = traj.temps[0]
        for u in traj.temps:
            assert float(u.max()) <= float(u0.max()) + 1e-9
            assert float(u.min()) >= float(u0.min()) - 1e-9
        assert run_simulation(sc).trajectory_hash() == traj.trajectory_hash()


def neumann_front_factor(hot, jump, cold, latent):
    """Similarity growth rate: bisection on the classical transcendental
    equation balancing the heat fluxes against the latent heat at the front."""
    from scipy.special import erf, erfc

    def f(lam):
        liquid = (hot - jump) * math.exp(-lam * lam) / erf(lam)
        solid = (jump - cold) * math.exp(-lam * lam) / erfc(lam)
        return liquid - solid - latent * lam * math.sqrt(math.pi)

    lo, hi = 1e-8, 1.0
    while f(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def front_position(u, x, level):
    idx = np.nonzero(u >= level)[0]
    i = int(idx[-1])
    if i + 1 >= u.size:
        return float(x[i])
    return float(x[i] + (u[i] - level) / (u[i] - u[i + 1]) * (x[i + 1] - x[i]))


class TestMeltingFront:
    def test_front_tracks_similarity_law(self):
        # eps must stay above the resolvable width 2h at this resolution
        sc = presets.melting_front_1d(nodes=200, t_end=0.15, dt=1e-3, eps=0.012)
        traj = run_simulation(sc)
        lam = neumann_front_factor(1.0, sc.graph.a, 0.0, sc.graph.latent_heat)
        x = traj.grid.axes()[0]
        m = traj.nearest_time_index(0.15)
        s_num = front_position(traj.temps[m], x, sc.graph.a)
        s_exact = 2.0 * lam * math.sqrt(traj.times[m])
        assert abs(s_num - s_exact) / s_exact < 0.03


class TestWeakFormResidual:
    def test_zero_test_function(self):
        traj = run_simulation(presets.twophase_1d(nodes=31, t_end=0.01, dt=1e-3))
        res = weak_form_residual(traj, ConstantInSpace(lambda t: 0.0),
                                 (0.0, traj.times[-1]))
        assert res["residual"] == 0.0

    def test_constant_in_space_reduces_to_conservation(self):
        traj = run_simulation(presets.twophase_1d(nodes=61, t_end=0.02, dt=5e-4))
        res = weak_form_residual(traj, ConstantInSpace(lambda t: 1.0 + 3.0 * t),
                                 (0.0, traj.times[-1]))
        assert abs(res["residual"]) <= 1e-10

    def test_bump_residual_halves_under_refinement(self):
        def residual(nodes, dt):
            tr = run_simulation(presets.twophase_1d(nodes=nodes, t_end=0.02, dt=dt))
            bump = SpaceTimeBump(center=(0.5,), width=0.3, t_center=0.01, t_width=0.012)
            return abs(weak_form_residual(tr, bump, (0.0, tr.times[-1]))["residual"])

        r_base = residual(61, 5e-4)
        r_fine = residual(121, 2.5e-4)
        assert r_fine <= 0.6 * r_base

    def test_lateral_boundary_violation_rejected(self):
        traj = run_simulation(presets.twophase_1d(nodes=31, t_end=0.01, dt=1e-3))
        wide = SpaceTimeBump(center=(0.5,), width=2.0)  # does not vanish on the ring
        with pytest.raises(ValueError):
            weak_form_residual(traj, wide, (0.0, traj.times[-1]),
                               region=((0.2,), (0.8,)))

    def test_interior_region_accepted(self):
        traj = run_simulation(presets.twophase_1d(nodes=61, t_end=0.01, dt=1e-3))
        bump = SpaceTimeBump(center=(0.5,), width=0.2)
        res = weak_form_residual(traj, bump, (0.0, traj.times[-1]),
                                 region=((0.2,), (0.8,)))
        assert math.isfinite(res["residual"])

    def test_window_out_of_bounds(self):
        traj = run_simulation(presets.twophase_1d(nodes=31, t_end=0.01, dt=1e-3))
        with pytest.raises(ValueError):
            weak_form_residual(traj, ConstantInSpace(lambda t: 1.0), (0.0, 1.0))


class TestRescaledWeakForm:
    def test_rescaled_trajectory_satisfies_identity(self):
        from stefanlab.geometry import rescale_solution

        traj = run_simulation(presets.twophase_1d(nodes=61, t_end=0.02, dt=5e-4))
        res_base = weak_form_residual(traj, ConstantInSpace(lambda t: 1.0),
                                      (0.0, traj.times[-1]))
        doubled = rescale_solution(traj, 2.0)
        res_scaled = weak_form_residual(doubled, ConstantInSpace(lambda t: 1.0),
                                        (doubled.times[0], doubled.times[-1]))
        assert abs(res_base["residual"]) <= 1e-10
        assert abs(res_scaled["residual"]) <= 1e-10
