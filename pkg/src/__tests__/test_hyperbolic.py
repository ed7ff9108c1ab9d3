#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Tests for the node trace solve, boundary closure and upwind transport
"""

import math

import numpy as np
import pytest

from src.__tests__.network_factory import bump_state, random_state
from src.services.oracle import dense_node_traces
from src.state.fields import ArcState, NetworkState, build_grids
from src.state.network_spec import ArcSpec, NetworkSpec, TransmissionMatrix
from src.tools.hyperbolic import (
    HyperbolicSolver,
    build_node_system,
    external_boundary_traces,
    gamma1_from_jumps,
    gamma1_from_traces,
    solve_node_traces,
    source_step,
    transport_step,
)
from src.utils.errors import CFLViolation


def node_spec(lam, K, incoming):
    """One node N with arcs a0.. to external points; K given as a full matrix."""
    m = len(lam)
    arcs = tuple(
        ArcSpec(f"a{i}", f"E{i}", "N", 1.0, float(lam[i]), 1.0, 1.0, 1.0, 1.0)
        if incoming[i]
        else ArcSpec(f"a{i}", "N", f"E{i}", 1.0, float(lam[i]), 1.0, 1.0, 1.0, 1.0)
        for i in range(m)
    )
    order = tuple(a.id for a in arcs)
    matrix = TransmissionMatrix("N", order, tuple(tuple(float(x) for x in row) for row in K))
    return NetworkSpec(("N",), tuple(f"E{i}" for i in range(m)), arcs, {"N": matrix}, {"N": matrix})


def two_arc(K):
    return node_spec([1.0, 1.0], [[0.0, K], [K, 0.0]], [True, False])


class TestNodeTraces:
    """Traces from (Lambda + L) u = Lambda c."""

    def test_equal_data_gives_zero_flux(self):
        solution = solve_node_traces(build_node_system(two_arc(3.0), "N"), {"a0": 1.0, "a1": 1.0})
        assert solution.u_trace == pytest.approx({"a0": 1.0, "a1": 1.0}, abs=1e-15)
        assert solution.v_trace == pytest.approx({"a0": 0.0, "a1": 0.0}, abs=1e-15)

    def test_zero_coupling_reflects(self):
        solution = solve_node_traces(build_node_system(two_arc(0.0), "N"), {"a0": 0.7, "a1": -0.2})
        assert solution.u_trace == pytest.approx({"a0": 0.7, "a1": -0.2}, abs=1e-15)
        assert solution.v_trace == pytest.approx({"a0": 0.0, "a1": 0.0}, abs=1e-15)

    def test_hand_solved_two_arc_node(self):
        system = build_node_system(two_arc(1.0), "N")
        solution = solve_node_traces(system, {"a0": 2.0, "a1": 0.0})
        assert solution.u_trace["a0"] == pytest.approx(4 / 3, abs=1e-14)
        assert solution.u_trace["a1"] == pytest.approx(2 / 3, abs=1e-14)
        assert solution.v_trace["a0"] == pytest.approx(2 / 3, abs=1e-14)
        assert solution.v_trace["a1"] == pytest.approx(2 / 3, abs=1e-14)
        assert abs(solution.residual_flux) <= 1e-14
        # -lambda_1 v_1 = K (u_2 - u_1)
        assert -solution.v_trace["a0"] == pytest.approx(solution.u_trace["a1"] - solution.u_trace["a0"], abs=1e-14)

    def test_dissipation_on_hand_solved_node(self):
        system = build_node_system(two_arc(1.0), "N")
        solution = solve_node_traces(system, {"a0": 2.0, "a1": 0.0})
        assert gamma1_from_traces(system, solution) == pytest.approx((2 / 3) ** 2, abs=1e-14)
        assert gamma1_from_jumps(system, solution) == pytest.approx((2 / 3) ** 2, abs=1e-14)

    def test_matches_dense_solve_on_random_nodes(self, rng):
        for _ in range(1000):
            m = int(rng.integers(2, 7))
            lam = rng.uniform(0.1, 5.0, m)
            upper = np.triu(rng.uniform(0.0, 3.0, (m, m)) * (rng.random((m, m)) < 0.7), 1)
            K = upper + upper.T
            incoming = rng.random(m) < 0.5
            spec = node_spec(lam, K, incoming)
            data = {f"a{i}": float(c) for i, c in enumerate(rng.normal(size=m))}

            solution = solve_node_traces(build_node_system(spec, "N"), data)
            u_dense, v_dense = dense_node_traces(spec, "N", data)
            for arc_id in data:
                assert solution.u_trace[arc_id] == pytest.approx(u_dense[arc_id], abs=1e-12)
                assert solution.v_trace[arc_id] == pytest.approx(v_dense[arc_id], abs=1e-12)

    def test_transmission_and_flux_invariants(self, rng):
        for _ in range(200):
            m = int(rng.integers(2, 7))
            lam = rng.uniform(0.1, 5.0, m)
            upper = np.triu(rng.uniform(0.0, 3.0, (m, m)), 1)
            K = upper + upper.T
            incoming = rng.random(m) < 0.5
            system = build_node_system(node_spec(lam, K, incoming), "N")
            solution = solve_node_traces(system, {f"a{i}": float(c) for i, c in enumerate(rng.normal(size=m))})

            u = np.array([solution.u_trace[a] for a in system.arc_order])
            v = np.array([solution.v_trace[a] for a in system.arc_order])
            theta = np.where(incoming, 1.0, -1.0)
            np.testing.assert_allclose(theta * (-lam * v), K @ u - K.sum(axis=1) * u, rtol=0, atol=1e-10)
            assert abs(solution.residual_flux) <= 1e-10 * (1 + np.max(lam * np.abs(v)))
            assert gamma1_from_traces(system, solution) == pytest.approx(gamma1_from_jumps(system, solution), abs=1e-10)
            assert gamma1_from_traces(system, solution) >= -1e-12


class TestExternalBoundary:
    @pytest.mark.parametrize("end, w, expected", [("tail", 0.0, (0.0, 0.0)), ("head", 1.0, (2.0, 0.0))])
    def test_reflection(self, end, w, expected):
        assert external_boundary_traces(end, w) == expected

    def test_unknown_end(self):
        with pytest.raises(ValueError):
            external_boundary_traces("middle", 1.0)


def transport_only(solver, state, dt, steps):
    masses = []
    for _ in range(steps):
        traces, _ = solver.compute_traces(state)
        state = transport_step(solver.spec, state, traces, dt)
        masses.append(sum(float(np.sum(s.u)) * solver.spec.arc(a).length / s.n_cells for a, s in state.states.items()))
    return state, masses


class TestTransport:
    def test_constant_state_unchanged(self, star3):
        grids = build_grids(star3, 8)
        state = NetworkState(0.0, {a: ArcState(np.full(8, 3.0), np.zeros(8), np.zeros(8)) for a in grids})
        solver = HyperbolicSolver(star3)
        traces, _ = solver.compute_traces(state)
        moved = transport_step(star3, state, traces, 0.1)
        for s in moved.states.values():
            np.testing.assert_array_equal(s.u, 3.0)
            np.testing.assert_array_equal(s.v, 0.0)

    def test_sealed_arc_conserves_mass(self, sealed_arc):
        grids, _, state = bump_state(sealed_arc, cells=16, amplitude=1.0)
        mass0 = float(np.sum(state["a"].u)) * grids["a"].h
        _, masses = transport_only(HyperbolicSolver(sealed_arc), state, 0.9 * grids["a"].h, 1000)
        assert max(abs(m - mass0) for m in masses) <= 1e-13

    def test_star_conserves_mass_every_step(self, star3, rng):
        grids = build_grids(star3, 16)
        state = random_state(star3, grids, rng)
        mass0 = sum(float(np.sum(s.u)) / 16 for s in state.states.values())
        _, masses = transport_only(HyperbolicSolver(star3), state, 0.9 / 16, 200)
        assert max(abs(m - mass0) for m in masses) <= 1e-12

    def test_cfl_violation(self, sealed_arc):
        grids, _, state = bump_state(sealed_arc, cells=8)
        traces, _ = HyperbolicSolver(sealed_arc).compute_traces(state)
        with pytest.raises(CFLViolation):
            transport_step(sealed_arc, state, traces, 1.01 * grids["a"].h)

    def test_energy_nonincreasing_without_sources(self, star3, rng):
        grids = build_grids(star3, 16)
        state = random_state(star3, grids, rng)
        solver = HyperbolicSolver(star3)

        def energy(s):
            return sum(float(np.sum(x.u**2 + x.v**2)) / 16 for x in s.states.values())

        previous = energy(state)
        for _ in range(200):
            state, _ = solver.step(state, 0.9 / 16, chemotaxis=False, damping=True)
            current = energy(state)
            assert current <= previous + 1e-12
            previous = current


class TestSource:
    def single(self, v, u, phi_x, beta, dt, damping=True):
        spec = NetworkSpec((), ("L", "R"), (ArcSpec("a", "L", "R", 1.0, 1.0, 1.0, beta, 1.0, 1.0),), {}, {})
        state = NetworkState(0.0, {"a": ArcState(np.full(4, u), np.full(4, v), np.zeros(4))})
        phi = None if phi_x is None else {"a": np.full(4, phi_x)}
        return source_step(spec, state, phi, dt, damping=damping)["a"]

    def test_pure_damping(self):
        result = self.single(v=2.0, u=1.0, phi_x=0.0, beta=1.5, dt=0.1)
        np.testing.assert_allclose(result.v, 2.0 * math.exp(-0.15), rtol=1e-15)
        np.testing.assert_array_equal(result.u, 1.0)

    def test_tiny_beta_dt_matches_explicit_euler(self):
        beta, dt = 1e-6, 1e-6
        result = self.single(v=0.3, u=2.0, phi_x=0.5, beta=beta, dt=dt)
        np.testing.assert_allclose(result.v, 0.3 + dt * (0.5 * 2.0 - beta * 0.3), rtol=0, atol=1e-10)

    def test_half_decay(self):
        beta = 2.0
        result = self.single(v=0.0, u=1.0, phi_x=1.0, beta=beta, dt=math.log(2.0) / beta)
        np.testing.assert_allclose(result.v, 1.0 / (2.0 * beta), rtol=1e-14)

    def test_chemotaxis_off_and_damping_off(self):
        result = self.single(v=0.4, u=1.0, phi_x=None, beta=1.0, dt=0.1, damping=False)
        np.testing.assert_array_equal(result.v, 0.4)

    def test_damping_off_is_explicit_forcing(self):
        result = self.single(v=0.4, u=2.0, phi_x=0.5, beta=1.0, dt=0.1, damping=False)
        np.testing.assert_allclose(result.v, 0.4 + 0.1 * 1.0, rtol=1e-15)
