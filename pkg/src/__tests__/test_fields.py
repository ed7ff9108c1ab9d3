#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Tests for grids, Riemann invariants and initial data
"""

import logging
import math

import numpy as np
import pytest

from src.services.diagnostics import compatibility_residual
from src.state.fields import (
    ArcGrid,
    InitialCondition,
    NetworkState,
    build_grids,
    build_initial_state,
    from_invariants,
    to_invariants,
)
from src.utils.errors import ConfigError


@pytest.mark.parametrize(
    "u, v, expected",
    [
        (2.0, 0.0, (1.0, 1.0)),
        (0.0, 2.0, (1.0, -1.0)),
        (3.0, 1.0, (2.0, 1.0)),
    ],
)
def test_to_invariants(u, v, expected):
    assert to_invariants(u, v) == expected


def test_invariants_invert_on_arrays(rng):
    u, v = rng.normal(size=50), rng.normal(size=50)
    back_u, back_v = from_invariants(*to_invariants(u, v))
    np.testing.assert_allclose(back_u, u, rtol=0, atol=1e-15)
    np.testing.assert_allclose(back_v, v, rtol=0, atol=1e-15)


class TestGrids:
    def test_cell_geometry(self):
        grid = ArcGrid("a", 8, 2.0)
        assert grid.h == 0.25
        assert grid.centers[0] == 0.125
        assert grid.edges[-1] == 2.0

    def test_minimum_cells(self):
        with pytest.raises(ConfigError):
            ArcGrid("a", 3, 1.0)

    def test_per_arc_counts_with_default(self, star3):
        grids = build_grids(star3, {"a2": 32, "default": 8})
        assert {k: g.n_cells for k, g in grids.items()} == {"a1": 8, "a2": 32, "a3": 8}

    def test_single_count(self, star3):
        assert all(g.n_cells == 12 for g in build_grids(star3, 12).values())


class TestInitialState:
    def test_steady_state_is_compatible(self, star3):
        grids = build_grids(star3, 16)
        state = build_initial_state(star3, grids, {"default": InitialCondition("steady", {"value": 2.0})})
        for s in state.states.values():
            assert np.all(s.u == 2.0) and np.all(s.v == 0.0) and np.all(s.phi == 2.0)
        assert compatibility_residual(star3, state) == 0.0

    def test_constant_kind(self, sealed_arc):
        grids = build_grids(sealed_arc, 8)
        state = build_initial_state(sealed_arc, grids, {"a": InitialCondition("constant", {"u": 1.5, "phi": 0.5})})
        assert np.all(state["a"].u == 1.5) and np.all(state["a"].v == 0.0) and np.all(state["a"].phi == 0.5)
        assert state.time == 0.0

    def test_gaussian_cell_averages_carry_the_exact_mass(self, sealed_arc):
        grids = build_grids(sealed_arc, 16)
        state = build_initial_state(
            sealed_arc, grids, {"a": InitialCondition("gaussian", {"amplitude": 2.0, "width": 0.05})}
        )
        mass = float(np.sum(state["a"].u)) * grids["a"].h
        exact = 2.0 * 0.05 * math.sqrt(2.0 * math.pi) * math.erf(0.5 / (0.05 * math.sqrt(2.0)))
        assert mass == pytest.approx(exact, rel=1e-13)

    def test_mid_arc_gaussian_is_compatible(self, sealed_arc, star3, caplog):
        for spec in (sealed_arc, star3):
            grids = build_grids(spec, 16)
            with caplog.at_level(logging.WARNING):
                state = build_initial_state(
                    spec,
                    grids,
                    {spec.arcs[0].id: InitialCondition("gaussian", {}), "default": InitialCondition("constant", {})},
                )
            assert compatibility_residual(spec, state) <= 1e-8
        assert "compatibility" not in caplog.text

    def test_incompatible_data_only_warns(self, sealed_arc, caplog):
        grids = build_grids(sealed_arc, 8)
        with caplog.at_level(logging.WARNING):
            state = build_initial_state(sealed_arc, grids, {"a": InitialCondition("constant", {"v": 1.0})})
        assert isinstance(state, NetworkState)
        assert "compatibility" in caplog.text

    def test_custom_table(self, sealed_arc):
        grids = build_grids(sealed_arc, 4)
        table = {"u": [1, 2, 3, 4], "v": [0, 0, 0, 0], "phi": [4, 3, 2, 1]}
        state = build_initial_state(sealed_arc, grids, {"a": InitialCondition("custom-table", table)}, compat_check=False)
        assert state["a"].u.tolist() == [1.0, 2.0, 3.0, 4.0]
        assert state["a"].phi.tolist() == [4.0, 3.0, 2.0, 1.0]

    def test_custom_table_length_mismatch(self, sealed_arc):
        grids = build_grids(sealed_arc, 16)
        with pytest.raises(ConfigError):
            build_initial_state(sealed_arc, grids, {"a": InitialCondition("custom-table", {"u": [0.0] * 7})})

    @pytest.mark.parametrize(
        "condition",
        [
            InitialCondition("gaussian", {"amplitude": "big"}),
            InitialCondition("steady", {"value": [1.0]}),
            InitialCondition("constant", {"u": None}),
            InitialCondition("custom-table", {"u": ["x"] * 16}),
            InitialCondition("custom-table", {"phi": 3.0}),
        ],
    )
    def test_malformed_parameters(self, sealed_arc, condition):
        grids = build_grids(sealed_arc, 16)
        with pytest.raises(ConfigError):
            build_initial_state(sealed_arc, grids, {"a": condition})

    def test_unknown_arc_key(self, star3):
        grids = build_grids(star3, 8)
        with pytest.raises(ConfigError, match="a9"):
            build_initial_state(
                star3,
                grids,
                {"a9": InitialCondition("gaussian", {}), "default": InitialCondition("constant", {})},
            )

    def test_missing_condition(self, star3):
        grids = build_grids(star3, 8)
        with pytest.raises(ConfigError):
            build_initial_state(star3, grids, {"a1": InitialCondition("steady", {})})

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            InitialCondition("sinusoid", {})
