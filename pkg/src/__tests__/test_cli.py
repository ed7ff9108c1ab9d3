#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Tests for the command-line front end
"""

import io
import json
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
import pytest

from src.__tests__.network_factory import star3_document
from src.tools import cli
from src.utils.errors import CFLViolation

SAMPLES = Path(__file__).resolve().parents[2] / "samples"


def invoke(*argv):
    stream = io.StringIO()
    code = cli.main(list(map(str, argv)), stream=stream)
    return code, stream.getvalue()


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "star3.json").write_text(star3_document(), encoding="utf-8")
    config = {
        "network": "star3.json",
        "t_final": 0.5,
        "n_cells": 8,
        "initial": {
            "a1": {"kind": "gaussian", "params": {"amplitude": 0.01}},
            "default": {"kind": "constant"},
        },
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


class TestValidate:
    def test_reference_network(self):
        code, out = invoke("validate", SAMPLES / "star3.json")
        report = json.loads(out)
        assert code == 0
        assert report["valid"] and report["global_condition"]
        assert report["nodes"]["N"]["degree"] == 3

    def test_asymmetric_network(self):
        code, out = invoke("validate", SAMPLES / "bad_asymmetric.json")
        assert code == 1
        assert "ASYMMETRIC_K" in [v["code"] for v in json.loads(out)["violations"]]

    def test_missing_file(self, tmp_path):
        code, _ = invoke("validate", tmp_path / "nothing.json")
        assert code == 2


class TestRun:
    def test_csv_to_stdout(self, workspace):
        code, out = invoke("run", workspace, "--t-final", "1.0")
        assert code == 0
        frame = pd.read_csv(io.StringIO(out))
        assert frame["time"].iloc[0] == 0.0
        assert frame["time"].iloc[-1] == 1.0
        assert frame["time"].is_monotonic_increasing
        assert "gamma1_N" in frame.columns

    def test_identical_invocations(self, workspace):
        assert invoke("run", workspace) == invoke("run", workspace)

    def test_out_directory(self, workspace, tmp_path):
        code, out = invoke("run", workspace, "--out", tmp_path / "results", "--cells", "16")
        assert code == 0
        summary = json.loads(out)
        assert Path(summary["csv"]) == tmp_path / "results" / "diagnostics.csv"
        assert summary["mass_drift"] <= 1e-12
        assert summary["max_hub_gap"] <= 1e-10
        assert summary["toggles"] == {"chemotaxis_source": True, "damping": True, "production": True}
        assert len(pd.read_csv(summary["csv"])) == summary["steps"] + 1

    def test_bad_override(self, workspace):
        code, _ = invoke("run", workspace, "--cfl", "1.5")
        assert code == 2

    def test_numerical_failure(self, workspace):
        with mock.patch.object(cli.engine, "run", side_effect=CFLViolation("dt too large")):
            code, _ = invoke("run", workspace)
        assert code == 3

    @pytest.mark.parametrize(
        "initial",
        [
            {"a1": {"kind": "gaussian", "params": {"amplitude": "big"}}, "default": {"kind": "constant"}},
            {"default": {"kind": "custom-table", "params": {"u": ["x"] * 8}}},
            {"a9": {"kind": "gaussian"}, "default": {"kind": "constant"}},
        ],
    )
    def test_bad_initial_data(self, workspace, initial):
        config = json.loads(workspace.read_text(encoding="utf-8"))
        config["initial"] = initial
        workspace.write_text(json.dumps(config), encoding="utf-8")
        code, out = invoke("run", workspace)
        assert code == 2
        assert out == ""

    @pytest.mark.parametrize(
        "failure, expected",
        [
            (np.linalg.LinAlgError("matrix is singular"), 3),
            (FloatingPointError("overflow"), 3),
            (KeyError("a1"), 1),
        ],
    )
    def test_library_failures(self, workspace, failure, expected):
        with mock.patch.object(cli.engine, "run", side_effect=failure):
            code, _ = invoke("run", workspace)
        assert code == expected

    def test_invalid_network_in_config(self, workspace, tmp_path):
        (tmp_path / "star3.json").write_text((SAMPLES / "bad_asymmetric.json").read_text(), encoding="utf-8")
        code, _ = invoke("run", workspace)
        assert code == 1


class TestArguments:
    @pytest.mark.parametrize(
        "argv",
        [[], ["simulate"], ["converge", "run.json"], ["oracle-compare", "run.json"], ["run", "run.json", "--cells", "x"]],
    )
    def test_argument_errors(self, argv):
        assert invoke(*argv)[0] == 2

    def test_help_mentions_precedence(self, capsys):
        assert invoke("run", "--help")[0] == 0
        assert "override the configuration file" in " ".join(capsys.readouterr().out.split())


def test_converge_prints_table(workspace):
    code, out = invoke("converge", workspace, "--levels", "3", "--base-cells", "8", "--t-final", "0.1")
    assert code == 0
    header = out.splitlines()[0].split()
    assert header[:4] == ["level", "n_cells", "h", "dt"]
    assert "order_u" in header


def test_converge_needs_three_levels(workspace):
    assert invoke("converge", workspace, "--levels", "2")[0] == 2


def test_oracle_compare(workspace):
    code, out = invoke("oracle-compare", workspace, "--dt-oracle", "1e-3", "--t-final", "0.2")
    assert code == 0
    result = json.loads(out)
    assert result["dt_half"] == 0.5 * result["dt"]
    assert result["gap"] >= 0.0


def test_oracle_compare_unstable_reference(workspace):
    assert invoke("oracle-compare", workspace, "--dt-oracle", "0.1", "--no-refine")[0] == 3


def test_oracle_compare_two_halvings(workspace):
    code, out = invoke("oracle-compare", workspace, "--dt-oracle", "1e-3", "--t-final", "0.2", "--refine", "2")
    assert code == 0
    result = json.loads(out)
    assert result["dt_quarter"] == 0.25 * result["dt"]
    assert "ratio_quarter" in result
