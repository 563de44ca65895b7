import json

import numpy as np
import pytest

from rlab.commands.analyze import measure_report
from rlab.main import main
from rlab.models.config import RunConfig
from rlab.utils.errors import ConfigError
from rlab.utils.io import read_report, read_surface, read_table, write_table

LADDER = ["--r-base", "0.2", "--ratio", "2", "--depth", "2"]


def last_error(capsys) -> dict:
    """The JSON error object main() prints as its last stderr line."""
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def plane_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("zoo") / "plane.csv"
    assert main(["zoo", "generate", "--shape", "plane", "--samples", "2500", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_zoo_generate_writes_surface_and_expectations(plane_csv):
    S = read_surface(plane_csv)
    assert S.n_points == 2500
    assert S.has_normals
    assert S.total_weight == pytest.approx(1.0)
    expected = json.loads(plane_csv.with_suffix(".expected.json").read_text())
    assert expected["shape"] == "plane"
    assert expected["total_area"] == pytest.approx(1.0)
    spec = json.loads(plane_csv.with_suffix(".spec.json").read_text())
    assert spec["samples"] == 2500 and spec["seed"] == 3


def test_analyze_plane(plane_csv, tmp_path):
    code = main(["analyze", "--input", str(plane_csv), *LADDER, "--probes", "4", "--out-dir", str(tmp_path)])
    assert code == 0
    carleson = read_report(tmp_path / "carleson.json")
    assert carleson.command == "analyze"
    assert carleson.result["dyadic_max"] <= 1e-9
    assert carleson.result["alpha_hypothesis"]["holds"]
    ahlfors = read_report(tmp_path / "ahlfors.json")
    cfg = RunConfig(**ahlfors.config)
    assert ahlfors.result == measure_report(read_surface(plane_csv), cfg).model_dump(mode="json")
    table = read_table(tmp_path / "flatness.csv")
    assert list(table.dtype.names) == ["x", "r", "alpha", "beta1", "betainf"]
    assert np.max(table["alpha"]) < 1e-9


def test_surface_file_normals_must_be_unit(tmp_path, capsys):
    rows = [[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.01], [0.1, 0.0, 0.0, 0.0, 0.0, 1.0 + 1e-6, 0.01]]
    path = write_table(tmp_path / "stretched.csv", ["x0", "x1", "x2", "nu0", "nu1", "nu2", "w"], rows)
    with pytest.raises(ConfigError) as info:
        read_surface(path)
    assert info.value.to_dict()["row"] == 1
    assert main(["analyze", "--input", str(path), "--out-dir", str(tmp_path)]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


def test_missing_input_is_a_config_error(tmp_path, capsys):
    assert main(["analyze", "--input", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


def test_no_source_is_a_config_error(tmp_path, capsys):
    assert main(["analyze", "--out-dir", str(tmp_path)]) == 2
    assert last_error(capsys)["error"] == "ValidationError"


def test_unknown_shape_is_rejected(tmp_path):
    assert main(["zoo", "generate", "--shape", "torus", "--out", str(tmp_path / "t.csv")]) == 2


def test_parametrize_plane(tmp_path):
    code = main([
        "parametrize", "--shape", "plane", "--samples", "10000", "--seed", "1", *LADDER,
        "--region-radius", "0.4", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    bilip = read_report(tmp_path / "bilip.json").result
    assert bilip["k_lower"] <= 1 + 1e-6
    assert bilip["n_criterion"] == pytest.approx(0.0, abs=1e-12)
    assert read_report(tmp_path / "reifenberg.json").result["worst"] < 1e-6
    assert read_report(tmp_path / "containment.json").result["passed"]
    ccbp = read_report(tmp_path / "ccbp.json").result
    assert len(ccbp["levels"]) == 3
    flow = read_table(tmp_path / "flow.csv")
    assert list(flow.dtype.names) == [f"{p}{i}" for p in ("z", "f1_", "f2_") for i in range(3)]
    # the plane is fixed by every σ_k
    for k in (1, 2):
        for i in range(3):
            np.testing.assert_allclose(flow[f"f{k}_{i}"], flow[f"z{i}"], atol=1e-12)
    assert flow.size == bilip["grid_points"]
    assert [level["level"] for level in bilip["levels"]] == [0, 1, 2]
    assert bilip["levels"][-1]["step_ratio"] is None


def test_parametrize_rough_graph_exceeds_epsilon(tmp_path, capsys):
    code = main([
        "parametrize", "--shape", "graph-sin", "--amplitude", "0.15", "--wavelength", "0.3", "--seed", "7",
        *LADDER, "--region-radius", "0.4", "--out-dir", str(tmp_path),
    ])
    assert code == 4
    error = last_error(capsys)
    assert error["error"] == "EpsilonExceeded"
    assert error["achieved_eps"] > 0.05


def test_parametrize_snowflake_exceeds_epsilon(tmp_path, capsys):
    # λ = 4, γ = 0, M = 6: every octave adds slope a/ℓ, so α does not decay with the radius
    code = main([
        "parametrize", "--shape", "snowflake-like", "--amplitude", "0.1", "--wavelength", "0.1",
        "--lacunarity", "4", "--gamma", "0", "--levels", "6", "--samples", "40000", "--seed", "0",
        "--r-base", "0.2", "--ratio", "2", "--depth", "3", "--region-radius", "0.4", "--out-dir", str(tmp_path),
    ])
    assert code == 4
    error = last_error(capsys)
    assert error["error"] == "EpsilonExceeded"
    assert error["achieved_eps"] > 0.05


def test_reruns_are_bit_identical(plane_csv, tmp_path):
    args = ["analyze", "--input", str(plane_csv), *LADDER, "--probes", "4", "--out-dir", str(tmp_path)]
    names = ["ahlfors.json", "carleson.json", "flatness.csv"]
    assert main(args) == 0
    first = {name: (tmp_path / name).read_bytes() for name in names}
    assert main(args) == 0
    assert {name: (tmp_path / name).read_bytes() for name in names} == first


def test_quasiconvex_two_sheets(tmp_path):
    code = main([
        "check", "quasiconvex", "--shape", "two-sheet", "--samples", "4096", "--separation", "0.1",
        "--pairs", "10", "--out-dir", str(tmp_path),
    ])
    assert code == 5
    report = read_report(tmp_path / "quasiconvexity_report.json")
    assert report.result["components"] == 2
    assert report.result["kappa"] is None


def test_quasiconvex_plane(tmp_path):
    code = main([
        "check", "quasiconvex", "--shape", "plane", "--samples", "2500", "--pairs", "20", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    assert read_report(tmp_path / "quasiconvexity_report.json").result["kappa"] < 1.15


def test_poincare_two_sheets(tmp_path, capsys):
    code = main([
        "check", "poincare", "--shape", "two-sheet", "--samples", "4096", "--separation", "0.1",
        "--r-base", "0.3", "--ratio", "2", "--depth", "1", "--probes", "8", "--out-dir", str(tmp_path),
    ])
    assert code == 5
    assert last_error(capsys)["error"] == "InequalityViolated"
    assert not read_report(tmp_path / "poincare_report.json").result["poincare"]["c_p_finite"]


def test_poincare_plane(tmp_path):
    code = main([
        "check", "poincare", "--shape", "plane", "--samples", "2500", *LADDER, "--probes", "4",
        "--functions", "4", "--out-dir", str(tmp_path),
    ])
    assert code == 0
    result = read_report(tmp_path / "poincare_report.json").result
    assert result["poincare"]["c_p_finite"]
    assert result["keith"]["violations"] == 0
