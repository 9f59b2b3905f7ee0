import json

import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import InvalidParameterError
from app.schemas.dynamics import Diagnostics
from app.services.result_writer import ResultWriter, load_profile, output_path
from app.services.steady_state import solve_liquid_star


def test_profile_csv_round_trip(tmp_path):
    profile = solve_liquid_star(1.2, 10.0, 64)
    path = ResultWriter.write_profile(tmp_path / "profile.csv", profile, {"gamma": 1.2, "kappa": 10.0})
    loaded = load_profile(str(path))
    np.testing.assert_array_equal(loaded.rho, profile.rho)
    np.testing.assert_array_equal(loaded.mass, profile.mass)
    np.testing.assert_array_equal(loaded.nodes, profile.nodes)
    assert loaded.radius == profile.radius
    meta = ResultWriter.read_meta(path)
    assert meta["gamma"] == 1.2
    assert meta["config"] == {"gamma": 1.2, "kappa": 10.0}


def test_csv_is_deterministic(tmp_path):
    profile = solve_liquid_star(1.2, 10.0, 32)
    first = ResultWriter.write_profile(tmp_path / "a.csv", profile).read_bytes()
    second = ResultWriter.write_profile(tmp_path / "b.csv", profile).read_bytes()
    assert first == second


def test_diagnostics_columns(tmp_path):
    diagnostics = Diagnostics(dt=0.1)
    diagnostics.record(0.0, 1e-6, -3.0, 0.5, 0.0)
    diagnostics.record(0.1, 2e-6, -3.0, 0.5, 1e-7)
    path = ResultWriter.write_diagnostics(tmp_path / "run.csv", diagnostics)
    frame = pd.read_csv(path, comment="#")
    assert list(frame.columns) == ["t", "norm", "energy", "boundary_radius", "max_jacobian_dev"]
    assert ResultWriter.read_meta(path)["status"] == "ok"


def test_json_handles_numpy_values(tmp_path):
    path = ResultWriter.write_json(tmp_path / "out.json", {"x": np.float64(1.5), "v": np.arange(3)})
    assert json.loads(path.read_text()) == {"v": [0, 1, 2], "x": 1.5}


def test_output_path_creates_parents(tmp_path):
    path = output_path(str(tmp_path / "deep" / "dir"), None, "x.csv")
    assert path.parent.is_dir()
    assert output_path(str(tmp_path), str(tmp_path / "y.csv"), "x.csv").name == "y.csv"


def test_load_profile_rejects_bad_files(tmp_path):
    with pytest.raises(InvalidParameterError):
        load_profile(str(tmp_path / "missing.csv"))
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidParameterError):
        load_profile(str(bad))
    rising = tmp_path / "rising.csv"
    rising.write_text('# gamma=1.2\n# kappa=2.0\ny,rho,mass\n0,2.0,0\n0.5,3.0,1\n1,1.0,2\n')
    with pytest.raises(InvalidParameterError):
        load_profile(str(rising))
