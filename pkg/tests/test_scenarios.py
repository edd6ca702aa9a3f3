import json
from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from kinetic.core.exceptions import ConfigurationError
from kinetic.main import cli
from kinetic.scenarios.service import DATA_DIR, ScenarioService

SHIPPED = ["corridor_evacuation", "opinion_consensus", "tumor_immune", "two_state_toy", "wealth_exchange"]

FLAT = """\
[scenario]
name = "flat"
solver = "homogeneous"
description = "nothing happens"

[numerics]
dt = 0.1
t_end = 1.0
grid_size = 11

[homogeneous]
labels = ["a"]

[homogeneous.model]
family = "zero"

[[homogeneous.initial]]
shape = "linear"
slope = 1.0
"""

CONSENSUS = """\
[scenario]
name = "consensus"
solver = "homogeneous"

[numerics]
dt = 0.05
t_end = 2.0
output_interval = 0.5
grid_size = 21

[homogeneous]
[homogeneous.model]
family = "consensus"

[[homogeneous.initial]]
shape = "gaussian"
center = 0.4
width = 0.2
"""

SMALL_FPB = """\
[scenario]
name = "small_fpb"
solver = "fpb"

[numerics]
dt = 0.1
t_end = 1.0
seed = 4

[fpb]
n_particles = 1000
p = 0.3
q = 0.2
lower = -1.0
upper = 1.0
initial_lower = -1.0
initial_upper = 1.0

[fpb.noise]
sigma2 = 0.1
"""

SHORT_TUMOR = """\
[scenario]
name = "short_tumor"
solver = "homogeneous"

[numerics]
dt = 0.05
t_end = 2.0
grid_size = 11

[homogeneous]
labels = ["tumor", "immune"]

[homogeneous.model]
family = "tumor_immune"
activation_ratio = 1.0

[[homogeneous.initial]]
shape = "gaussian"
density = 0.1
center = 0.3
width = 0.1

[[homogeneous.initial]]
shape = "gaussian"
density = 1.0
center = 0.3
width = 0.1
"""


@pytest.fixture
def write_cfg(tmp_path):
    def write(text: str, name: str = "case.cfg") -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


@pytest.fixture
def runner():
    return CliRunner()


def test_list_shows_shipped_scenarios(runner):
    result = runner.invoke(cli, ["list"])
    assert result.exit_code == 0
    names = [line.split("\t")[0] for line in result.output.splitlines() if "\t" in line]
    assert names == SHIPPED


def test_list_adds_user_directories(tmp_path):
    user = tmp_path / "mine"
    user.mkdir()
    (user / "small.cfg").write_text(SMALL_FPB)
    (user / "clash.cfg").write_text(SMALL_FPB.replace('"small_fpb"', '"tumor_immune"'))
    (user / "broken.cfg").write_text("[scenario\n")
    entries = ScenarioService.list_scenarios([str(user)])
    names = [entry.name for entry in entries]
    assert names == sorted(SHIPPED + ["small_fpb"])
    tumor = next(entry for entry in entries if entry.name == "tumor_immune")
    assert Path(tumor.path).parent == DATA_DIR


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_validate(runner, name):
    result = runner.invoke(cli, ["validate", name])
    assert result.exit_code == 0, result.output
    assert f"{name}: ok" in result.output


def test_shipped_tumor_model_builds():
    config = ScenarioService.load_scenario(DATA_DIR / "tumor_immune.cfg")
    assert config.homogeneous.labels == ["tumor", "immune"]
    assert config.homogeneous.model.activation_ratio == 1.5
    ScenarioService.validate(config)


def test_spatial_arena_path_is_relative_to_file():
    config = ScenarioService.load_scenario(DATA_DIR / "corridor_evacuation.cfg")
    assert Path(config.spatial.arena) == (DATA_DIR / "corridor.map").resolve()


def test_shipped_corridor_weights_respond_to_crowd():
    config = ScenarioService.load_scenario(DATA_DIR / "corridor_evacuation.cfg")
    assert config.spatial.weights.density_gain == 0.5
    assert config.spatial.weights.activity_gain == 1.0


def test_parse_error_reports_line(write_cfg):
    path = write_cfg('[scenario]\nname = "x"\nsolver = = "fpb"\n')
    with pytest.raises(ConfigurationError) as error:
        ScenarioService.load_scenario(path)
    assert error.value.line == 3


def test_missing_value_reports_key(write_cfg):
    path = write_cfg(FLAT.replace("dt = 0.1\n", ""))
    with pytest.raises(ConfigurationError) as error:
        ScenarioService.load_scenario(path)
    assert error.value.key == "numerics.dt"


@pytest.mark.parametrize(
    "old, new",
    [
        ("dt = 0.1", "dt = -0.1"),
        ('solver = "homogeneous"', 'solver = "fpb"'),
        ('family = "zero"', 'family = "unknown"'),
        ("grid_size = 11", "grid_size = 11\nbogus = 1"),
    ],
    ids=["negative-dt", "wrong-section", "family", "unknown-key"],
)
def test_invalid_scenarios_exit_with_validation_status(runner, write_cfg, old, new):
    path = write_cfg(FLAT.replace(old, new))
    result = runner.invoke(cli, ["validate", str(path)])
    assert result.exit_code == 1


def test_unknown_scenario_name(runner):
    result = runner.invoke(cli, ["run", "no_such_scenario"])
    assert result.exit_code == 1


def test_zero_model_writes_identical_rows(runner, write_cfg, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", str(write_cfg(FLAT)), "--out", str(out)])
    assert result.exit_code == 0, result.output

    table = pd.read_csv(out / "timeseries.csv")
    assert list(table.columns) == ["t", "n_1", "E_1", "total_density"]
    assert len(table) == 11
    for column in ["n_1", "E_1", "total_density"]:
        assert table[column].nunique() == 1
    assert table["t"].iloc[-1] == pytest.approx(1.0)

    report = json.loads((out / "report.json").read_text())
    assert report["steps"] == 10
    assert sorted(report["manifest"]) == ["final_state.csv", "timeseries.csv"]


def test_conservative_scenario_reports_small_drift(write_cfg, tmp_path):
    config = ScenarioService.load_scenario(write_cfg(CONSENSUS))
    report = ScenarioService.run(ScenarioService.apply_overrides(config, out=str(tmp_path / "out")))
    assert report.conservation_drift is not None
    assert report.conservation_drift <= 1e-8


def test_same_seed_gives_identical_files(runner, write_cfg, tmp_path):
    path = write_cfg(SMALL_FPB)
    for name in ("first", "second"):
        result = runner.invoke(cli, ["run", str(path), "--out", str(tmp_path / name)])
        assert result.exit_code == 0, result.output
    for name in ("timeseries.csv", "final_state.csv", "histogram.csv"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    result = runner.invoke(cli, ["run", str(path), "--seed", "5", "--out", str(tmp_path / "third")])
    assert result.exit_code == 0
    assert (tmp_path / "first" / "final_state.csv").read_bytes() != (tmp_path / "third" / "final_state.csv").read_bytes()


def test_overrides_change_the_run(runner, tmp_path):
    out = tmp_path / "toy"
    result = runner.invoke(cli, ["run", "two_state_toy", "--t-end", "0.5", "--dt", "0.05", "--out", str(out)])
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out / "timeseries.csv")
    assert table["t"].iloc[-1] == pytest.approx(0.5)
    assert table["n_1"].iloc[-1] == pytest.approx(1.0, abs=1e-12)
    # mass drifts from the low state to the high one
    assert table["E_1"].is_monotonic_increasing


def test_runtime_failure_exits_with_status_two(runner, tmp_path):
    result = runner.invoke(
        cli, ["run", "corridor_evacuation", "--dt", "1.0", "--t-end", "1.0", "--out", str(tmp_path / "c")]
    )
    assert result.exit_code == 2


def test_sweep_separates_growth_from_decay(runner, write_cfg):
    path = write_cfg(SHORT_TUMOR)
    result = runner.invoke(cli, ["sweep", str(path), "--param", "activation_ratio", "--values", "0.5,2.0"])
    assert result.exit_code == 0, result.output
    rows = [line.split("\t") for line in result.output.splitlines() if line[:1].isdigit()]
    ratios = [float(row[3]) for row in rows]
    assert ratios[0] > 1.0 > ratios[1]


def test_sweep_rejects_unknown_parameter(runner, write_cfg):
    result = runner.invoke(cli, ["sweep", str(write_cfg(SHORT_TUMOR)), "--param", "nope", "--values", "1"])
    assert result.exit_code == 1


def test_sweep_accepts_dotted_path(write_cfg):
    growing = SHORT_TUMOR.replace("activation_ratio = 1.0", "activation_ratio = 0.5")
    config = ScenarioService.load_scenario(write_cfg(growing))
    points = ScenarioService.sweep(config, "numerics.t_end", [1.0, 2.0])
    assert 1.0 < points[0].ratio < points[1].ratio


def test_sweep_rejects_empty_initial_population(runner, write_cfg):
    path = write_cfg(FLAT.replace("slope = 1.0", "slope = 1.0\ndensity = 0.0"))
    with pytest.raises(ConfigurationError) as excinfo:
        ScenarioService.sweep(ScenarioService.load_scenario(path), "numerics.t_end", [1.0])
    assert excinfo.value.key == "initial"

    result = runner.invoke(cli, ["sweep", str(path), "--param", "numerics.t_end", "--values", "1"])
    assert result.exit_code == 1


def test_cfl_violation_is_a_validation_error():
    config = ScenarioService.load_scenario(ScenarioService.resolve("corridor_evacuation"))
    with pytest.raises(ConfigurationError) as excinfo:
        ScenarioService.validate(ScenarioService.apply_overrides(config, dt=1.0))
    assert excinfo.value.key == "numerics.dt"
