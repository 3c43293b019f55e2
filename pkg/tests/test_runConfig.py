import glob
import math
import os
import pytest
from dislocation import DiscreteDislocation
from runConfig import ConfigParseError, ConfigValidationError, RunConfig, dyadic_schedule, load_config, log_schedule, parse_config

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

MINIMAL = """
measure:
  type: discrete
  atoms:
    - [1.0, [0.7, 0.3]]
"""


def with_run(body: str) -> str:
    return MINIMAL + "run:\n" + "".join(f"  {line}\n" for line in body.strip().splitlines())


class TestDefaults:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert isinstance(cfg, RunConfig)
        assert cfg.run.eta == 1e-3
        assert cfg.run.eta_schedule == dyadic_schedule(4, 16)
        assert cfg.run.replicas == 100
        assert cfg.run.master_seed == 20240101
        assert cfg.run.fragment_budget == 10**8
        assert cfg.output.path == "-"
        assert cfg.output.format == "csv"
        assert len(cfg.test_functions()) == 18

    def test_measure(self):
        nu = parse_config(MINIMAL).build_measure()
        assert isinstance(nu, DiscreteDislocation)
        assert nu.is_conservative()

    def test_to_dict(self):
        assert parse_config(MINIMAL).to_dict()["measure"]["atoms"] == [[1.0, [0.7, 0.3]]]

    def test_uniform_truncated(self):
        cfg = parse_config("measure:\n  type: binary_density\n  density: uniform\n  epsilon: 0.1\n")
        assert cfg.build_measure().total_rate == pytest.approx(0.4, abs=1e-12)

    @pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.yaml"))))
    def test_shipped_configs(self, path):
        load_config(path)


class TestValues:
    def test_exponent_without_dot(self):
        # PyYAML reads 1e-3 as a string
        assert parse_config(with_run("eta: 1e-3")).run.eta == 1e-3

    def test_jinja_schedule(self):
        cfg = parse_config(with_run("eta_schedule: {{ dyadic_schedule(2, 4) }}"))
        assert cfg.run.eta_schedule == [0.25, 0.125, 0.0625]

    def test_jinja_log(self):
        cfg = parse_config(with_run("x_grid: [{{ ln(100.0) }}]"))
        assert cfg.run.x_grid == pytest.approx([math.log(100.0)], abs=1e-12)

    def test_log_schedule(self):
        assert log_schedule(0.1, 0.001, 3) == pytest.approx([0.1, 0.01, 0.001], rel=1e-12)
        assert log_schedule(0.1, 0.001, 1) == [0.1]

    def test_null_p(self):
        assert parse_config(with_run("p: null")).run.p is None


class TestErrors:
    def test_schedule_must_decrease(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config(with_run("eta_schedule: [0.1, 0.2]"))
        assert e.value.key == "run.eta_schedule"

    def test_atoms_sum_above_one(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config("measure:\n  type: discrete\n  atoms:\n    - [1.0, [0.7, 0.6]]\n")
        assert e.value.key == "measure.atoms"

    def test_unknown_key(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config(with_run("etta: 0.1"))
        assert e.value.key == "run.etta"

    def test_unknown_section(self):
        with pytest.raises(ConfigValidationError):
            parse_config(MINIMAL + "extra: 1\n")

    def test_missing_measure(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config("run:\n  eta: 0.1\n")
        assert e.value.key == "measure"

    def test_deprecated(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config("measure:\n  type: binary_density\n  eps: 0.1\n")
        assert "measure.epsilon" in str(e.value)

    def test_yaml_error_has_position(self):
        with pytest.raises(ConfigParseError) as e:
            parse_config("measure:\n  type: discrete\n  atoms: [[1.0, [0.5, 0.5]]\n")
        assert e.value.line > 0

    def test_not_a_mapping(self):
        with pytest.raises(ConfigParseError):
            parse_config("- one\n- two\n")

    def test_bad_function(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config(MINIMAL + "functions:\n  - sine\n")
        assert e.value.key == "functions[0]"

    def test_bad_number(self):
        with pytest.raises(ConfigValidationError) as e:
            parse_config(with_run("replicas: many"))
        assert e.value.key == "run.replicas"

    def test_bad_format(self):
        with pytest.raises(ConfigValidationError):
            parse_config(MINIMAL + "output:\n  format: xml\n")

    def test_bad_epsilon(self):
        with pytest.raises(ConfigValidationError):
            parse_config("measure:\n  type: binary_density\n  epsilon: 0.5\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigValidationError):
            load_config(str(tmp_path / "absent.yaml"))

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(MINIMAL)
        assert load_config(str(path)).run.replicas == 100
