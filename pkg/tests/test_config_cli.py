import json

import pytest

from ergodic_mlmc.cli import main
from ergodic_mlmc.config import (ExperimentConfig, OUTPUT_ENV, apply_overrides, load_config,
                                 parse_config_text)
from ergodic_mlmc.exceptions import ConfigError
from ergodic_mlmc.output import atomic_write_text, write_csv, write_json


def test_parse_config_text():
    cfg = parse_config_text("""
        # comment
        model = ou
        eps = 0.02, 0.01
        lambda = 2.0   # trailing comment
        split = 0.4,0.3,0.3
        seed = 5
    """)
    assert cfg.model == "ou"
    assert cfg.epsilon == (0.02, 0.01)
    assert cfg.lambda_ == 2.0
    assert cfg.error_split == (0.4, 0.3, 0.3)
    assert cfg.seed == 5 and isinstance(cfg.seed, int)


@pytest.mark.parametrize("text", ["nonsense", "colour = red", "seed = 1\nseed = 2",
                                  "seed = 1.5", "paths = many", " = 3"])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_dash_and_alias_keys():
    cfg = apply_overrides(ExperimentConfig(), {"grid-points": "11", "phi": "x2"})
    assert cfg.grid_points == 11 and cfg.observable == "x2"


def test_output_dir_env(monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, "/tmp/somewhere")
    assert ExperimentConfig().output_dir == "/tmp/somewhere"


def test_polynomial_model_from_config():
    cfg = parse_config_text("model = polynomial\ndrift_coefficients = 0,-1,0,-1\n")
    model = cfg.build_model()
    assert model.drift_coefficients == (0.0, -1.0, 0.0, -1.0)
    with pytest.raises(ConfigError):
        parse_config_text("model = polynomial").build_model()


def test_writers(tmp_path):
    write_csv(tmp_path / "a" / "t.csv", ["x", "y"], [[1, 0.1], [2, 1 / 3]])
    assert (tmp_path / "a" / "t.csv").read_text() == "x,y\n1,0.1\n2,0.3333333333333333\n"
    write_json(tmp_path / "s.json", {"b": 1.0, "a": [1, 2]})
    assert json.loads((tmp_path / "s.json").read_text()) == {"a": [1, 2], "b": 1.0}
    atomic_write_text(tmp_path / "s.json", "x")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a", "s.json"]


def test_check_exit_codes(tmp_path, capsys):
    assert main(["check"]) == 0
    assert main(["check", "--policy", "constant"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("this is not a config\n")
    assert main(["check", "--config", str(bad)]) == 2
    assert main(["check", "--alpha", "abc"]) == 2
    assert main(["no-such-command"]) == 2
    out = capsys.readouterr().out
    assert "FAIL timestep_condition" in out


def test_simulate_and_couple_csv(tmp_path):
    sim = tmp_path / "sim.csv"
    assert main(["simulate", "--paths", "7", "--horizon", "1.5", "--seed", "3",
                 "--out", str(sim)]) == 0
    lines = sim.read_text().splitlines()
    assert lines[0] == "path_id,terminal,steps,max_norm" and len(lines) == 8
    cpl = tmp_path / "c.csv"
    assert main(["couple", "--level", "2", "--samples", "5", "--schedule-mode", "general",
                 "--out", str(cpl)]) == 0
    header = cpl.read_text().splitlines()[0]
    assert header == "sample_id,fine,coarse,diff,fine_steps,coarse_steps"


def test_mlmc_outputs(tmp_path):
    assert main(["mlmc", "--eps", "0.05", "--eps", "0.03", "--out-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "mlmc_eps_0.05.json").read_text())
    assert {"estimate", "levels", "total_cost"} <= set(data)
    table = (tmp_path / "mlmc_eps_0.03.csv").read_text().splitlines()
    assert table[0] == "level,T,N,mean,var,cost"
    assert main(["mlmc", "--split", "0.5,0.5,0.5", "--out-dir", str(tmp_path)]) == 2


def test_oracle_moments_contraction_levels(tmp_path, capsys):
    assert main(["oracle", "--out", str(tmp_path / "o.json")]) == 0
    assert abs(float(capsys.readouterr().out) - 0.44115) < 1e-4
    assert main(["moments", "--paths", "200", "--horizons", "1,2", "--out",
                 str(tmp_path / "m.csv")]) == 0
    assert main(["contraction", "--paths", "200", "--out", str(tmp_path / "k.csv")]) == 0
    assert main(["levels", "--max-level", "2", "--samples", "300", "--out",
                 str(tmp_path / "l.csv")]) == 0
    assert (tmp_path / "l.csv").read_text().startswith("level,T,N,mean,var,cost")


def test_runtime_failure_exit_code(tmp_path):
    # uniform unit steps on the cubic drift blow up: a runtime failure, not a usage error
    assert main(["simulate", "--policy", "constant", "--delta", "1", "--paths", "50",
                 "--horizon", "20", "--out", str(tmp_path / "x.csv")]) == 1
    assert not (tmp_path / "x.csv").exists()


def test_small_reproduce(tmp_path):
    cfg = tmp_path / "r.cfg"
    cfg.write_text("level_samples = 500\nlevels_max = 4\neps = 0.05, 0.04\n"
                   f"output_dir = {tmp_path / 'out'}\n")
    code = main(["reproduce", "--config", str(cfg)])
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["criteria"]["oracle_benchmark"] is True
    assert code == (0 if summary["all_passed"] else 1)
    for name in ("levels.csv", "samples_per_level.csv", "cost.csv"):
        assert (tmp_path / "out" / name).exists()
