"""INI surface: collective validation, smoke scaling, seed policy."""

import os

import pytest

from qsdlab import ConfigError, load_config
from qsdlab.config import require_seed

EXAMPLES = os.path.join(os.path.dirname(__file__), os.pardir, "examples")


def _write(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_shipped_examples_parse():
    for name in ("logistic", "ou", "linear", "allee"):
        cfg = load_config(os.path.join(EXAMPLES, name + ".cfg"))
        assert cfg.model is not None
        assert cfg.K >= 2


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(str(tmp_path / "absent.cfg"))
    assert "not found" in exc.value.problems[0]


def test_every_violation_is_listed(tmp_path):
    path = _write(tmp_path, """
[model]
preset = logistic
bogus = 1

[domain]
x_min = -2
n = 4

[montecarlo]
dt = -1
""")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    text = "\n".join(exc.value.problems)
    assert "model.bogus" in text
    assert "domain.x_min" in text
    assert "domain.n" in text
    assert "montecarlo.dt" in text


def test_unknown_section_flagged(tmp_path):
    path = _write(tmp_path, """
[model]
preset = ou
kind = drift

[extras]
foo = 1
""")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert any("[extras]" in p for p in exc.value.problems)


def test_quick_scales_the_expensive_sizes(tmp_path):
    path = _write(tmp_path, """
[model]
preset = logistic

[domain]
x_min = 0.001
x_max = 6
n = 4096

[montecarlo]
n_paths = 100000
seed = 1

[bd]
n_reps = 10000
n_max = 10000
""")
    cfg = load_config(path, quick=True)
    assert cfg.domain.n == 409
    assert cfg.mc["n_paths"] == 10000
    assert cfg.bd["n_reps"] == 1000
    assert cfg.bd["n_max"] == 1000
    full = load_config(path)
    assert full.domain.n == 4096 and full.mc["n_paths"] == 100000


def test_seed_policy(tmp_path):
    path = _write(tmp_path, """
[model]
preset = logistic
""")
    cfg = load_config(path)
    assert cfg.seed is None
    for command in ("simulate", "qprocess", "bd", "compare"):
        with pytest.raises(ConfigError):
            require_seed(cfg, command)
    for command in ("check", "spectrum", "yaglom", "kernel"):
        require_seed(cfg, command)
    assert load_config(path, seed_override=7).seed == 7

    seeded = _write(tmp_path, """
[model]
preset = logistic

[montecarlo]
seed = 42
""")
    cfg2 = load_config(seeded)
    assert cfg2.seed == 42
    require_seed(cfg2, "simulate")
    # an explicit override beats the file
    assert load_config(seeded, seed_override=3).seed == 3


def test_sim_config_and_start_state(tmp_path):
    path = _write(tmp_path, """
[model]
preset = logistic

[montecarlo]
x0 = 1.5
z0 = 0.75
dt = 0.002
t_max = 3
n_paths = 1234
seed = 8
lambda_window = 1, 3
""")
    cfg = load_config(path)
    sc = cfg.sim_config()
    assert (sc.dt, sc.t_max, sc.n_paths, sc.seed) == (0.002, 3.0, 1234, 8)
    assert cfg.sim_config(t_max=9.0, n_paths=10).t_max == 9.0
    assert cfg.mc["lambda_window"] == (1.0, 3.0)
    # growth models start on the population scale
    assert cfg.start_state() == 0.75
    ou_path = tmp_path / "ou.cfg"
    ou_path.write_text("[model]\npreset = ou\nkind = drift\n"
                       "\n[montecarlo]\nx0 = 2.0\n", encoding="utf-8")
    assert load_config(str(ou_path)).start_state() == 2.0


def test_bad_lambda_window(tmp_path):
    path = _write(tmp_path, """
[model]
preset = logistic

[montecarlo]
lambda_window = 6, 2
""")
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert any("lambda_window" in p for p in exc.value.problems)


def test_custom_expression_through_ini(tmp_path):
    path = _write(tmp_path, """
[model]
preset = custom
kind = growth
expression = 2*z - z^2
gamma = 1
""")
    cfg = load_config(path)
    assert cfg.model.growth is not None
    assert cfg.model.growth.h(1.0) == pytest.approx(1.0)
    assert cfg.model.growth.h(2.0) == pytest.approx(0.0)


def test_run_commands_list(tmp_path):
    path = _write(tmp_path, """
[model]
preset = logistic

[run]
commands = check, spectrum yaglom
""")
    cfg = load_config(path)
    assert cfg.commands == ("check", "spectrum", "yaglom")
