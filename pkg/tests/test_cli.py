import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughmv import __version__
from roughmv.cli import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_VALIDATION,
    ResultTable,
    load_config,
    main,
    params_hash,
)
from roughmv.errors import ConfigError

FIG3_FILE = """
[model]
V0 = 0.02
kappa = 0.3
phi = 0.02
sigma = 0.3
rho = -0.7
theta = 0.4
"""

BASE = """
[model]
V0 = 0.04
kappa = 0.1
phi = 0.3
sigma = 0.03
rho = -0.7
theta = 0.6
r = 0.03
T = 1.0
x0 = 1.0
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--out", str(out)])
    return code, out


def _table(out, name):
    return ResultTable.from_csv((out / f"{name}.csv").read_text(), name)


def _col(table, name):
    return np.array([row[table.columns.index(name)] for row in table.rows], dtype=float)


# --------------------------------------------------------------------- tables


finite = st.floats(allow_nan=False, allow_infinity=True, width=64)


@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=20))
def test_csv_round_trip_is_lossless(rows):
    table = ResultTable("t", ["a", "b", "c"], rows, {"seed": 3})
    back = ResultTable.from_csv(table.to_csv())
    assert back.columns == table.columns
    assert all(x == y or (x != x and y != y) for r1, r2 in zip(back.rows, rows) for x, y in zip(r1, r2))
    assert back.to_csv() == table.to_csv()


def test_csv_round_trip_keeps_labels_and_nan():
    table = ResultTable("t", ["name", "x"], [["market", float("nan")], ["naive", -0.1]], {})
    back = ResultTable.from_csv(table.to_csv())
    assert back.rows[0][0] == "market" and math.isnan(back.rows[0][1]) and back.rows[1] == ["naive", -0.1]


def test_outputs_carry_metadata(tmp_path):
    code, out = _run(tmp_path, "frontier", "--config", _write(tmp_path, BASE))
    assert code == EXIT_OK
    meta = _table(out, "frontier").metadata
    assert {"params_hash", "seed", "version", "command"} <= set(meta)
    assert meta["version"] == __version__ and meta["seed"] == "none"


def test_params_hash_ignores_output_block():
    a = load_config(None, "fig4")
    b = load_config(None, "fig4")
    b["output"]["dir"] = "elsewhere"
    assert params_hash(a) == params_hash(b)
    b["model"]["theta"] = 0.7
    assert params_hash(a) != params_hash(b)


# --------------------------------------------------------------------- config


@pytest.mark.parametrize(
    "extra",
    [
        "[solver]\nfoo = 1\n",
        "[bogus]\nx = 1\n",
        "[solver]\nN = 'many'\n",
        "[kernel]\nkind = 'gaussian'\n",
        "[simulation]\nscheme = 'milstein'\nseed = 1\n",
    ],
)
def test_strict_config_rejects_bad_input(tmp_path, extra, capsys):
    cmd = "simulate" if "scheme" in extra else "frontier"
    code, _ = _run(tmp_path, cmd, "--config", _write(tmp_path, BASE + extra))
    assert code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_model_parameter_and_malformed_toml(tmp_path):
    code, _ = _run(tmp_path, "psi", "--config", _write(tmp_path, BASE.replace("sigma = 0.03\n", "")))
    assert code == EXIT_CONFIG
    code, _ = _run(tmp_path, "psi", "--config", _write(tmp_path, "[model\n"))
    assert code == EXIT_CONFIG
    with pytest.raises(ConfigError):
        load_config(None, "no-such-preset")


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["psi", "--format", "xml"])
    assert exc.value.code == EXIT_CONFIG
    assert main(["psi"]) == EXIT_CONFIG


def test_fig3_needs_user_parameters(tmp_path):
    code, _ = _run(tmp_path, "simulate", "--preset", "fig3", "--seed", "1")
    assert code == EXIT_CONFIG


# ------------------------------------------------------------------------ psi


def test_psi_fig1a_columns_negative(tmp_path):
    code, out = _run(tmp_path, "psi", "--preset", "fig1a")
    assert code == EXIT_OK
    table = _table(out, "psi")
    assert table.columns == ["t"] + [f"psi_alpha_{a}" for a in ("0.6", "0.7", "0.8", "0.9", "1.0")]
    vals = np.array(table.rows)[1:, 1:]
    assert np.all(vals < 0)


def test_psi_fig1b_not_monotone_in_alpha(tmp_path):
    code, out = _run(tmp_path, "psi", "--preset", "fig1b")
    assert code == EXIT_OK
    vals = np.array(_table(out, "psi").rows)[1:, 1:]
    increasing = np.all(np.diff(vals, axis=1) > 0, axis=1)
    decreasing = np.all(np.diff(vals, axis=1) < 0, axis=1)
    assert not np.all(increasing) and not np.all(decreasing)


def test_psi_degenerate_theta_gives_zeros(tmp_path):
    code, out = _run(tmp_path, "psi", "--config", _write(tmp_path, BASE.replace("theta = 0.6", "theta = 0.0")))
    assert code == EXIT_OK
    assert np.all(np.array(_table(out, "psi").rows)[:, 1] == 0.0)


def test_psi_explosion_exits_two_with_time(tmp_path, capsys):
    text = BASE.replace("theta = 0.6", "theta = 5.0").replace("sigma = 0.03", "sigma = 1.0").replace("rho = -0.7", "rho = -0.9")
    code, _ = _run(tmp_path, "psi", "--config", _write(tmp_path, text))
    assert code == EXIT_NUMERIC
    assert "blow-up near t=" in capsys.readouterr().err


# ------------------------------------------------------------------- strategy


def _strategy_columns(tmp_path, preset):
    code, out = _run(tmp_path, "strategy", "--preset", preset)
    assert code == EXIT_OK
    table = _table(out, "strategy")
    names = [c for c in table.columns if c.startswith("u")]
    return _col(table, "t"), np.column_stack([_col(table, c) for c in names])


def test_strategy_small_sigma_ordering(tmp_path):
    _, u = _strategy_columns(tmp_path, "fig2-small-sigma")
    assert np.all(np.diff(u, axis=1) > 0)


def test_strategy_zero_at_risk_free_target(tmp_path):
    text = BASE + "c_excess = 0.0\n[kernel]\nkind = 'fractional'\nalpha = 0.7\n"
    code, out = _run(tmp_path, "strategy", "--config", _write(tmp_path, text))
    assert code == EXIT_OK
    assert np.max(np.abs(_col(_table(out, "strategy"), "u"))) <= 1e-14


def test_strategy_rejects_infeasible_target(tmp_path):
    code, _ = _run(tmp_path, "strategy", "--config", _write(tmp_path, BASE + "c = 0.9\n"))
    assert code == EXIT_CONFIG


# ------------------------------------------------------------------- frontier


def test_frontier_fig4_ordering_and_quadratic_column(tmp_path):
    code, out = _run(tmp_path, "frontier", "--preset", "fig4")
    assert code == EXIT_OK
    table = _table(out, "frontier")
    var = np.column_stack([_col(table, c) for c in table.columns if c.startswith("var")])
    assert np.all(np.diff(var, axis=1) > 0)
    for c in (c for c in table.columns if c.startswith("quad")):
        q = _col(table, c)
        np.testing.assert_allclose(q, q[0], rtol=1e-12)
    m0 = _col(_table(out, "frontier_m0"), "M0")
    assert np.all(np.diff(m0) > 0)


def test_frontier_zero_row_at_risk_free_target(tmp_path):
    text = BASE + f"[experiment]\nc_grid = [{math.exp(0.03)!r}]\n"
    code, out = _run(tmp_path, "frontier", "--config", _write(tmp_path, text))
    assert code == EXIT_OK
    assert _col(_table(out, "frontier"), "var")[0] == pytest.approx(0.0, abs=1e-28)


def test_frontier_rejects_target_below_floor(tmp_path):
    code, _ = _run(tmp_path, "frontier", "--config", _write(tmp_path, BASE + "[experiment]\nc_grid = [0.9, 1.2]\n"))
    assert code == EXIT_CONFIG


# ------------------------------------------------------------------- simulate


SIM_SMALL = "[solver]\nN = 100\n[simulation]\nn_paths = 40\nn_steps = 50\nn_resamples = 100\n"


def test_simulate_is_deterministic(tmp_path):
    cfg = _write(tmp_path, FIG3_FILE + SIM_SMALL)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["simulate", "--preset", "fig3", "--config", cfg, "--seed", "5", "--out", str(out)]) == EXIT_OK
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_simulate_records_generated_seed(tmp_path, capsys):
    code, out = _run(tmp_path, "simulate", "--preset", "fig3", "--config", _write(tmp_path, FIG3_FILE + SIM_SMALL))
    assert code == EXIT_OK
    err = capsys.readouterr().err
    seed = err.split("seed=")[1].split()[0]
    assert _table(out, "simulate_validation").metadata["seed"] == seed


def test_simulate_zero_strategy(tmp_path):
    text = FIG3_FILE + SIM_SMALL + "u_zero = true\nseed = 2\n"
    code, out = _run(tmp_path, "simulate", "--preset", "fig3", "--config", _write(tmp_path, text))
    assert code == EXIT_OK
    X = _col(_table(out, "simulate_paths_market"), "X_0")
    assert X[-1] == pytest.approx(math.exp(0.01), rel=1e-14)


def test_simulate_second_investor(tmp_path):
    text = FIG3_FILE + SIM_SMALL + "seed = 3\n[investors.naive.kernel]\nkind = 'fractional'\nalpha = 1.0\n"
    code, out = _run(tmp_path, "simulate", "--preset", "fig3", "--config", _write(tmp_path, text))
    assert code == EXIT_OK
    table = _table(out, "simulate_validation")
    flags = {row[0]: row[-1] for row in table.rows}
    assert flags == {"market": 1, "naive": 0}
    assert (out / "simulate_bands_naive.csv").exists()


# ------------------------------------------------------------------- validate


def test_validate_preset_passes(tmp_path):
    code, out = _run(tmp_path, "validate", "--preset", "fig1a")
    assert code == EXIT_OK
    table = _table(out, "validate")
    assert all(row[3] == 1 for row in table.rows)


def test_validate_constant_kernel_has_oracle_rows(tmp_path):
    code, out = _run(tmp_path, "validate", "--config", _write(tmp_path, BASE))
    assert code == EXIT_OK
    rows = {row[0]: row for row in _table(out, "validate").rows}
    heston = [k for k in rows if k.startswith("heston_oracle")]
    assert len(heston) >= 3 and all(rows[k][3] == 1 for k in heston)


def test_validate_coarse_grid_fails(tmp_path, capsys):
    text = BASE + "[kernel]\nkind = 'fractional'\nalpha = 0.6\n[solver]\nN = 10\n"
    code, out = _run(tmp_path, "validate", "--config", _write(tmp_path, text))
    assert code == EXIT_VALIDATION
    assert "validation failed" in capsys.readouterr().err
    assert any(row[3] == 0 for row in _table(out, "validate").rows)


# ----------------------------------------------------------- output and env


def test_json_output_and_env_overrides(tmp_path, monkeypatch):
    out = tmp_path / "env_out"
    monkeypatch.setenv("ROUGHMV_OUT", str(out))
    monkeypatch.setenv("ROUGHMV_THREADS", "2")
    assert main(["psi", "--preset", "fig1a", "--format", "json"]) == EXIT_OK
    import json

    payload = json.loads((out / "psi.json").read_text())
    assert payload["columns"][0] == "t" and len(payload["data"]) == 501
    monkeypatch.setenv("ROUGHMV_THREADS", "lots")
    assert main(["psi", "--preset", "fig1a"]) == EXIT_CONFIG


def test_threads_do_not_change_results(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    assert main(["psi", "--preset", "fig1a", "--out", str(a), "--threads", "1"]) == EXIT_OK
    assert main(["psi", "--preset", "fig1a", "--out", str(b), "--threads", "3"]) == EXIT_OK
    assert (a / "psi.csv").read_bytes() == (b / "psi.csv").read_bytes()
    assert main(["psi", "--preset", "fig1a", "--out", str(b), "--threads", "0"]) == EXIT_CONFIG


def test_stdout_output(capsys):
    assert main(["psi", "--preset", "fig1a", "--out", "-"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0].startswith("# command: psi")


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "roughmv.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
