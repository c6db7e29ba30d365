import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from rumorlab.cli import REPORT_COLUMNS, main
from rumorlab.config import ConfigError, load_config, parse_config, with_override

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

ORDER = {"ExtinctionAS": 0, "SurvivalPositive": 1, "SurvivalAS": 2}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def minimal():
    return json.loads((CONFIGS / "minimal.json").read_text())


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


# -- config parsing

@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.entries
    assert len({e.id for e in cfg.entries}) == len(cfg.entries)


def test_defaults_fill_in():
    cfg = parse_config(minimal())
    e = cfg.entries[0]
    assert e.protocol == "annealed"
    assert e.replicates == 500
    assert cfg.confidence == 0.95


def test_duplicate_ids_rejected():
    raw = minimal()
    raw["scenarios"].append(copy.deepcopy(raw["scenarios"][0]))
    with pytest.raises(ConfigError, match="unique"):
        parse_config(raw)


def test_unknown_law_parameter_is_a_schema_violation():
    raw = minimal()
    raw["scenarios"][0]["n_law"]["q"] = 0.3
    with pytest.raises(ConfigError, match="schema violation"):
        parse_config(raw)


def test_quenched_needs_an_env_seed():
    raw = minimal()
    raw["scenarios"][0]["protocol"] = "quenched"
    with pytest.raises(ConfigError, match="env_seed"):
        parse_config(raw)


def test_override_follows_dotted_paths():
    raw = minimal()
    out = with_override(raw, "n_law.p", 0.25)
    assert out["scenarios"][0]["n_law"]["p"] == 0.25
    assert raw["scenarios"][0]["n_law"]["p"] == 0.5
    assert with_override(raw, "horizon", 20.0)["scenarios"][0]["horizon"] == 20
    with pytest.raises(ConfigError):
        with_override(raw, "n_law.missing", 1.0)


# -- CLI exit statuses

def test_minimal_criteria_run(tmp_path):
    assert main(["criteria", "--config", str(CONFIGS / "minimal.json"), "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "report.csv")
    assert len(rows) == 1
    assert rows[0]["outcome"] == "SurvivalPositive"
    assert rows[0]["protocol"] == "none"
    with open(tmp_path / "report.csv", newline="") as fh:
        assert tuple(next(csv.reader(fh))) == REPORT_COLUMNS
    mirror = json.loads((tmp_path / "report.json").read_text())
    assert mirror["columns"] == list(REPORT_COLUMNS)
    assert mirror["rows"][0]["scenarioId"] == "line-firework-bernoulli"
    assert "wallClock" in mirror["rows"][0]


def test_firework_table_verdicts(tmp_path):
    assert main(["criteria", "--config", str(CONFIGS / "firework_regimes.json"), "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "report.csv")
    assert len(rows) == 4
    assert all(r["outcome"] == r["expected"] for r in rows)
    assert all(r["mismatch"] == "false" for r in rows)


def test_standing_assumption_violation_exits_one(tmp_path, capsys):
    raw = minimal()
    raw["scenarios"][0]["r_law"] = {"kind": "deterministic", "r": 0}
    assert main(["criteria", "--config", write(tmp_path, raw)]) == 1
    assert "standing assumption" in capsys.readouterr().err


def test_missing_config_exits_one(tmp_path, capsys):
    assert main(["criteria", "--config", str(tmp_path / "nope.json")]) == 1
    assert "not found" in capsys.readouterr().err


def test_invalid_json_exits_one(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{")
    assert main(["criteria", "--config", str(p)]) == 1


def test_schema_version_is_checked(tmp_path, capsys):
    raw = minimal()
    raw["schema_version"] = 2
    assert main(["criteria", "--config", write(tmp_path, raw)]) == 1
    assert "schema violation" in capsys.readouterr().err


def test_bad_overrides_exit_one(tmp_path):
    cfg = str(CONFIGS / "minimal.json")
    assert main(["criteria", "--config", cfg, "--seed-override", "-1"]) == 1
    assert main(["criteria", "--config", cfg, "--replicates-override", "0"]) == 1


def test_wrong_expectation_flags_mismatch(tmp_path, capsys):
    raw = minimal()
    raw["scenarios"][0]["expected"] = "ExtinctionAS"
    assert main(["criteria", "--config", write(tmp_path, raw), "--out-dir", str(tmp_path)]) == 2
    assert "MISMATCH line-firework-bernoulli" in capsys.readouterr().err
    assert read_rows(tmp_path / "report.csv")[0]["mismatch"] == "true"


def test_contradicting_simulation_flags_mismatch(tmp_path):
    # a decisive extinction verdict against a horizon short enough that most runs get through
    raw = minimal()
    sc = raw["scenarios"][0]
    sc.update(n_law={"kind": "deterministic", "k": 1}, r_law={"kind": "geometric", "q": 0.9}, horizon=3)
    sc.pop("expected")
    assert main(["simulate", "--config", write(tmp_path, raw), "--out-dir", str(tmp_path),
                 "--replicates-override", "200"]) == 2


# -- simulate, reproducibility and overrides

def test_simulate_is_byte_identical_on_rerun(tmp_path):
    args = ["simulate", "--config", str(CONFIGS / "minimal.json"), "--replicates-override", "100"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    row = read_rows(tmp_path / "a" / "report.csv")[0]
    assert row["trials"] == "100"
    assert float(row["wilsonLo"]) <= float(row["pointEstimate"]) <= float(row["wilsonHi"])


def test_seed_override_lands_in_the_report(tmp_path):
    args = ["simulate", "--config", str(CONFIGS / "minimal.json"), "--replicates-override", "50",
            "--seed-override", "99", "--out-dir", str(tmp_path)]
    assert main(args) == 0
    assert read_rows(tmp_path / "report.csv")[0]["masterSeed"] == "99"


def test_quenched_rows_record_the_environment(tmp_path):
    raw = minimal()
    raw["scenarios"][0].update(protocol="quenched", env_seed=12, replicates=100)
    assert main(["simulate", "--config", write(tmp_path, raw), "--out-dir", str(tmp_path)]) in (0, 2)
    row = read_rows(tmp_path / "report.csv")[0]
    assert row["envSeed"] == "12"
    assert row["protocol"] == "quenched(12)"


def test_oracle_command(tmp_path):
    assert main(["oracle", "--config", str(CONFIGS / "oracle_bounded.json"), "--out-dir", str(tmp_path),
                 "--replicates-override", "2000"]) == 0
    for row in read_rows(tmp_path / "report.csv"):
        assert float(row["wilsonLo"]) <= float(row["oracle"]) <= float(row["wilsonHi"])


def test_oracle_command_rejects_unbounded_radii(tmp_path, capsys):
    assert main(["oracle", "--config", str(CONFIGS / "minimal.json"), "--out-dir", str(tmp_path)]) == 1
    assert "bounded" in capsys.readouterr().err


# -- sweeps

def test_bernoulli_sweep_mc_nonincreasing(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "bernoulli_tree_sweep.json"), "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "sweep.csv")
    mcs = [float(r["mc"]) for r in rows]
    assert len(mcs) == 9
    assert all(a >= b - 1e-9 for a, b in zip(mcs, mcs[1:]))
    assert all(1.0 <= m <= float(r["Mc"]) for m, r in zip(mcs, rows))
    tsv = (tmp_path / "sweep_mc.tsv").read_text().splitlines()
    assert tsv[0] == "n_law.p\tmc"
    assert len(tsv) == 10


def test_offspring_sweep_changes_regime_monotonically(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "offspring_mean_sweep.json"), "--out-dir", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "report.csv")
    ranks = [ORDER[r["outcome"]] for r in rows]
    assert ranks == sorted(ranks)
    assert ranks[0] == 0 and ranks[-1] == 2
    mc = float(rows[0]["mc"])
    for r in rows:
        m = float(r["sweepValue"])
        if m < mc:
            assert r["outcome"] == "ExtinctionAS"
        elif mc < m < float(r["Mc"]):
            assert r["outcome"] == "SurvivalPositive"


def test_single_value_sweep_matches_plain_run(tmp_path):
    raw = minimal()
    raw["scenarios"][0]["n_law"]["p"] = 0.7
    assert main(["criteria", "--config", write(tmp_path, raw), "--out-dir", str(tmp_path / "run")]) == 0
    assert main(["sweep", "--config", str(CONFIGS / "minimal.json"), "--axis", "n_law.p", "--values", "0.7",
                 "--out-dir", str(tmp_path / "sweep")]) == 0
    a = read_rows(tmp_path / "run" / "report.csv")[0]
    b = read_rows(tmp_path / "sweep" / "report.csv")[0]
    for col in ("outcome", "criterionValue", "theoremTag", "horizonUsed"):
        assert a[col] == b[col]
    assert b["sweepAxis"] == "n_law.p" and b["sweepValue"] == "0.7"
    assert (tmp_path / "sweep" / "sweep.tsv").read_text().splitlines()[0] == "n_law.p\tcriterionValue"


def test_sweep_needs_axis_and_values(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "minimal.json"), "--out-dir", str(tmp_path)]) == 1
    assert main(["sweep", "--config", str(CONFIGS / "minimal.json"), "--axis", "n_law.p", "--values", "a,b",
                 "--out-dir", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rumorlab", "criteria", "--config", str(CONFIGS / "minimal.json"),
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "report.csv").exists()
