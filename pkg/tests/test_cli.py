"""Command-line parsing, config merging, and the two main() entry modes."""

import json
import os

import pytest

from predfuzz.cli import ABLATIONS, main, parse_config
from predfuzz.program import GenerationConfig
from predfuzz.reporting import (
    CampaignReport,
    CycleReport,
    REPORT_VERSION,
    emit_report,
)


def _emit_fake_report(out_dir, ttr, seed=0, budget=1000):
    cycle = CycleReport(cycle=1, execs=ttr, transitions=ttr - 1, new_paths=1,
                        queue_size=2, rseed=1, prseed=0.5, ar=0.1,
                        global_eff=0.2, dyn_loss=1.0, policy_v_loss=0.1,
                        policy_q_loss=0.1, policy_objective=0.1, aapp=0.9,
                        aapr=0.9, target_reached=True)
    report = CampaignReport(version=REPORT_VERSION, rng_seed=seed,
                            config={"budget_execs": budget}, reached=True,
                            ttr_execs=ttr, ttr_wall=0.1, total_execs=ttr,
                            total_wall=0.2, queue_size=2, favored_count=1,
                            cycles=[cycle])
    emit_report(report, out_dir)


# ----------------------------------------------------------------- parsing


def test_defaults_without_flags():
    cfg = parse_config([])
    assert cfg.gamma == 0.8
    assert cfg.k == 4
    assert cfg.ensemble_size == 6
    assert cfg.policy_lr == 0.005
    assert cfg.train_epochs == 500
    assert cfg.budget_execs == 200_000
    assert cfg.cycle_execs == 20_000
    assert cfg.rng_seed == 0
    assert not (cfg.ablate_dynamics or cfg.ablate_policy or cfg.ablate_optimizer)


def test_flags_map_onto_config_fields():
    cfg = parse_config(["--program", "prog.json", "--target", "7",
                        "--budget-execs", "1000", "--cycle-execs", "100",
                        "--gamma", "0.5", "--k", "2", "--ensemble", "3",
                        "--seed", "9", "--out", "outdir"])
    assert cfg.program_path == "prog.json"
    assert cfg.target_block == 7
    assert cfg.budget_execs == 1000
    assert cfg.cycle_execs == 100
    assert cfg.gamma == 0.5
    assert cfg.k == 2
    assert cfg.ensemble_size == 3
    assert cfg.rng_seed == 9
    assert cfg.out_dir == "outdir"


def test_range_errors_have_distinct_messages():
    with pytest.raises(ValueError, match="gamma"):
        parse_config(["--gamma", "1.5"])
    with pytest.raises(ValueError, match="k must"):
        parse_config(["--k", "0"])
    with pytest.raises(ValueError):
        parse_config(["--bogus"])


def test_config_file_beats_defaults_and_flags_beat_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"k": 2, "gamma": 0.5, "rng_seed": 11}))
    cfg = parse_config(["--config", str(path)])
    assert (cfg.k, cfg.gamma, cfg.rng_seed) == (2, 0.5, 11)
    cfg = parse_config(["--config", str(path), "--k", "4"])
    assert (cfg.k, cfg.gamma) == (4, 0.5)


def test_config_file_rejects_unknown_keys_and_non_objects(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config(["--config", str(bad)])
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        parse_config(["--config", str(arr)])


def test_generate_parameter_list():
    cfg = parse_config(["--generate",
                        "blocks=8,gates=1,hardness=0.5,seed=3,"
                        "max_input_len=16,loop_arms=false,two_byte_gates=true"])
    assert cfg.generate == GenerationConfig(
        blocks=8, gates=1, hardness=0.5, seed=3, max_input_len=16,
        loop_arms=False, two_byte_gates=True)
    with pytest.raises(ValueError, match="unknown --generate key"):
        parse_config(["--generate", "foo=1"])
    with pytest.raises(ValueError, match="key=value"):
        parse_config(["--generate", "blocks"])


def test_generate_block_in_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"generate": {"blocks": 8, "gates": 0}}))
    cfg = parse_config(["--config", str(path)])
    assert cfg.generate == GenerationConfig(blocks=8, gates=0)


def test_ablation_tokens_flip_the_right_switches():
    assert set(ABLATIONS) == {"vee", "rlf", "fo", "all"}
    cases = {
        "vee": (True, False, False),
        "rlf": (False, True, False),
        "fo": (False, False, True),
        "all": (True, True, True),
    }
    for token, expect in cases.items():
        cfg = parse_config(["--ablate", token])
        got = (cfg.ablate_dynamics, cfg.ablate_policy, cfg.ablate_optimizer)
        assert got == expect, token
    cfg = parse_config(["--ablate", "vee", "--ablate", "fo"])
    assert (cfg.ablate_dynamics, cfg.ablate_policy, cfg.ablate_optimizer) \
        == (True, False, True)
    with pytest.raises(ValueError):
        parse_config(["--ablate", "everything"])


# -------------------------------------------------------------------- main


def test_main_runs_a_generated_campaign(tmp_path, capsys):
    out = str(tmp_path / "run")
    code = main(["--generate", "blocks=4,gates=0", "--budget-execs", "50",
                 "--cycle-execs", "50", "--seed", "1", "--out", out])
    captured = capsys.readouterr()
    assert code == 0
    assert "reached=yes" in captured.out
    assert "ttr_execs=1" in captured.out
    assert f"report written to {out}" in captured.out
    assert os.path.exists(os.path.join(out, "summary.json"))
    assert os.path.exists(os.path.join(out, "campaign.csv"))


def test_main_reports_errors_on_stderr(tmp_path, capsys):
    assert main(["--gamma", "1.5"]) == 2
    assert capsys.readouterr().err.startswith("error:")
    assert main(["--program", str(tmp_path / "missing.json"),
                 "--budget-execs", "1"]) == 2
    assert "error:" in capsys.readouterr().err


def test_main_compare_mode(tmp_path, capsys):
    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    for i, ttr in enumerate((100, 200, 300)):
        _emit_fake_report(str(dir_a / f"run{i}"), ttr, seed=i)
    for i, ttr in enumerate((400, 500, 600)):
        _emit_fake_report(str(dir_b / f"run{i}"), ttr, seed=i)
    assert main(["--compare", str(dir_a), str(dir_b)]) == 0
    out = capsys.readouterr().out
    assert "speedup" in out
    assert "A12" in out
    assert "p-value" in out


def test_main_compare_needs_three_repeats(tmp_path, capsys):
    dir_a = tmp_path / "a"
    dir_b = tmp_path / "b"
    _emit_fake_report(str(dir_a / "run0"), 100)
    for i, ttr in enumerate((400, 500, 600)):
        _emit_fake_report(str(dir_b / f"run{i}"), ttr)
    assert main(["--compare", str(dir_a), str(dir_b)]) == 2
    assert "error:" in capsys.readouterr().err
