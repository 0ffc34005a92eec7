import json

import pytest

from triage import token_budget
from triage.cli import main
from triage.pipeline import PipelineConfig, manifest_json, run_pipeline
from triage.scenario import load_scenario, write_scenario
from triage.synth import evaluate_selection, generate, standard_planted_spec
from triage.tensor_io import read_bundle


def run_cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


def test_identity_pipeline(scenario_dir, tmp_path, capsys):
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--retention", 1.0, "--keyframes", 8, "--out", out) == 0
    assert capsys.readouterr().out.strip() == str(out)
    m = json.loads(out.read_text())
    assert m["keyframes"]["indices"] == list(range(8))
    assert m["tokens"]["final_source"] == list(range(8 * 12))
    assert m["cost"]["reduction_ratio"] == 0.0


def test_planted_frames_survive_bucketing(tmp_path):
    d = write_scenario(generate(standard_planted_spec(3)), tmp_path / "s")
    out = tmp_path / "m.json"
    rc = run_cli("run", "--scenario", d, "--keyframes", 4, "--buckets", 4, "--weights", "0,0,1", "--out", out)
    assert rc == 0
    m = json.loads(out.read_text())
    assert {2, 9} <= set(m["keyframes"]["indices"])
    scn = load_scenario(d)
    assert evaluate_selection(m, scn.ground_truth, scn.key_states)["frame_recall"] == 1.0


def test_half_retention_budget(scenario_dir, tmp_path):
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--retention", 0.5, "--keyframes", 3, "--buckets", 2, "--out", out) == 0
    m = json.loads(out.read_text())
    assert m["cost"]["tokens_after"] == round(0.5 * 3 * 12)
    assert m["cost"]["tokens_before"] == 8 * 12
    c = m["cost"]
    assert c["kv_bytes_after"] == 2 * 28 * 4 * 128 * 2 * 18
    assert c["attention_flops_proxy_after"] == 18**2


def test_manifest_is_byte_stable_and_sorted(scenario_dir, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"m{i}.json"
        run_cli("run", "--scenario", scenario_dir, "--out", out, "--keyframes", 5)
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert list(doc) == sorted(doc)
    for s in doc["keyframes"]["scores"]:
        assert float(format(s, ".9g")) == s


def test_stdout_manifest_when_no_out(scenario_dir, capsys):
    assert run_cli("run", "--scenario", scenario_dir, "--keyframes", 2) == 0
    assert json.loads(capsys.readouterr().out)["format"] == "triage-manifest"


def test_config_file_precedence(scenario_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"keyframes": 3, "lam": 0.9, "buckets": 3, "cost": {"layers": 2}}))
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--config", cfg, "--keyframes", 4, "--out", out) == 0
    m = json.loads(out.read_text())
    assert len(m["keyframes"]["indices"]) == 4
    assert m["config"]["lam"] == 0.9 and m["config"]["buckets"] == 3
    assert m["config"]["cost"]["layers"] == 2


def test_dump_intermediates(scenario_dir, tmp_path):
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--keyframes", 4, "--out", out, "--dump-intermediates") == 0
    d = tmp_path / "m.intermediates"
    m = json.loads(out.read_text())
    assert read_bundle(d / "keyframe_indices.trgb").array().tolist() == m["keyframes"]["indices"]
    assert read_bundle(d / "tokens.trgb").array().tolist() == m["tokens"]["final"]
    assert read_bundle(d / "s_frame.trgb").shape == (8,)
    side = json.loads((d / "tokens.json").read_text())
    assert side["core"] == m["tokens"]["core"] and len(side["frames"]) == 4


def test_missing_role_file_is_input_error(scenario_dir, tmp_path):
    (scenario_dir / "key_states.trgb").unlink()
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--out", out) == 2
    assert not out.exists()


def test_shape_mismatch_is_input_error(tmp_path, small_spec):
    scn = generate(small_spec)
    d = write_scenario(scn, tmp_path / "s")
    doc = json.loads((d / "scenario.json").read_text())
    doc["tokens_per_frame"] = 11
    (d / "scenario.json").write_text(json.dumps(doc))
    assert run_cli("run", "--scenario", d) == 2


def test_corrupted_bundle_exit_code(scenario_dir, tmp_path):
    path = scenario_dir / "attention.trgb"
    blob = bytearray(path.read_bytes())
    blob[0:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    assert run_cli("verify", "--scenario", scenario_dir) == 2
    assert run_cli("run", "--scenario", scenario_dir, "--out", tmp_path / "m.json") == 2


@pytest.mark.parametrize(
    "flags",
    [
        ["--weights", "0,0,0"],
        ["--weights", "1,2"],
        ["--retention", "1.5"],
        ["--keyframes", "99"],
        ["--core-ratio", "-0.1"],
        ["--lambda", "-1"],
        ["--total-budget", "100000"],
        ["--buckets", "0"],
    ],
)
def test_config_errors(scenario_dir, tmp_path, flags):
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--out", out, *flags) == 3
    assert not out.exists()


def test_bad_config_file(scenario_dir, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"keyframez": 3}')
    assert run_cli("run", "--scenario", scenario_dir, "--config", cfg) == 3


def test_internal_inconsistency_exit_code(scenario_dir, tmp_path, monkeypatch):
    def overlapping(core, per_frame, *a, **k):
        raise token_budget.ConsistencyError("core, seed and context token sets overlap")

    monkeypatch.setattr(token_budget, "assemble_selection", overlapping)
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--out", out) == 4
    assert not out.exists()


def test_failed_run_leaves_previous_manifest_untouched(scenario_dir, tmp_path):
    out = tmp_path / "m.json"
    assert run_cli("run", "--scenario", scenario_dir, "--out", out) == 0
    before = out.read_bytes()
    assert run_cli("run", "--scenario", scenario_dir, "--out", out, "--keyframes", 99) == 3
    assert out.read_bytes() == before
    assert [p.name for p in tmp_path.iterdir() if p.name.startswith(".m.json")] == []


def test_verify_random_small(capsys):
    assert run_cli("verify", "--random", 50, "--seed", 3) == 0
    out = capsys.readouterr().out
    assert "batched_mmr_vs_direct_eval: 50/50 PASS" in out
    assert "batched_vs_classic_mmr_overlap_lambda0: mean=1.0000" in out


def test_verify_scenario(scenario_dir, capsys):
    assert run_cli("verify", "--scenario", scenario_dir) == 0
    assert "RESULT: PASS" in capsys.readouterr().out


def test_synth_command(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(standard_planted_spec(9).to_dict()))
    out = tmp_path / "scn"
    assert run_cli("synth", "--spec", spec, "--out", out) == 0
    assert capsys.readouterr().out.strip() == str(out)
    scn = load_scenario(out)
    assert scn.ground_truth["planted_frames"] == [2, 9]
    spec.write_text(json.dumps({"rng_seed": 1, "planted_frames": [99]}))
    assert run_cli("synth", "--spec", spec, "--out", tmp_path / "bad") == 3


def test_usage_error_is_config_exit(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run"])
    assert exc.value.code == 3


def test_threads_env_does_not_change_manifest(scenario_dir, monkeypatch):
    scn = load_scenario(scenario_dir)
    texts = []
    for n in ("1", "8"):
        monkeypatch.setenv("TRIAGE_THREADS", n)
        texts.append(manifest_json(run_pipeline(scn, PipelineConfig(keyframes=6, buckets=3)).manifest))
    assert texts[0] == texts[1]
