import json

import pytest

from scgan import cli
from scgan.config import parse_config
from scgan.errors import PrerequisiteError, StaleArtifactError, UsageError
from scgan.pipeline import MANIFEST, STAGES, run_all, run_stage

TINY = {
    "n_train": "256",
    "n_test": "128",
    "encoder.iterations": "20",
    "encoder.batch_size": "64",
    "clustering.K": "3",
    "mapper.iterations": "10",
    "mapper.batch_size": "32",
    "decoder.iterations": "10",
    "decoder.batch_size": "32",
    "eval.n_generate": "128",
    "plot.n_points": "64",
}
TINY_ARGS = [a for k, v in TINY.items() for a in ("--set", f"{k}={v}")]


def tiny(**extra):
    return parse_config(overrides={**TINY, **extra})


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    run_all(tiny(), out)
    return out


def test_manifest_lists_all_stages(full_run):
    manifest = json.loads((full_run / MANIFEST).read_text())
    assert list(manifest) == list(STAGES)
    for stage, entry in manifest.items():
        assert entry["stage"] == stage
        assert entry["files"] and entry["wall_time_s"] >= 0
        assert all((full_run / f).exists() for f in entry["files"])
    assert (full_run / "config.txt").read_text() == tiny().to_text()


def test_outputs_present(full_run):
    names = {p.name for p in full_run.iterdir()}
    for expected in ("train.csv", "encoder.scg", "encoder_loss.csv", "clusters.csv", "mapper_002.scg",
                     "decoder_mapping_network.scg", "history_single_gaussian.csv", "report.csv",
                     "fig_data.svg", "fig_generated_real_data_latents.svg"):
        assert expected in names
    assert (full_run / "encoder_loss.csv").read_text().startswith("iter,loss\n")
    assert (full_run / "history_mapping_network.csv").read_text().startswith("iter,mse,adv_rec,adv_gen\n")
    assert len((full_run / "report.csv").read_text().splitlines()) == 5


def test_rerun_is_skipped(full_run):
    before = (full_run / MANIFEST).read_text()
    assert not any(ran for _, ran in run_all(tiny(), full_run))
    assert (full_run / MANIFEST).read_text() == before


def test_force_reruns(full_run):
    assert run_stage("evaluate", tiny(), full_run, force=True)


def test_cluster_before_encoder(tmp_path):
    run_stage("data", tiny(), tmp_path)
    with pytest.raises(PrerequisiteError, match="encoder"):
        run_stage("cluster", tiny(), tmp_path)


def test_stale_upstream(tmp_path):
    run_stage("data", tiny(), tmp_path)
    run_stage("encoder", tiny(), tmp_path)
    with pytest.raises(StaleArtifactError):
        run_stage("cluster", tiny(**{"encoder.iterations": "21"}), tmp_path)


def test_downstream_change_keeps_upstream_fresh(tmp_path):
    run_stage("data", tiny(), tmp_path)
    run_stage("encoder", tiny(), tmp_path)
    changed = tiny(**{"decoder.lambda_x": "2"})
    assert not run_stage("encoder", changed, tmp_path)


def test_single_gaussian_needs_only_encoder(tmp_path):
    cfg = tiny(**{"decoder.modes": "single_gaussian,real_data_latents"})
    for stage in ("data", "encoder", "decoder", "evaluate"):
        run_stage(stage, cfg, tmp_path)
    text = (tmp_path / "report.csv").read_text()
    assert "mapping_network,absent" in text


def test_unknown_stage(tmp_path):
    with pytest.raises(UsageError):
        run_stage("train", tiny(), tmp_path)


def test_deleted_artifact_detected(tmp_path):
    run_stage("data", tiny(), tmp_path)
    run_stage("encoder", tiny(), tmp_path)
    (tmp_path / "encoder.scg").unlink()
    with pytest.raises(PrerequisiteError, match="encoder"):
        run_stage("cluster", tiny(), tmp_path)


# ---------------------------------------------------------------- cli


def test_cli_happy_path(tmp_path, capsys):
    assert cli.main(["data", "--out", str(tmp_path), *TINY_ARGS]) == 0
    assert capsys.readouterr().out == "data: done\n"
    assert cli.main(["data", "--out", str(tmp_path), *TINY_ARGS]) == 0
    assert capsys.readouterr().out == "data: up to date\n"


def test_cli_prerequisite_error(tmp_path, capsys):
    assert cli.main(["cluster", "--out", str(tmp_path), *TINY_ARGS]) == 2
    err = capsys.readouterr().err
    assert err.startswith("prerequisite-error: ") and "'data'" in err
    assert err.count("\n") == 1


def test_cli_config_error(tmp_path, capsys):
    assert cli.main(["data", "--out", str(tmp_path), "--set", "clustering.K=0"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config-error: clustering.K")


def test_cli_missing_config_file(tmp_path, capsys):
    assert cli.main(["data", "--out", str(tmp_path), "--config", str(tmp_path / "nope.cfg")]) == 2
    assert capsys.readouterr().err.startswith("io-error: ")


def test_cli_seed_flag(tmp_path):
    assert cli.main(["data", "--out", str(tmp_path), "--seed", "5", *TINY_ARGS]) == 0
    assert "seed = 5" in (tmp_path / "config.txt").read_text()


def test_cli_rejects_unknown_command():
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code != 0
