import json

import pytest
from PIL import Image
from typer.testing import CliRunner

from bido.main import app
from bido.models.enums import IndexSectionEnum
from bido.services.checkpoint import CheckpointServices
from bido.services.corpus import MANIFEST_NAME
from bido.services.training import CHECKPOINT_NAME, HISTORY_NAME
from bido.version import __version__

runner = CliRunner()

SMALL = """\
width=32
height=32
dex_channels=4,8
xml_channels=4,8
k=4
l=8
h=8
rank=2
dex_mlp_hidden=8
batch_size=4
epochs=1
seed=0
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "small.env"
    config.write_text(SMALL)
    corpus = root / "corpus"
    result = runner.invoke(
        app, ["gen-corpus", "--out", str(corpus), "--n", "12", "--config", str(config)]
    )
    assert result.exit_code == 0, result.output
    return root, config, corpus


@pytest.fixture(scope="module")
def trained(workspace):
    root, config, corpus = workspace
    out = root / "run"
    result = runner.invoke(
        app,
        ["train", "--corpus", str(corpus), "--out", str(out), "--config", str(config)],
    )
    assert result.exit_code == 0, result.output
    return out, json.loads(result.stdout)


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


class TestConvert:
    def test_dex_to_png(self, tmp_path, dex_bytes):
        source = tmp_path / "classes.dex"
        source.write_bytes(dex_bytes)
        target = tmp_path / "classes.png"
        result = runner.invoke(
            app, ["convert", str(source), "-o", str(target), "--width", "16", "--height", "8"]
        )
        assert result.exit_code == 0, result.output
        with Image.open(target) as image:
            assert image.size == (16, 8)
            assert image.mode == "RGB"

    def test_directory_of_manifests(self, tmp_path, xml_bytes):
        for name in ("a", "b"):
            (tmp_path / f"{name}.xml").write_bytes(xml_bytes)
        out = tmp_path / "images"
        result = runner.invoke(app, ["convert", str(tmp_path), "--kind", "xml", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert sorted(path.name for path in out.iterdir()) == ["a.xml.png", "b.xml.png"]

    def test_bad_magic_is_input_error(self, tmp_path):
        source = tmp_path / "fake.dex"
        source.write_bytes(b"\x00" * 200)
        result = runner.invoke(app, ["convert", str(source)])
        assert result.exit_code == 2

    def test_missing_input_is_io_error(self, tmp_path):
        result = runner.invoke(app, ["convert", str(tmp_path / "absent.dex")])
        assert result.exit_code == 3

    def test_unknown_config_key_is_input_error(self, tmp_path, dex_bytes):
        source = tmp_path / "classes.dex"
        source.write_bytes(dex_bytes)
        config = tmp_path / "bad.env"
        config.write_text("colour=red\n")
        result = runner.invoke(app, ["convert", str(source), "--config", str(config)])
        assert result.exit_code == 2


class TestCorpusAndTraining:
    def test_gen_corpus_layout(self, workspace):
        _, _, corpus = workspace
        assert (corpus / MANIFEST_NAME).is_file()
        lines = (corpus / MANIFEST_NAME).read_text().splitlines()
        assert len(lines) == 12
        assert {json.loads(line)["label"] for line in lines} == {0, 1}

    def test_bad_transform_is_input_error(self, tmp_path):
        result = runner.invoke(
            app, ["gen-corpus", "--out", str(tmp_path), "--n", "2", "--transforms", "shuffle"]
        )
        assert result.exit_code == 2

    def test_train_writes_outputs(self, trained):
        out, summary = trained
        assert (out / CHECKPOINT_NAME).is_file()
        assert len((out / HISTORY_NAME).read_text().splitlines()) == 1
        assert summary["epochs"] == 1
        assert summary["split"] == {"train": 10, "val": 1, "test": 1}

    def test_eval_report(self, workspace, trained, tmp_path):
        _, _, corpus = workspace
        out, _ = trained
        plot = tmp_path / "confusion.png"
        result = runner.invoke(
            app,
            [
                "eval",
                "--model",
                str(out / CHECKPOINT_NAME),
                "--corpus",
                str(corpus),
                "--plot",
                str(plot),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["total"] == 12
        assert report["correct_predictions"] + report["incorrect_predictions"] == 12
        assert plot.is_file()

    def test_eval_missing_corpus(self, trained, tmp_path):
        out, _ = trained
        result = runner.invoke(
            app,
            ["eval", "--model", str(out / CHECKPOINT_NAME), "--corpus", str(tmp_path / "none")],
        )
        assert result.exit_code == 3

    def test_eval_corrupt_checkpoint(self, workspace, trained, tmp_path):
        _, _, corpus = workspace
        out, _ = trained
        model = tmp_path / CHECKPOINT_NAME
        model.write_bytes(b"garbage")
        sidecar = CheckpointServices.sidecar_path(out / CHECKPOINT_NAME)
        CheckpointServices.sidecar_path(model).write_text(sidecar.read_text())
        result = runner.invoke(app, ["eval", "--model", str(model), "--corpus", str(corpus)])
        assert result.exit_code == 2


class TestInspect:
    def test_json_report(self, tmp_path, dex_bytes):
        source = tmp_path / "classes.dex"
        source.write_bytes(dex_bytes)
        result = runner.invoke(app, ["inspect", str(source), "--json"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.stdout)
        assert report["header"]["file_size"] == len(dex_bytes)
        assert {span["section"] for span in report["spans"]} == {
            section.value for section in IndexSectionEnum
        }
        assert report["spectrum"] is None

    def test_text_report(self, tmp_path, dex_bytes):
        source = tmp_path / "classes.dex"
        source.write_bytes(dex_bytes)
        result = runner.invoke(app, ["inspect", str(source)])
        assert result.exit_code == 0, result.output
        assert "method_ids" in result.stdout

    def test_spectrum(self, workspace, trained, tmp_path, dex_bytes, xml_bytes):
        out, _ = trained
        source, xml = tmp_path / "classes.dex", tmp_path / "AndroidManifest.xml"
        source.write_bytes(dex_bytes)
        xml.write_bytes(xml_bytes)
        result = runner.invoke(
            app,
            [
                "inspect",
                str(source),
                "--json",
                "--model",
                str(out / CHECKPOINT_NAME),
                "--xml",
                str(xml),
            ],
        )
        assert result.exit_code == 0, result.output
        spectrum = json.loads(result.stdout)["spectrum"]
        assert spectrum["rank"] == 2
        assert (spectrum["rows"], spectrum["cols"]) == (8, 8)
        assert spectrum["singular_values"] == sorted(spectrum["singular_values"], reverse=True)

    def test_model_without_manifest(self, trained, tmp_path, dex_bytes):
        out, _ = trained
        source = tmp_path / "classes.dex"
        source.write_bytes(dex_bytes)
        result = runner.invoke(
            app, ["inspect", str(source), "--model", str(out / CHECKPOINT_NAME)]
        )
        assert result.exit_code == 2

    def test_not_a_dex(self, tmp_path, xml_bytes):
        source = tmp_path / "AndroidManifest.xml"
        source.write_bytes(xml_bytes)
        result = runner.invoke(app, ["inspect", str(source)])
        assert result.exit_code == 2


class TestExperimentCommands:
    def test_sweep_k(self, workspace, tmp_path):
        _, config, _ = workspace
        output = tmp_path / "sweep.json"
        result = runner.invoke(
            app,
            [
                "sweep-k",
                "--ks",
                "2,4",
                "--n",
                "12",
                "--seeds",
                "0",
                "--config",
                str(config),
                "-o",
                str(output),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(output.read_text())
        assert report == json.loads(result.stdout)
        assert [row["token_count"] for row in report["rows"]] == [3, 5]

    def test_bad_fusion_name(self, workspace):
        _, config, _ = workspace
        result = runner.invoke(
            app, ["compare-fusion", "--methods", "ops,bilinear", "--config", str(config)]
        )
        assert result.exit_code == 2

    def test_bad_drift_level(self, workspace):
        _, config, _ = workspace
        result = runner.invoke(app, ["drift", "--levels", "0,far", "--config", str(config)])
        assert result.exit_code == 2

    def test_unknown_robustness_scenario(self, workspace):
        _, config, _ = workspace
        result = runner.invoke(
            app, ["robustness", "--scenarios", "lab,field", "--config", str(config)]
        )
        assert result.exit_code == 2

    def test_declared_dex_shape_mismatch(self, workspace, tmp_path):
        _, config, _ = workspace
        bad = tmp_path / "shape.env"
        bad.write_text(config.read_text() + "dex_feature_shape=9,9,8\n")
        result = runner.invoke(app, ["ablation", "--config", str(bad)])
        assert result.exit_code == 2
