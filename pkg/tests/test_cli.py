import json

import numpy as np
import pytest

from copekit.cli import main
from copekit.synth import build_demo_dataset

CONFIG_FLAGS = [
    "--sample-rate", "16000", "--channels", "24", "--f-max", "7000",
    "--frame-size", "512", "--support-ms", "400", "--window-s", "1.5", "--hop-s", "0.5",
]


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    build_demo_dataset(out, rate=16000, seed=3, protos_per_class=2,
                       train_per_class=4, test_per_class=2, snr_db=20.0)
    return out


def run(args):
    return main([str(a) for a in args])


def test_full_pipeline(demo, tmp_path):
    bank = tmp_path / "bank.txt"
    assert run(["configure", demo / "prototypes" / "protos.csv", "--out", bank] + CONFIG_FLAGS) == 0
    assert bank.exists()

    mix_dir = tmp_path / "mixed"
    assert run(["mix", demo / "plan.csv", "--out-dir", mix_dir]) == 0
    mixed_wavs = sorted(mix_dir.glob("*.wav"))
    assert len(mixed_wavs) == 1
    stream = mixed_wavs[0]
    stream_truth = stream.with_suffix(".csv")

    # training features: per-window rows over the train scene, labeled from truth
    train_manifest = tmp_path / "train.csv"
    train_scene = demo / "train" / "train_scene.wav"
    train_truth = demo / "train" / "train_scene.csv"
    train_manifest.write_text(f"path,truth\n{train_scene},{train_truth}\n")
    features = tmp_path / "features.csv"
    assert run(
        ["extract", train_manifest, "--bank", bank, "--out", features, "--windows",
         "--label-from-truth"] + CONFIG_FLAGS
    ) == 0
    text = features.read_text().splitlines()
    assert text[0].startswith("path,label,start_s,end_s,")
    assert len(text) > 10

    model = tmp_path / "model.txt"
    assert run(["train", features, "--out", model]) == 0

    records = tmp_path / "records.csv"
    assert run(
        ["detect", stream, "--bank", bank, "--model", model, "--out", records] + CONFIG_FLAGS
    ) == 0
    assert len(records.read_text().splitlines()) > 1

    metrics = tmp_path / "metrics.json"
    det = tmp_path / "det.csv"
    assert run(
        ["evaluate", records, stream_truth, "--out", metrics, "--det", det]
    ) == 0
    payload = json.loads(metrics.read_text())
    assert set(payload["rates"]) == {"rr", "er", "mdr", "fpr"}
    assert payload["rates"]["rr"] is not None and payload["rates"]["rr"] >= 0.5
    assert det.exists() and det.with_suffix(".svg").exists()


def test_sweep_command(demo, tmp_path):
    scenes = tmp_path / "scenes.csv"
    train_scene = demo / "train" / "train_scene.wav"
    train_truth = demo / "train" / "train_scene.csv"
    # two folds pointing at the same scene: plumbing check only
    scenes.write_text(
        "fold,wav,truth\n"
        f"0,{train_scene},{train_truth}\n"
        f"1,{train_scene},{train_truth}\n"
    )
    table = tmp_path / "table.csv"
    assert run(
        ["sweep", scenes, "--param", "sigma0", "--values", "3,5", "--out", table,
         "--protos-per-class", "1"] + CONFIG_FLAGS
    ) == 0
    lines = table.read_text().splitlines()
    assert lines[0] == "sigma0,er,er_nb_std,fpr,fpr_nb_std"
    assert len(lines) == 3


def test_silent_prototype_exit_code(tmp_path):
    from copekit.audio_io import AudioClip, write_wav

    silent = tmp_path / "silent.wav"
    write_wav(silent, AudioClip(np.zeros(16000), 16000))
    manifest = tmp_path / "protos.csv"
    manifest.write_text(f"path,label\n{silent},quiet\n")
    code = run(["configure", manifest, "--out", tmp_path / "bank.txt"] + CONFIG_FLAGS)
    assert code == 3


def test_missing_file_exit_code(tmp_path):
    code = run(["detect", tmp_path / "missing.wav", "--bank", tmp_path / "nope.txt",
                "--model", tmp_path / "nope2.txt", "--out", tmp_path / "r.csv"])
    assert code == 3


def test_bad_parameter_exit_code(demo, tmp_path):
    code = run(
        ["configure", demo / "prototypes" / "protos.csv", "--out", tmp_path / "b.txt",
         "--sample-rate", "16000", "--f-max", "99999"]
    )
    assert code == 2


def test_dump_config_roundtrip(demo, tmp_path):
    from copekit.config import load_config

    dumped = tmp_path / "effective.json"
    bank = tmp_path / "bank.txt"
    assert run(
        ["configure", demo / "prototypes" / "protos.csv", "--out", bank,
         "--dump-config", dumped] + CONFIG_FLAGS
    ) == 0
    cfg = load_config(dumped)
    assert cfg.frontend_params.sample_rate == 16000
    assert cfg.cope.support_ms == 400.0
