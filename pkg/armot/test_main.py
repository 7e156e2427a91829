"""
Testy wiersza poleceń: manifest, katalog wyjściowy, kody wyjścia i pełny przebieg.
"""

import pytest

from armot.config import read_config
from armot.main import MANIFEST_FILE, SNAPSHOT_FILE, main

SIMULATE = """
n_scenarios = 2
n_frames = 6
min_objects = 2
max_objects = 3
occlusion_prob = 0.0
d_det = 12  # długość zapytań wyroczni
"""

TRAIN = """
d_img = 8
d_lm = 16
d_det = 12
capacity = 32
layers = 1
heads = 2
ffn = 32
max_len = 256
dropout = 0.0
epochs = 1
batch_size = 2
clip_schedule = (2,)
gap_range = (0, 1)
"""


def _read_summary(path):
    return dict(line.split("=", 1) for line in path.read_text(encoding="utf-8").splitlines())


@pytest.fixture
def simulated(tmp_path):
    config = tmp_path / "simulate.cfg"
    config.write_text(SIMULATE, encoding="utf-8")
    assert main(["simulate", "--config", str(config), "--seed", "4", "--out", str(tmp_path / "data")]) == 0
    return tmp_path / "data"


def test_simulate_writes_videos_and_manifest(simulated):
    assert sorted(p.name for p in simulated.iterdir()) == [SNAPSHOT_FILE, MANIFEST_FILE, "video_000", "video_001"]
    for video in ("video_000", "video_001"):
        assert (simulated / video / "gt" / "gt.txt").is_file()
        assert (simulated / video / "seqinfo.ini").is_file()
    manifest = read_config(simulated / MANIFEST_FILE)
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 4
    assert manifest["config"]["n_frames"] == 6
    assert set(manifest["outputs"]) == {"video_000", "video_001", "config"}
    assert read_config(simulated / SNAPSHOT_FILE)["seed"] == 4


def test_refuses_non_empty_output(simulated, tmp_path, capsys):
    code = main(["simulate", "--out", str(simulated)])
    assert code == 1
    assert "nie jest pusty" in capsys.readouterr().err
    assert main(["simulate", "--out", str(simulated), "--overwrite"]) == 0


def test_eval_of_ground_truth_against_itself(simulated, tmp_path):
    gt = simulated / "video_000" / "gt" / "gt.txt"
    assert main(["eval", "--gt", str(gt), "--pred", str(gt), "--out", str(tmp_path / "eval")]) == 0
    summary = _read_summary(tmp_path / "eval" / "summary.txt")
    assert summary["HOTA"] == "1.000000"
    assert summary["MOTA"] == "1.000000"
    assert summary["IDF1"] == "1.000000"
    assert summary["FP"] == summary["FN"] == summary["IDSW"] == "0"
    manifest = read_config(tmp_path / "eval" / MANIFEST_FILE)
    assert manifest["inputs"]["n_frames"] == "6"
    assert (tmp_path / "eval" / "hota.png").is_file()


def test_eval_rejects_predictions_past_last_frame(simulated, tmp_path, capsys):
    gt = simulated / "video_000" / "gt" / "gt.txt"
    pred = tmp_path / "pred.txt"
    pred.write_text("7,1,0,0,4,4,1,-1,-1,-1\n", encoding="utf-8")
    assert main(["eval", "--gt", str(gt), "--pred", str(pred), "--out", str(tmp_path / "eval")]) == 1
    assert "klatki 7" in capsys.readouterr().err


def test_missing_checkpoint(tmp_path, capsys):
    code = main(["track", "--checkpoint", str(tmp_path / "none.pt"), "--video", str(tmp_path),
                 "--out", str(tmp_path / "track")])
    assert code == 1
    assert "checkpoint not found" in capsys.readouterr().err
    assert not (tmp_path / "track" / MANIFEST_FILE).exists()


def test_unknown_config_key(tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("n_scenarios = 2\nspeed_of_light = 3\n", encoding="utf-8")
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "out")]) == 1
    assert "speed_of_light" in capsys.readouterr().err


def test_train_track_eval_pipeline(simulated, tmp_path):
    config = tmp_path / "train.cfg"
    config.write_text(TRAIN, encoding="utf-8")
    train_out, track_out, eval_out = tmp_path / "train", tmp_path / "track", tmp_path / "eval"
    assert main(["train", "--config", str(config), "--data", str(simulated), "--out", str(train_out)]) == 0
    assert {"checkpoint.pt", "train_log.txt", "loss.png", MANIFEST_FILE} <= {p.name for p in train_out.iterdir()}

    video = simulated / "video_001"
    assert main(["track", "--checkpoint", str(train_out / "checkpoint.pt"), "--video", str(video),
                 "--tau-loss", "3", "--out", str(track_out)]) == 0
    snapshot = read_config(track_out / SNAPSHOT_FILE)
    assert snapshot["tau_loss"] == 3 and snapshot["capacity"] == 32

    assert main(["eval", "--gt", str(video / "gt" / "gt.txt"), "--pred", str(track_out / "tracks.txt"),
                 "--out", str(eval_out)]) == 0
    summary = _read_summary(eval_out / "summary.txt")
    # wyrocznia bez szumu: każdy obiekt gt jest wykryty dokładnie
    assert summary["FN"] == "0" and summary["FP"] == "0"
    assert 0.0 <= float(summary["HOTA"]) <= 1.0


def test_eval_does_not_clip_boxes_outside_image(tmp_path):
    gt_dir = tmp_path / "seq" / "gt"
    gt_dir.mkdir(parents=True)
    # w pikselach IoU = 15 / 35 < 0.5; po przycięciu do obrazu byłoby 10 / 15
    (gt_dir / "gt.txt").write_text("1,1,-20,0,30,20,1,-1,-1,-1\n", encoding="utf-8")
    pred = tmp_path / "pred.txt"
    pred.write_text("1,1,-5,0,20,20,1,-1,-1,-1\n", encoding="utf-8")
    assert main(["eval", "--gt", str(gt_dir / "gt.txt"), "--pred", str(pred), "--out", str(tmp_path / "eval")]) == 0
    summary = _read_summary(tmp_path / "eval" / "summary.txt")
    assert summary["TP"] == "0"
    assert summary["FN"] == "1" and summary["FP"] == "1"
