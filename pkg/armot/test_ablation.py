"""
Testy zestawów ablacji.
"""

import pytest

from armot.ablation import (
    ALPHA_GRID, TAU_LOSS_GRID, AblationRow, ablate, eval_suite_config, format_summary, format_table,
    suite_variants, write_ablation,
)
from armot.errors import ConfigError
from armot.inference import InferConfig
from armot.metrics import EvalReport
from armot.model import ModelConfig
from armot.simdata import OracleConfig, SuiteConfig
from armot.trainer import TrainConfig

MODEL = ModelConfig(d_img=8, d_lm=16, d_det=12, capacity=64, layers=1, heads=2, ffn=32, max_len=512,
                    dropout=0.0, n_bins=20)
TRAIN = TrainConfig(epochs=1, batch_size=2, clip_schedule=(2,), gap_range=(0, 1), lr=1e-3)
SUITE = SuiteConfig(n_scenarios=2, n_frames=8, min_objects=2, max_objects=3, occlusion_prob=0.3, max_occlusion=2)
ORACLE = OracleConfig(d_det=12)


def test_tauloss_variants():
    variants = suite_variants("tauloss", InferConfig(mode="tmf"))
    assert [v.label for v in variants] == [f"tauloss_{t}" for t in TAU_LOSS_GRID]
    assert {v.model for v in variants} == {()}
    assert all(v.infer.mode == "window" for v in variants)


def test_tmf_variants_use_window_one_and_memory():
    window, tmf = suite_variants("tmf", InferConfig())
    assert (window.label, window.infer.window, window.infer.mode) == ("window_t1", 1, "window")
    assert tmf.infer.mode == "tmf" and dict(tmf.model)["use_tmf"]


def test_alpha_variants_use_box_tokens():
    variants = suite_variants("alpha", InferConfig())
    assert [dict(v.model)["alpha"] for v in variants] == list(ALPHA_GRID)
    assert all(dict(v.model)["token_mode"] == "box" for v in variants)


def test_unknown_suite():
    with pytest.raises(ConfigError):
        suite_variants("speed", InferConfig())


def test_held_out_suite():
    held_out = eval_suite_config("tauloss", SUITE, 3)
    assert (held_out.n_scenarios, held_out.seed) == (3, SUITE.seed + 1)
    assert held_out.occlusion_prob == 0.8 and held_out.max_occlusion == 6
    assert eval_suite_config("raa", SUITE, 3).occlusion_prob == SUITE.occlusion_prob


def _rows():
    return [AblationRow("raa_on", EvalReport(mota=0.5, hota=0.25, tp=4)),
            AblationRow("raa_off", EvalReport(mota=0.75, hota=0.5, idsw=2), id_accuracy=0.875)]


def test_format_table_and_summary():
    table = format_table(_rows()).splitlines()
    assert table[0].split() == ["wariant", "HOTA", "DetA", "AssA", "MOTA", "IDF1", "IDSW", "acc"]
    assert table[2].split()[0] == "raa_on" and table[2].split()[-1] == "-"
    assert table[3].split()[-1] == "0.8750"
    summary = format_summary(_rows()).splitlines()
    assert "raa_on.HOTA=0.250000" in summary
    assert "raa_on.TP=4" in summary
    assert "raa_off.IDSW=2" in summary
    assert summary[-1] == "raa_off.ID_ACC=0.875000"


def test_write_ablation(tmp_path):
    paths = write_ablation(_rows(), tmp_path, "raa")
    assert sorted(p.name for p in paths.values()) == ["ablation.png", "ablation.txt", "summary.txt"]
    assert all(p.is_file() for p in paths.values())


def test_tauloss_suite_trains_once():
    rows = ablate("tauloss", MODEL, TRAIN, InferConfig(capacity=MODEL.capacity), SUITE, ORACLE, n_eval=1)
    assert [row.label for row in rows] == [f"tauloss_{t}" for t in TAU_LOSS_GRID]
    for row in rows:
        assert 0.0 <= row.report.hota <= 1.0
        assert row.report.num_gt > 0
        assert row.id_accuracy is None


@pytest.mark.slow
def test_parallel_groups_match_serial():
    serial = ablate("raa", MODEL, TRAIN, InferConfig(capacity=MODEL.capacity), SUITE, ORACLE, n_eval=1)
    parallel = ablate("raa", MODEL, TRAIN, InferConfig(capacity=MODEL.capacity), SUITE, ORACLE, n_eval=1, workers=2)
    assert [r.label for r in parallel] == ["raa_on", "raa_off"]
    assert [r.report.summary() for r in parallel] == [r.report.summary() for r in serial]
