"""
Testy detektora zapytaniowego i jego strat.
"""

import numpy as np
import torch

from armot.core import ModelDims
from armot.detector import DetectorOutput, ToyDetector, decode_detections, detection_loss, hungarian_match, patch_centers
from armot.model import ArMotModel, ModelConfig
from armot.sequence import SequenceConfig
from armot.simdata import OracleConfig, ScenarioConfig, apply_oracle, generate_scenario
from armot.trainer import LossWeights, TrainConfig, make_optimizer, train_step

DIMS = ModelDims(d_img=8, d_lm=16, d_det=12, patch=8)


def test_patch_centers():
    centers = patch_centers(2, 4)
    assert centers.shape == (8, 2)
    assert centers[0].tolist() == [0.125, 0.25]
    assert centers[5].tolist() == [0.375, 0.75]


def test_detector_shapes():
    torch.manual_seed(0)
    detector = ToyDetector(DIMS, n_queries=5, heads=2)
    output = detector(torch.randn(3, 16, DIMS.d_img), 4, 4)
    assert output.logits.shape == (3, 5)
    assert output.boxes.shape == (3, 5, 4)
    assert output.queries.shape == (3, 5, DIMS.d_det)
    assert bool(((output.boxes >= 0) & (output.boxes <= 1)).all())


def test_hungarian_match_prefers_overlapping_queries():
    logits = torch.zeros(3)
    boxes = torch.tensor([[0.8, 0.8, 0.2, 0.2], [0.2, 0.2, 0.2, 0.2], [0.5, 0.5, 0.1, 0.1]])
    gt = torch.tensor([[0.1, 0.1, 0.3, 0.3], [0.7, 0.7, 0.9, 0.9]])
    rows, cols = hungarian_match(logits, boxes, gt, LossWeights.toy())
    assert dict(zip(cols, rows)) == {0: 1, 1: 0}
    assert hungarian_match(logits, boxes, torch.zeros(0, 4), LossWeights.toy()) == ([], [])


def test_perfect_boxes_have_zero_box_losses():
    boxes = torch.tensor([[[0.2, 0.2, 0.2, 0.2], [0.5, 0.5, 0.1, 0.1]]])
    output = DetectorOutput(torch.tensor([[10.0, -10.0]]), boxes, torch.zeros(1, 2, 4))
    losses, matches = detection_loss(output, [torch.tensor([[0.1, 0.1, 0.3, 0.3]])], LossWeights.toy())
    assert matches == [([0], [0])]
    assert losses["l1"].item() < 1e-6
    assert losses["giou"].item() < 1e-5
    assert losses["cls"].item() < 1e-3


def test_empty_frame_losses_are_zero():
    torch.manual_seed(1)
    output = ToyDetector(DIMS, n_queries=4, heads=2)(torch.randn(1, 16, DIMS.d_img), 4, 4)
    losses, _ = detection_loss(output, [torch.zeros(0, 4)], LossWeights.toy())
    assert losses["l1"].item() == 0.0 and losses["giou"].item() == 0.0
    assert losses["cls"].item() > 0.0


def test_decode_detections_filters_and_suppresses():
    logits = torch.tensor([[5.0, 4.0, -5.0]])
    boxes = torch.tensor([[[0.3, 0.3, 0.2, 0.2], [0.31, 0.3, 0.2, 0.2], [0.7, 0.7, 0.2, 0.2]]])
    output = DetectorOutput(logits, boxes, torch.arange(9.0).reshape(1, 3, 3))
    detections = decode_detections(output, min_score=0.5, nms_iou=0.5)
    assert len(detections) == 1
    assert detections[0].confidence == torch.sigmoid(torch.tensor(5.0)).item()
    assert detections[0].query_embedding.tolist() == [0.0, 1.0, 2.0]


def test_toy_detector_training_step():
    torch.manual_seed(2)
    config = ModelConfig(d_img=8, d_lm=16, d_det=12, capacity=8, layers=1, heads=2, ffn=32, max_len=256,
                         dropout=0.0, detector="toy", n_queries=6)
    model = ArMotModel(config)
    frames = generate_scenario(ScenarioConfig(n_objects=2, n_frames=3, seed=0))
    clip = apply_oracle(frames, OracleConfig(d_det=12), 0)[:2]
    optimizer, scheduler = make_optimizer(model, TrainConfig(), total_steps=1)
    before = model.detector.class_head.weight.detach().clone()
    result = train_step(model, optimizer, scheduler, [clip], LossWeights.toy(),
                        SequenceConfig(capacity=config.capacity), np.random.default_rng(0))
    assert result.cls > 0.0 and result.l1 >= 0.0 and result.giou >= 0.0
    assert result.loss >= result.cls * 2.0
    assert not torch.equal(before, model.detector.class_head.weight)
