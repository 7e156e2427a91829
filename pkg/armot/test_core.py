"""
Testy typów domenowych i przydziału identyfikatorów.
"""

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from armot.core import (
    BBox, Detection, FrameObservation, IDVocabulary, ModelDims, TrackContext, assign_free_id, canonical_order,
)
from armot.errors import CapacityExhaustedError, ConfigError, InvalidBoxError, ShapeError


def _detection(x1, confidence, y1=0.1):
    return Detection(BBox(x1, y1, x1 + 0.1, y1 + 0.1), confidence, torch.zeros(4))


def test_assign_free_id_examples():
    assert assign_free_id(set(), 8) == 0
    assert assign_free_id({0, 1, 3}, 8) == 2
    with pytest.raises(CapacityExhaustedError):
        assign_free_id(set(range(8)), 8)


def test_assign_free_id_accepts_vocabulary():
    vocab = IDVocabulary(capacity=4, d_lm=8)
    assert assign_free_id({0, 1}, vocab) == 2
    assert vocab.new_index == 4
    assert vocab.size == 5
    assert vocab.is_concrete(3) and not vocab.is_concrete(vocab.new_index)


@given(st.sets(st.integers(min_value=0, max_value=15), max_size=15))
def test_assign_free_id_is_smallest_gap(active):
    free = assign_free_id(active, 16)
    assert free not in active
    assert all(i in active for i in range(free))


def test_bbox_invariants():
    with pytest.raises(InvalidBoxError):
        BBox(0.5, 0.1, 0.5, 0.2)
    with pytest.raises(InvalidBoxError):
        BBox(0.1, 0.1, 1.2, 0.2)
    assert BBox.clamped(-0.2, 0.1, 0.3, 0.4) == BBox(0.0, 0.1, 0.3, 0.4)
    assert BBox.clamped(1.1, 0.1, 1.3, 0.4) is None


def test_bbox_pixels():
    bbox = BBox.from_pixels(8, 4, 16, 8, 32, 32)
    assert bbox.as_tuple() == (0.25, 0.125, 0.75, 0.375)
    assert bbox.to_pixels(32, 32) == (8.0, 4.0, 16.0, 8.0)
    assert bbox.center == (0.5, 0.25)


def test_canonical_order_breaks_ties_by_position():
    detections = [_detection(0.5, 0.9), _detection(0.2, 0.9), _detection(0.1, 0.95), _detection(0.2, 0.9, y1=0.05)]
    assert canonical_order(detections) == [2, 3, 1, 0]


def test_detection_confidence_and_dims():
    with pytest.raises(ConfigError):
        _detection(0.1, 1.5)
    with pytest.raises(ShapeError):
        _detection(0.1, 0.9).check_dims(ModelDims(d_det=8))


def test_model_dims_heads():
    ModelDims(d_lm=16).check_heads(4)
    with pytest.raises(ConfigError):
        ModelDims(d_lm=18).check_heads(4)
    with pytest.raises(ConfigError):
        ModelDims(patch=0)


def test_frame_observation_checks():
    with pytest.raises(ConfigError):
        FrameObservation(0, np.zeros((8, 8)))
    with pytest.raises(ConfigError):
        FrameObservation(0, np.zeros((8, 8, 3)), detections=[_detection(0.1, 0.9)], gt_ids=[])
    frame = FrameObservation(1, np.zeros((8, 16, 3)))
    assert (frame.height, frame.width) == (8, 16)


def test_track_context_counts_absent_frames():
    track = TrackContext(3, "token", last_seen=4, first_seen=2)
    track.mark_missing(5)
    track.mark_missing(7)
    assert track.n_lost == 3
    track.mark_seen("other", 8)
    assert (track.n_lost, track.last_seen, track.latest_token) == (0, 8, "other")


def test_track_context_expires_when_next_gap_exceeds_tau_loss():
    track = TrackContext(0, "token", last_seen=0)
    assert not track.expired(1)
    track.mark_missing(1)
    assert track.expired(1)
    assert not track.expired(2)
    track.mark_missing(2)
    assert track.expired(2)
