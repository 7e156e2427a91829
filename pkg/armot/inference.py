"""
Śledzenie klatka po klatce.

Tryb window: historia to bloki ostatnich T klatek oraz pary (token, ID)
zgubionych śladów z menedżera kontekstu czasowego (TCM).
Tryb tmf: historia to pamięci śladów TMF, każda z identyfikatorem.

Klatka i odwołuje się tylko do śladów z i - last_seen <= tau_loss: ślad, dla którego
przerwa w następnej klatce przekroczyłaby tau_loss, jest usuwany z TCM po bieżącej
klatce, a jego identyfikator wraca do puli wolnych. Obiekt, który pojawi się ponownie
po usunięciu, dostaje w wyniku nową etykietę.
"""

from collections import deque
from dataclasses import dataclass, field

import torch
from loguru import logger
from tqdm import tqdm

from armot.core import DEFAULT_CAPACITY, TrackContext, assign_free_id, canonical_order
from armot.decoder import predict_id
from armot.errors import ConfigError, ModelMismatchError
from armot.motchallenge import TrackingResult, TrackRecord
from armot.sequence import build_frame_block, build_inference_prefix, memory_block
from armot.tmf import TrackMemory

MODES = ("window", "tmf")


@dataclass(frozen=True)
class InferConfig:
    mode: str = "window"
    window: int = 5
    tau_det: float = 0.5
    tau_loss: int = 10
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"Nieznany tryb {self.mode!r}, dozwolone: {', '.join(MODES)}")
        if self.mode == "window" and self.window < 1:
            raise ConfigError(f"Tryb window wymaga T >= 1: {self.window}")
        if not 0.0 <= self.tau_det <= 1.0:
            raise ConfigError(f"tau_det musi należeć do [0, 1]: {self.tau_det}")
        if self.tau_loss < 1:
            raise ConfigError(f"tau_loss musi być >= 1: {self.tau_loss}")
        if self.capacity < 1:
            raise ConfigError(f"capacity musi być dodatnie: {self.capacity}")


@dataclass
class WindowEntry:
    """Blok jednej klatki okna: tokeny obrazu (opcjonalnie) i trójki (token, id, first_seen)."""
    frame_index: int
    image: object
    pairs: list


@dataclass
class TrackerState:
    config: InferConfig
    tcm: dict = field(default_factory=dict)
    memories: dict = field(default_factory=dict)
    window: deque = None
    last_prefix: object = None
    next_label: int = 0

    def __post_init__(self):
        if self.window is None:
            self.window = deque(maxlen=self.config.window if self.config.mode == "window" else 1)

    def active_ids(self):
        return set(self.tcm)

    def is_current(self, track_id, first_seen):
        """Czy para z okna należy do wciąż istniejącego śladu (a nie do id użytego ponownie)."""
        entry = self.tcm.get(track_id)
        return entry is not None and entry.first_seen == first_seen


def window_history(state, history_images=False):
    """Bloki okna (od najstarszego) i pary zgubionych śladów spoza okna (od najdawniej widzianego)."""
    slots, shown = [], set()
    for entry in state.window:
        pairs = [(obj, track_id) for obj, track_id, first_seen in entry.pairs
                 if state.is_current(track_id, first_seen)]
        shown.update(track_id for _, track_id in pairs)
        slots += build_frame_block(entry.image if history_images else None, pairs)
    lost = [t for t in state.tcm.values() if t.n_lost > 0 and t.track_id not in shown]
    lost.sort(key=lambda t: (t.last_seen, t.track_id))
    slots += build_frame_block(None, [(t.latest_token, t.track_id) for t in lost])
    return slots


def tmf_history(state):
    return memory_block([(state.memories[i].vector, i) for i in state.tcm
                         if i in state.memories and state.memories[i].initialized])


@torch.no_grad()
def track_frame(model, state, frame):
    """
    Śledzi jedną klatkę.

    Args:
        model: ArMotModel w trybie eval
        state: TrackerState (modyfikowany)
        frame: FrameObservation

    Returns:
        Krotka (lista TrackRecord tej klatki, stan)
    """
    cfg = state.config
    encoded = model.encode_frames([frame])
    detections = model.detect(encoded[1], encoded[2], encoded[3], [frame])[0]
    detections = [d for d in detections if d.confidence >= cfg.tau_det]
    order = canonical_order(detections)
    detections = [detections[j] for j in order]
    frame_tokens = model.frame_tokens([frame], [detections], encoded=encoded, gt_ids=[None])[0]
    objects = frame_tokens.objects

    if cfg.mode == "tmf":
        history = tmf_history(state)
    else:
        history = window_history(state, model.config.history_images)

    new_index = model.new_index
    reference = state.active_ids()
    answered, hidden, used = [], [], set()
    for obj in objects:
        seq = build_inference_prefix(history, frame_tokens.image, answered, obj)
        admissible = (reference - used) | {new_index}
        index, confidence, output = predict_id(model.decoder, seq, admissible)
        logger.trace("Klatka {}: id {} (p={:.3f})", frame.frame_index, index, confidence)
        state.last_prefix = seq
        answered.append((obj, index))
        hidden.append(output.hidden[-1])
        if model.vocab.is_concrete(index):
            used.add(index)

    # identyfikatory dla <new> po całej klatce, w kolejności kanonicznej
    frame_index = frame.frame_index
    occupied = state.active_ids()
    final_ids, labels = [], []
    for obj, index in answered:
        if model.vocab.is_concrete(index):
            state.tcm[index].mark_seen(obj, frame_index)
        else:
            index = assign_free_id(occupied, cfg.capacity)
            occupied.add(index)
            state.tcm[index] = TrackContext(index, obj, 0, frame_index, frame_index, state.next_label)
            state.next_label += 1
        final_ids.append(index)
        labels.append(state.tcm[index].label)

    matched = set(final_ids)
    for track in list(state.tcm.values()):
        if track.track_id not in matched:
            track.mark_missing(frame_index)
        if track.expired(cfg.tau_loss):
            logger.debug("Klatka {}: usunięto ślad {} (n_lost={})", frame_index, track.track_id, track.n_lost)
            del state.tcm[track.track_id]
            state.memories.pop(track.track_id, None)

    if cfg.mode == "tmf" and final_ids:
        memories = [state.memories.get(i, TrackMemory()) for i in final_ids]
        embeds = torch.stack([obj.vector for obj in objects])
        updated = model.tmf.update_many(torch.stack(hidden), memories, embeds)
        for track_id, memory in zip(final_ids, updated):
            state.memories[track_id] = memory

    state.window.append(WindowEntry(
        frame_index, frame_tokens.image,
        [(obj, i, state.tcm[i].first_seen) for obj, i in zip(objects, final_ids)]))

    records = [TrackRecord(frame_index, label, d.bbox, d.confidence) for label, d in zip(labels, detections)]
    return records, state


def check_compatible(model, cfg):
    """Zgłasza ModelMismatchError, gdy konfiguracja śledzenia nie pasuje do modelu."""
    if cfg.capacity != model.config.capacity:
        raise ModelMismatchError(f"K={cfg.capacity} w konfiguracji, model ma K={model.config.capacity}")
    if cfg.mode == "tmf" and model.tmf is None:
        raise ModelMismatchError("Tryb tmf wymaga modelu trenowanego z use_tmf = True")


def track_video(model, video, cfg, width=None, height=None, progress=False):
    """
    Śledzi całe nagranie.

    Args:
        model: ArMotModel
        video: Lista FrameObservation
        cfg: InferConfig
        width, height: Rozmiar obrazu w pikselach do zapisu MOTChallenge (domyślnie rozmiar klatek)
        progress: Czy pokazywać pasek postępu

    Returns:
        TrackingResult
    """
    check_compatible(model, cfg)
    if not video:
        return TrackingResult([], 0, width or 1, height or 1)
    for frame in video:
        for detection in frame.detections:
            if int(detection.query_embedding.shape[-1]) != model.config.d_det:
                raise ModelMismatchError(
                    f"Detekcje mają zapytania długości {detection.query_embedding.shape[-1]}, "
                    f"model oczekuje d_det={model.config.d_det}")
    model.eval()
    state = TrackerState(cfg)
    records = []
    for frame in tqdm(video, desc="klatki", disable=not progress):
        frame_records, state = track_frame(model, state, frame)
        records += frame_records
    logger.info("Śledzenie zakończone: {} klatek, {} identyfikatorów", len(video), len({r.track_id for r in records}))
    return TrackingResult(records, len(video), width or video[0].width, height or video[0].height)
