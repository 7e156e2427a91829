"""
Trening modelu: losowanie klipów z przerwą czasową, harmonogram długości klipów,
ważona funkcja straty, AdamW i kosinusowy harmonogram współczynnika uczenia.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger
from tqdm import tqdm

from armot.core import BBox, Detection
from armot.detector import detection_loss, to_xyxy
from armot.errors import ConfigError, NonFiniteLossError, VideoTooShortError
from armot.model import ArMotModel, save_model
from armot.sequence import (DiscreteSlot, SequenceConfig, build_training_sequence, frame_sequence,
                            memory_block, plan_clip_identities)


@dataclass(frozen=True)
class LossWeights:
    """Wagi składników straty."""
    lambda_cls: float = 0.0
    lambda_l1: float = 0.0
    lambda_giou: float = 0.0
    lambda_ce: float = 1.0

    def __post_init__(self):
        if min(self.lambda_cls, self.lambda_l1, self.lambda_giou) < 0:
            raise ConfigError("Wagi strat detekcji muszą być nieujemne")
        if self.lambda_ce <= 0:
            raise ConfigError(f"lambda_ce musi być dodatnie: {self.lambda_ce}")

    @classmethod
    def toy(cls):
        """Domyślne wagi w trybie uczonego detektora."""
        return cls(lambda_cls=2.0, lambda_l1=5.0, lambda_giou=2.0, lambda_ce=1.0)


@dataclass(frozen=True)
class TrainConfig:
    gap_range: tuple = (1, 10)
    clip_schedule: tuple = (2, 3, 4, 5)
    epochs: int = 15
    lr: float = 6.0e-5
    cosine: bool = True
    batch_size: int = 4
    clips_per_epoch: int = 0
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    train_window: int = 0
    supervise_first_frame: bool = False
    random_id_assignment: bool = True
    deterministic: bool = True
    device: str = "cpu"
    seed: int = 0

    def __post_init__(self):
        low, high = self.gap_range
        if low < 0 or high < low:
            raise ConfigError(f"Niepoprawny zakres przerwy: {self.gap_range}")
        if not self.clip_schedule or min(self.clip_schedule) < 2:
            raise ConfigError(f"Klipy muszą mieć co najmniej 2 klatki: {self.clip_schedule}")
        if self.epochs < 1 or self.batch_size < 1 or self.clips_per_epoch < 0 or self.train_window < 0:
            raise ConfigError("epochs i batch_size muszą być dodatnie, clips_per_epoch i train_window nieujemne")
        if self.lr <= 0:
            raise ConfigError(f"lr musi być dodatnie: {self.lr}")

    def sequence_config(self, model_config):
        return SequenceConfig(
            capacity=model_config.capacity, window=self.train_window or None,
            history_images=model_config.history_images,
            supervise_first_frame=self.supervise_first_frame,
            random_id_assignment=self.random_id_assignment,
        )


@dataclass
class StepResult:
    step: int
    loss: float
    ce: float
    lr: float
    cls: float = 0.0
    l1: float = 0.0
    giou: float = 0.0
    n_targets: int = 0


@dataclass
class TrainingRun:
    model: ArMotModel
    steps: list = field(default_factory=list)
    log_lines: list = field(default_factory=list)


def clip_indices(n_frames, clip_len, gap_range, rng):
    """
    Indeksy klatek klipu: start, start+g+1, start+2(g+1), ...

    Górna granica przerwy jest obniżana do największej mieszczącej się w nagraniu.

    Raises:
        VideoTooShortError: gdy nie mieści się nawet najmniejsza przerwa
    """
    low, high = gap_range
    if (clip_len - 1) * (low + 1) + 1 > n_frames:
        raise VideoTooShortError(
            f"Nagranie ma {n_frames} klatek, klip {clip_len} z przerwą {low} się nie mieści")
    fit = (n_frames - 1) // (clip_len - 1) - 1
    if fit < high:
        logger.debug("Przerwa ograniczona z {} do {} (nagranie {} klatek)", high, fit, n_frames)
        high = fit
    gap = int(rng.integers(low, high + 1))
    span = (clip_len - 1) * (gap + 1)
    start = int(rng.integers(0, n_frames - span))
    return [start + k * (gap + 1) for k in range(clip_len)]


def sample_clip(video, clip_len, gap_range, rng):
    """
    Losuje klip z nagrania.

    Args:
        video: Lista FrameObservation
        clip_len: Liczba klatek klipu
        gap_range: (min, max) przerwy między klatkami
        rng: numpy Generator

    Returns:
        Lista klatek
    """
    return [video[i] for i in clip_indices(len(video), clip_len, gap_range, rng)]


def clip_length_for_epoch(epoch, schedule, epochs):
    """Długość klipu w epoce (od 0); przełączenia rozłożone równomiernie."""
    stage = min(epoch * len(schedule) // epochs, len(schedule) - 1)
    return schedule[stage]


def cosine_factor(step, total_steps):
    """Mnożnik współczynnika uczenia 0.5·(1 + cos(π·step/total))."""
    return 0.5 * (1.0 + math.cos(math.pi * min(step, total_steps) / max(total_steps, 1)))


def make_optimizer(model, config, total_steps):
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    if config.cosine:
        scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda s: cosine_factor(s, total_steps))
    else:
        scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda s: 1.0)
    return optimizer, scheduler


def training_constraints(seq, new_index):
    """
    Zbiory dopuszczalne dla pozycji predykcji sekwencji treningowej:
    identyfikatory z historii bez użytych wcześniej w tej klatce, plus <new>.
    """
    first = seq.predict_positions[0] if seq.predict_positions else len(seq.slots)
    history = {slot.index for slot in seq.slots[:first]
               if isinstance(slot, DiscreteSlot) and slot.source == "id" and slot.index != new_index}
    constraints, used = [], set()
    for target in seq.target_ids:
        constraints.append((history - used) | {new_index})
        if target != new_index:
            used.add(target)
    return constraints


def _tmf_clip(model, clip_tokens, seq_config, rng):
    """Rozwinięcie klipu klatka po klatce z pamięcią TMF jako historią."""
    orders = [frame.ordered() for frame in clip_tokens]
    gt_ordered = [[frame.gt_ids[j] for j in order] for frame, order in zip(clip_tokens, orders)]
    targets, concrete = plan_clip_identities(
        gt_ordered, seq_config.capacity, rng if seq_config.random_id_assignment else None)
    memories = {}
    logits, target_list, sequences = [], [], []
    for i, (frame, order) in enumerate(zip(clip_tokens, orders)):
        objects = [frame.objects[j] for j in order]
        history = memory_block([(vector, track_id) for track_id, vector in memories.items()])
        seq = frame_sequence(history, frame.image, objects, targets[i])
        if not objects:
            continue
        output = model.decoder(seq)
        if i > 0 or seq_config.supervise_first_frame:
            logits.append(output.logits)
            target_list += targets[i]
            sequences.append(seq)
        read = torch.tensor([p - 1 for p in seq.predict_positions], device=output.hidden.device)
        hidden = output.hidden.index_select(0, read)
        embeds = torch.stack([obj.vector for obj in objects])
        history_vectors = torch.stack([memories.get(c, hidden[k]) for k, c in enumerate(concrete[i])])
        updated = model.tmf(hidden, history_vectors, embeds)
        for k, track_id in enumerate(concrete[i]):
            memories[track_id] = updated[k]
    return logits, target_list, sequences


def _toy_detections(model, clip, encoded, weights):
    """Detektor na klipie: straty oraz dopasowane zapytania jako detekcje z id gt."""
    _, features, grid_h, grid_w = encoded
    output = model.detector(features, grid_h, grid_w)
    annotations = [frame.visible_annotations() for frame in clip]
    gt_boxes = [torch.tensor([a.bbox.as_tuple() for a in anns], dtype=torch.float32,
                             device=features.device).reshape(-1, 4) for anns in annotations]
    losses, matches = detection_loss(output, gt_boxes, weights)
    detections, gt_ids = [], []
    boxes = to_xyxy(output.boxes)
    scores = output.logits.sigmoid()
    for b, (rows, cols) in enumerate(matches):
        frame_dets, frame_ids = [], []
        for q, g in zip(rows, cols):
            bbox = BBox.clamped(*boxes[b, q].tolist()) or annotations[b][g].bbox
            frame_dets.append(Detection(bbox, float(scores[b, q]), output.queries[b, q]))
            frame_ids.append(annotations[b][g].track_id)
        detections.append(frame_dets)
        gt_ids.append(frame_ids)
    return losses, detections, gt_ids


def compute_losses(model, batch, weights, seq_config, rng):
    """
    Straty dla wsadu klipów bez kroku optymalizatora.

    Returns:
        Krotka (strata całkowita, słownik składników jako tensory, liczba celów, sekwencje, logity)
    """
    sequences, tmf_logits, tmf_targets = [], [], []
    det_terms = {"cls": [], "l1": [], "giou": []}
    for clip in batch:
        encoded = model.encode_frames(clip)
        if model.detector is not None:
            losses, detections, gt_ids = _toy_detections(model, clip, encoded, weights)
            for name in det_terms:
                det_terms[name].append(losses[name])
            clip_tokens = model.frame_tokens(clip, detections, encoded=encoded, gt_ids=gt_ids)
        else:
            clip_tokens = model.frame_tokens(clip, encoded=encoded)
        if model.tmf is not None:
            logits, targets, seqs = _tmf_clip(model, clip_tokens, seq_config, rng)
            tmf_logits += logits
            tmf_targets += targets
            sequences += seqs
        else:
            sequences += [s for s in build_training_sequence(clip_tokens, seq_config, rng) if s.predict_positions]

    if model.tmf is not None:
        logits = torch.cat(tmf_logits) if tmf_logits else None
        targets = torch.tensor(tmf_targets, dtype=torch.long, device=model.device) if tmf_targets else None
    elif sequences:
        logits, targets, _ = model.decoder.forward_batch(sequences)
    else:
        logits, targets = None, None

    zero = torch.zeros((), device=model.device)
    components = {"ce": F.cross_entropy(logits, targets) if logits is not None else zero}
    total = weights.lambda_ce * components["ce"]
    if model.detector is not None:
        for name, weight in (("cls", weights.lambda_cls), ("l1", weights.lambda_l1), ("giou", weights.lambda_giou)):
            components[name] = torch.stack(det_terms[name]).mean()
            total = total + weight * components[name]
    n_targets = 0 if targets is None else int(targets.numel())
    return total, components, n_targets, sequences, logits


def train_step(model, optimizer, scheduler, batch, weights, seq_config, rng, step=0, grad_clip=1.0):
    """
    Jeden krok optymalizacji na wsadzie klipów.

    Returns:
        StepResult

    Raises:
        NonFiniteLossError: gdy strata nie jest skończona
    """
    model.train()
    lr = scheduler.get_last_lr()[0]
    total, components, n_targets, _, _ = compute_losses(model, batch, weights, seq_config, rng)
    values = {name: float(value.detach()) for name, value in components.items()}
    if not torch.isfinite(total):
        raise NonFiniteLossError(
            f"Nieskończona strata w kroku {step}: loss={float(total)}, składniki={values}, lr={lr:.3e}")
    optimizer.zero_grad()
    if total.requires_grad:
        total.backward()
        if grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
        optimizer.step()
    scheduler.step()
    return StepResult(step, float(total.detach()), values["ce"], lr, values.get("cls", 0.0),
                      values.get("l1", 0.0), values.get("giou", 0.0), n_targets)


def seed_everything(seed, deterministic=True):
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
    return np.random.default_rng(seed)


def run_training(model_config, train_config, videos, weights=None, checkpoint_path=None,
                 log_path=None, progress=True):
    """
    Pełny trening.

    Args:
        model_config: ModelConfig
        train_config: TrainConfig
        videos: Lista nagrań (listy FrameObservation)
        weights: LossWeights (domyślnie zależne od trybu detektora)
        checkpoint_path: Ścieżka punktu kontrolnego (opcjonalnie)
        log_path: Ścieżka logu step,loss,ce,lr (opcjonalnie)
        progress: Czy pokazywać pasek postępu

    Returns:
        TrainingRun
    """
    if not videos:
        raise ConfigError("Brak nagrań treningowych")
    if weights is None:
        weights = LossWeights.toy() if model_config.detector == "toy" else LossWeights()
    rng = seed_everything(train_config.seed, train_config.deterministic)
    model = ArMotModel(model_config).to(train_config.device)
    seq_config = train_config.sequence_config(model_config)
    needed = (max(train_config.clip_schedule) - 1) * (train_config.gap_range[1] + 1) + 1
    short = sum(len(video) < needed for video in videos)
    if short:
        logger.warning("{} z {} nagrań ma mniej niż {} klatek; przerwa będzie dla nich obniżana",
                       short, len(videos), needed)

    clips_per_epoch = train_config.clips_per_epoch or len(videos)
    steps_per_epoch = math.ceil(clips_per_epoch / train_config.batch_size)
    total_steps = train_config.epochs * steps_per_epoch
    optimizer, scheduler = make_optimizer(model, train_config, total_steps)
    run = TrainingRun(model)
    run.log_lines.append(f"# device={train_config.device} deterministic={train_config.deterministic} "
                         f"seed={train_config.seed}")
    logger.info("Trening: {} nagrań, {} epok, {} kroków", len(videos), train_config.epochs, total_steps)

    step = 0
    for epoch in tqdm(range(train_config.epochs), desc="epoki", disable=not progress):
        clip_len = clip_length_for_epoch(epoch, train_config.clip_schedule, train_config.epochs)
        order = np.concatenate([rng.permutation(len(videos))
                                for _ in range(math.ceil(clips_per_epoch / len(videos)))])[:clips_per_epoch]
        logger.info("Epoka {}: klipy po {} klatek", epoch, clip_len)
        for start in range(0, clips_per_epoch, train_config.batch_size):
            batch = [sample_clip(videos[v], clip_len, train_config.gap_range, rng)
                     for v in order[start:start + train_config.batch_size]]
            result = train_step(model, optimizer, scheduler, batch, weights, seq_config, rng,
                                step=step, grad_clip=train_config.grad_clip)
            run.steps.append(result)
            run.log_lines.append(f"{result.step},{result.loss:.6f},{result.ce:.6f},{result.lr:.6e}")
            step += 1
        logger.debug("Epoka {}: ostatnia strata {:.4f}", epoch, run.steps[-1].loss)

    if log_path is not None:
        Path(log_path).write_text("\n".join(run.log_lines) + "\n", encoding="utf-8")
    if checkpoint_path is not None:
        save_model(model, checkpoint_path)
    model.eval()
    return run


@torch.no_grad()
def evaluate_id_accuracy(model, videos, clip_len=2, gap_range=(0, 0), clips_per_video=1, seed=0):
    """
    Trafność przewidywania identyfikatorów z wymuszaniem nauczyciela
    (ograniczony argmax) na wszystkich pozycjach predykcji.

    Returns:
        Ułamek trafnych predykcji (1.0 gdy brak pozycji)
    """
    model.eval()
    rng = np.random.default_rng(seed)
    seq_config = SequenceConfig(capacity=model.config.capacity, history_images=model.config.history_images)
    correct = total = 0
    for video in videos:
        for _ in range(clips_per_video):
            clip = sample_clip(video, clip_len, gap_range, rng)
            clip_tokens = model.frame_tokens(clip)
            if model.tmf is not None:
                logits, targets, sequences = _tmf_clip(model, clip_tokens, seq_config, None)
                logits = torch.cat(logits) if logits else None
            else:
                sequences = [s for s in build_training_sequence(clip_tokens, seq_config) if s.predict_positions]
                logits = model.decoder.forward_batch(sequences)[0] if sequences else None
                targets = [t for s in sequences for t in s.target_ids]
            if logits is None:
                continue
            constraints = [c for s in sequences for c in training_constraints(s, model.new_index)]
            for row, target, allowed in zip(logits, targets, constraints):
                allowed = sorted(allowed)
                best = allowed[int(torch.argmax(row[torch.tensor(allowed, device=row.device)]))]
                correct += int(best == target)
                total += 1
    return correct / total if total else 1.0
