"""
Syntetyczne nagrania z trajektoriami ground truth oraz wyrocznia detekcji.

- generate_scenario: obiekty (kolor + tekstura) poruszające się liniowo,
  sinusoidalnie lub odbijające się od krawędzi, z opcjonalnymi zasłonięciami
- oracle_detect: detekcje z szumem (pominięcia, drgania, fałszywe alarmy)
- generate_suite: zestaw scenariuszy do treningu/ewaluacji
- save_video_dir / load_video_dir: katalogi nagrań (syntetyczne lub MOTChallenge)
"""

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib.image as mpimg
import numpy as np
from loguru import logger
from scipy import ndimage

from armot.config import build_config, config_to_mapping, read_config, write_config
from armot.core import DEFAULT_CAPACITY, Annotation, BBox, Detection, FrameObservation
from armot.errors import ConfigError, ShapeError
from armot.motchallenge import MotRecord, read_motchallenge, write_mot_records
from armot.tokenizer import appearance_statistics, encode_query

MOTIONS = ("linear", "sinusoidal", "bounce")
TEXTURE_SIZE = 8
SCENARIO_FILE = "scenario.cfg"


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Parametry jednego syntetycznego nagrania.

    occlusions to krotki (klatka początkowa, czas trwania, indeks obiektu).
    similarity = 0 daje różne kolory, 1 identyczne.
    """
    n_objects: int = 3
    n_frames: int = 20
    height: int = 32
    width: int = 32
    motion: str = "linear"
    occlusions: tuple = ()
    similarity: float = 0.0
    seed: int = 0
    min_size: float = 0.15
    max_size: float = 0.3
    speed: float = 0.04
    min_separation: float = 0.0
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if self.n_objects < 1 or self.n_frames < 1:
            raise ConfigError("n_objects i n_frames muszą być dodatnie")
        if self.n_objects > self.capacity:
            raise ConfigError(f"n_objects={self.n_objects} przekracza pojemność K={self.capacity}")
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"Niepoprawny rozmiar obrazu {self.height}x{self.width}")
        if self.motion not in MOTIONS:
            raise ConfigError(f"Nieznany model ruchu {self.motion!r}, dozwolone: {', '.join(MOTIONS)}")
        if not 0.0 <= self.similarity <= 1.0:
            raise ConfigError(f"similarity musi należeć do [0, 1]: {self.similarity}")
        if not 0.0 < self.min_size <= self.max_size <= 0.5:
            raise ConfigError(f"Niepoprawny zakres rozmiarów obiektów: {self.min_size}..{self.max_size}")
        for event in self.occlusions:
            if len(event) != 3:
                raise ConfigError(f"Zasłonięcie musi mieć postać (start, czas, obiekt): {event}")
            start, duration, obj = event
            if duration < 1 or start < 0 or start + duration > self.n_frames:
                raise ConfigError(f"Zasłonięcie {event} wychodzi poza [0, {self.n_frames})")
            if not 0 <= obj < self.n_objects:
                raise ConfigError(f"Zasłonięcie {event} dotyczy nieistniejącego obiektu")

    def is_occluded(self, obj, frame_index):
        return any(o == obj and s <= frame_index < s + d for s, d, o in self.occlusions)


@dataclass(frozen=True)
class OracleConfig:
    """Wyrocznia detekcji: prawdopodobieństwo pominięcia, średnia liczba fałszywych alarmów, szum."""
    p_miss: float = 0.0
    fp_rate: float = 0.0
    jitter_sigma: float = 0.0
    tp_confidence: tuple = (0.8, 1.0)
    fp_confidence: tuple = (0.3, 0.7)
    fp_size: tuple = (0.1, 0.3)
    d_det: int = 64

    def __post_init__(self):
        if not 0.0 <= self.p_miss <= 1.0:
            raise ConfigError(f"p_miss musi należeć do [0, 1]: {self.p_miss}")
        if self.fp_rate < 0 or self.jitter_sigma < 0:
            raise ConfigError("fp_rate i jitter_sigma muszą być nieujemne")
        for name in ("tp_confidence", "fp_confidence", "fp_size"):
            low, high = getattr(self, name)
            if not 0.0 <= low <= high <= 1.0:
                raise ConfigError(f"{name} musi być przedziałem w [0, 1]: {(low, high)}")
        if self.d_det < 1:
            raise ConfigError(f"d_det musi być dodatnie: {self.d_det}")


@dataclass(frozen=True)
class SuiteConfig:
    """Zestaw losowych scenariuszy (polecenie simulate)."""
    n_scenarios: int = 40
    n_frames: int = 20
    min_objects: int = 2
    max_objects: int = 5
    motions: tuple = MOTIONS
    occlusion_prob: float = 0.3
    max_occlusion: int = 3
    similarity: float = 0.0
    height: int = 32
    width: int = 32
    min_separation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ConfigError(f"n_scenarios musi być dodatnie: {self.n_scenarios}")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError(f"Niepoprawny zakres liczby obiektów: {self.min_objects}..{self.max_objects}")
        if not 0.0 <= self.occlusion_prob <= 1.0:
            raise ConfigError(f"occlusion_prob musi należeć do [0, 1]: {self.occlusion_prob}")
        if self.occlusion_prob > 0 and self.n_frames < self.max_occlusion + 2:
            raise ConfigError("Nagranie jest za krótkie na zasłonięcia o długości max_occlusion")
        if self.max_occlusion < 1:
            raise ConfigError(f"max_occlusion musi być dodatnie: {self.max_occlusion}")
        for motion in self.motions:
            if motion not in MOTIONS:
                raise ConfigError(f"Nieznany model ruchu {motion!r}")


def _linear_track(rng, n_frames, half_w, half_h):
    start = rng.uniform([half_w, half_h], [1 - half_w, 1 - half_h])
    end = rng.uniform([half_w, half_h], [1 - half_w, 1 - half_h])
    steps = np.linspace(0.0, 1.0, n_frames)[:, None]
    return start + (end - start) * steps


def _sinusoidal_track(rng, n_frames, half_w, half_h):
    amplitude = rng.uniform(0.05, 0.15)
    frequency = rng.uniform(0.5, 2.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    x0, x1 = rng.uniform(half_w, 1 - half_w, size=2)
    base_y = rng.uniform(half_h + amplitude, 1 - half_h - amplitude)
    t = np.arange(n_frames) / max(n_frames - 1, 1)
    xs = x0 + (x1 - x0) * t
    ys = base_y + amplitude * np.sin(2 * np.pi * frequency * t + phase)
    return np.stack([xs, ys], axis=1)


def _bounce_track(rng, n_frames, half_w, half_h, speed):
    low = np.array([half_w, half_h])
    high = 1.0 - low
    position = rng.uniform(low, high)
    velocity = rng.uniform(-speed, speed, size=2)
    centers = np.empty((n_frames, 2))
    for t in range(n_frames):
        centers[t] = position
        position = position + velocity
        # odbicie od krawędzi
        below, above = position < low, position > high
        position = np.where(below, 2 * low - position, position)
        position = np.where(above, 2 * high - position, position)
        velocity = np.where(below | above, -velocity, velocity)
    return np.clip(centers, low, high)


def _sample_tracks(cfg, rng, sizes):
    centers = np.empty((cfg.n_objects, cfg.n_frames, 2))
    for k, (w, h) in enumerate(sizes):
        if cfg.motion == "linear":
            centers[k] = _linear_track(rng, cfg.n_frames, w / 2, h / 2)
        elif cfg.motion == "sinusoidal":
            centers[k] = _sinusoidal_track(rng, cfg.n_frames, w / 2, h / 2)
        else:
            centers[k] = _bounce_track(rng, cfg.n_frames, w / 2, h / 2, cfg.speed)
    return centers


def _min_distance(centers):
    if centers.shape[0] < 2:
        return math.inf
    diffs = centers[:, None, :, :] - centers[None, :, :, :]
    distances = np.linalg.norm(diffs, axis=-1)
    n = centers.shape[0]
    distances[np.arange(n), np.arange(n)] = math.inf
    return float(distances.min())


def _render(cfg, boxes, colors, textures, frame_index):
    image = np.zeros((cfg.height, cfg.width, 3), dtype=np.float32)
    for k in range(cfg.n_objects):
        if cfg.is_occluded(k, frame_index):
            continue
        box = boxes[k][frame_index]
        r0, r1 = int(math.floor(box.y1 * cfg.height)), int(math.ceil(box.y2 * cfg.height))
        c0, c1 = int(math.floor(box.x1 * cfg.width)), int(math.ceil(box.x2 * cfg.width))
        rows, cols = max(r1 - r0, 1), max(c1 - c0, 1)
        reps = (math.ceil(rows / TEXTURE_SIZE), math.ceil(cols / TEXTURE_SIZE), 1)
        patch = colors[k] + np.tile(textures[k], reps)[:rows, :cols]
        image[r0:r0 + rows, c0:c0 + cols] = np.clip(patch, 0.0, 1.0)
    return image


def generate_scenario(cfg):
    """
    Generuje nagranie zgodnie z konfiguracją scenariusza.

    Args:
        cfg: ScenarioConfig

    Returns:
        Lista FrameObservation z adnotacjami gt (bez detekcji)
    """
    rng = np.random.default_rng(cfg.seed)
    sizes = rng.uniform(cfg.min_size, cfg.max_size, size=(cfg.n_objects, 2))

    for attempt in range(200):
        centers = _sample_tracks(cfg, rng, sizes)
        if _min_distance(centers) >= cfg.min_separation:
            break
    else:
        raise ConfigError(f"Nie udało się rozmieścić obiektów z odstępem {cfg.min_separation}")
    logger.debug("Scenariusz seed={}: trajektorie po {} próbach", cfg.seed, attempt + 1)

    colors = rng.uniform(0.2, 1.0, size=(cfg.n_objects, 3))
    colors = (1.0 - cfg.similarity) * colors + cfg.similarity * colors.mean(axis=0)
    textures = rng.normal(0.0, 0.08, size=(cfg.n_objects, TEXTURE_SIZE, TEXTURE_SIZE, 3))

    boxes = []
    for k, (w, h) in enumerate(sizes):
        track = []
        for cx, cy in centers[k]:
            track.append(BBox.clamped(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
        boxes.append(track)

    frames = []
    for t in range(cfg.n_frames):
        annotations = [Annotation(k, boxes[k][t], visible=not cfg.is_occluded(k, t))
                       for k in range(cfg.n_objects)]
        image = _render(cfg, boxes, colors, textures, t)
        frames.append(FrameObservation(t, image, detections=[], gt_ids=[], annotations=annotations))
    return frames


def _make_detection(image, bbox, confidence, d_det):
    appearance = appearance_statistics(image, bbox)
    return Detection(bbox, float(confidence), encode_query(bbox, appearance, d_det), appearance)


def oracle_detect_with_ids(frame, cfg, seed):
    """
    Jak oracle_detect, ale zwraca też identyfikatory gt detekcji (-1 = fałszywy alarm).

    Returns:
        Krotka (lista Detection, lista identyfikatorów gt)
    """
    rng = np.random.default_rng(seed)
    detections, gt_ids = [], []
    for annotation in frame.visible_annotations():
        kept = rng.random() >= cfg.p_miss
        noise = rng.normal(0.0, cfg.jitter_sigma, size=4) if cfg.jitter_sigma > 0 else np.zeros(4)
        confidence = rng.uniform(*cfg.tp_confidence)
        if not kept:
            continue
        bbox = annotation.bbox
        if cfg.jitter_sigma > 0:
            bbox = BBox.clamped(*(annotation.bbox.as_array() + noise))
            if bbox is None:
                continue
        detections.append(_make_detection(frame.image, bbox, confidence, cfg.d_det))
        gt_ids.append(annotation.track_id)

    for _ in range(rng.poisson(cfg.fp_rate)):
        w, h = rng.uniform(*cfg.fp_size, size=2)
        x1, y1 = rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h)
        bbox = BBox.clamped(x1, y1, x1 + w, y1 + h)
        confidence = rng.uniform(*cfg.fp_confidence)
        if bbox is not None:
            detections.append(_make_detection(frame.image, bbox, confidence, cfg.d_det))
            gt_ids.append(-1)
    return detections, gt_ids


def oracle_detect(frame, cfg, seed):
    """
    Wyrocznia detekcji dla widocznych obiektów klatki.

    Args:
        frame: FrameObservation z adnotacjami gt
        cfg: OracleConfig
        seed: Ziarno (liczba lub krotka liczb)

    Returns:
        Lista Detection
    """
    return oracle_detect_with_ids(frame, cfg, seed)[0]


def apply_oracle(frames, cfg, seed):
    """Uzupełnia detekcje i gt_ids każdej klatki; ziarno klatki to (seed, indeks klatki)."""
    observed = []
    for frame in frames:
        detections, gt_ids = oracle_detect_with_ids(frame, cfg, (seed, frame.frame_index))
        observed.append(dataclasses.replace(frame, detections=detections, gt_ids=gt_ids))
    return observed


def generate_suite(suite):
    """
    Losuje konfiguracje scenariuszy zestawu.

    Returns:
        Lista ScenarioConfig
    """
    rng = np.random.default_rng(suite.seed)
    scenarios = []
    for _ in range(suite.n_scenarios):
        n_objects = int(rng.integers(suite.min_objects, suite.max_objects + 1))
        motion = suite.motions[int(rng.integers(len(suite.motions)))]
        occlusions = []
        for obj in range(n_objects):
            if rng.random() < suite.occlusion_prob:
                duration = int(rng.integers(1, suite.max_occlusion + 1))
                start = int(rng.integers(1, suite.n_frames - duration))
                occlusions.append((start, duration, obj))
        scenarios.append(ScenarioConfig(
            n_objects=n_objects, n_frames=suite.n_frames, height=suite.height, width=suite.width,
            motion=motion, occlusions=tuple(occlusions), similarity=suite.similarity,
            seed=int(rng.integers(2 ** 31 - 1)), min_separation=suite.min_separation,
        ))
    return scenarios


def annotations_to_records(frames):
    """Widoczne adnotacje gt jako rekordy MOTChallenge (klatki i id od 1, piksele)."""
    records = []
    for frame in frames:
        for annotation in frame.visible_annotations():
            left, top, width, height = annotation.bbox.to_pixels(frame.width, frame.height)
            records.append(MotRecord(frame.frame_index + 1, annotation.track_id + 1,
                                     left, top, width, height, 1.0))
    return records


def save_video_dir(path, scenario, oracle, oracle_seed, frames=None, images=False):
    """
    Zapisuje katalog nagrania: scenario.cfg, seqinfo.ini, gt/gt.txt i opcjonalnie img1/*.png.

    Args:
        path: Katalog docelowy
        scenario: ScenarioConfig
        oracle: OracleConfig
        oracle_seed: Ziarno wyroczni
        frames: Wygenerowane klatki (gdy None, generowane ponownie)
        images: Czy zapisać obrazy klatek
    """
    path = Path(path)
    frames = frames if frames is not None else generate_scenario(scenario)
    (path / "gt").mkdir(parents=True, exist_ok=True)

    mapping = config_to_mapping(scenario)
    mapping.update(config_to_mapping(oracle))
    mapping["oracle_seed"] = oracle_seed
    write_config(mapping, path / SCENARIO_FILE)

    info = configparser.ConfigParser()
    info.optionxform = str
    info["Sequence"] = {
        "name": path.name, "imDir": "img1", "frameRate": "10",
        "seqLength": str(scenario.n_frames), "imWidth": str(scenario.width),
        "imHeight": str(scenario.height), "imExt": ".png",
    }
    with open(path / "seqinfo.ini", "w", encoding="utf-8") as handle:
        info.write(handle)

    write_mot_records(annotations_to_records(frames), path / "gt" / "gt.txt")
    if images:
        (path / "img1").mkdir(exist_ok=True)
        for frame in frames:
            mpimg.imsave(path / "img1" / f"{frame.frame_index + 1:06d}.png", np.clip(frame.image, 0, 1))


def resize_image(image, height, width):
    """Zmienia rozmiar obrazu H x W x C (interpolacja liniowa scipy.ndimage.zoom)."""
    if image.shape[0] == height and image.shape[1] == width:
        return image.astype(np.float32)
    factors = (height / image.shape[0], width / image.shape[1], 1.0)
    resized = ndimage.zoom(image.astype(np.float32), factors, order=1)
    # zoom zaokrągla rozmiar wyjścia, wyrównujemy do celu
    pad_h, pad_w = max(height - resized.shape[0], 0), max(width - resized.shape[1], 0)
    resized = np.pad(resized, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    return resized[:height, :width]


def patch_multiple(size, patch):
    """Największa wielokrotność patch nie większa niż size (co najmniej patch)."""
    return max(patch, (size // patch) * patch)


def _read_image(path):
    image = mpimg.imread(path)
    if image.dtype == np.uint8:
        image = image.astype(np.float32) / 255.0
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    return image[:, :, :3]


def load_video_dir(path, patch=8, size=None, oracle=None, oracle_seed=0):
    """
    Wczytuje katalog nagrania.

    Katalog zapisany przez simulate jest odtwarzany bit w bit ze scenario.cfg.
    Katalog MOTChallenge (seqinfo.ini, img1/, gt/gt.txt) jest wczytywany z dysku,
    klatki są skalowane do wielokrotności łatki, a detekcje pochodzą z wyroczni.

    Args:
        path: Katalog nagrania
        patch: Bok łatki P
        size: Docelowy rozmiar (H, W); gdy None, zaokrąglenie w dół do wielokrotności P
        oracle: OracleConfig dla katalogów MOTChallenge
        oracle_seed: Ziarno wyroczni dla katalogów MOTChallenge

    Returns:
        Lista FrameObservation z detekcjami i gt_ids
    """
    path = Path(path)
    if (path / SCENARIO_FILE).is_file():
        mapping = read_config(path / SCENARIO_FILE)
        scenario = build_config(ScenarioConfig, mapping)
        oracle_cfg = build_config(OracleConfig, mapping)
        frames = generate_scenario(scenario)
        return apply_oracle(frames, oracle_cfg, mapping.get("oracle_seed", scenario.seed))

    seqinfo = path / "seqinfo.ini"
    if not seqinfo.is_file():
        raise ConfigError(f"{path} nie jest katalogiem nagrania (brak {SCENARIO_FILE} i seqinfo.ini)")
    info = configparser.ConfigParser()
    info.optionxform = str
    info.read(seqinfo, encoding="utf-8")
    sequence = info["Sequence"]
    image_dir = path / sequence.get("imDir", "img1")
    extension = sequence.get("imExt", ".jpg")
    image_paths = sorted(image_dir.glob(f"*{extension}"))
    original_w, original_h = int(sequence["imWidth"]), int(sequence["imHeight"])
    if size is None:
        size = (patch_multiple(original_h, patch), patch_multiple(original_w, patch))
    if size[0] % patch or size[1] % patch:
        raise ShapeError(f"Rozmiar {size} nie dzieli się przez łatkę {patch}")

    gt_path = path / "gt" / "gt.txt"
    records = read_motchallenge(gt_path) if gt_path.is_file() else {}
    frames = []
    for index, image_path in enumerate(image_paths):
        image = resize_image(_read_image(image_path), *size)
        annotations = []
        for record in records.get(index + 1, []):
            bbox = BBox.from_pixels(record.left, record.top, record.width, record.height,
                                    original_w, original_h)
            if bbox is not None:
                annotations.append(Annotation(record.track_id - 1, bbox, visible=record.confidence > 0))
        frames.append(FrameObservation(index, image, annotations=annotations, gt_ids=[]))
    logger.info("Wczytano {} klatek z {} (rozmiar {}x{})", len(frames), path, *size)
    return apply_oracle(frames, oracle or OracleConfig(), oracle_seed)
