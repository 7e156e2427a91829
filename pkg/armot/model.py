"""
Złożony model śledzący: tokenizer obrazu, adapter obiektów, RAA, TMF,
słownik identyfikatorów, dekoder przyczynowy i opcjonalny detektor.
"""

from dataclasses import dataclass

import torch
from loguru import logger
from torch import nn

from armot.config import build_config, config_to_mapping
from armot.core import DEFAULT_CAPACITY, IDVocabulary, ModelDims
from armot.decoder import CausalDecoder, DecoderConfig, load_checkpoint, save_checkpoint
from armot.detector import ToyDetector, decode_detections
from armot.errors import CheckpointError, ConfigError
from armot.raa import AlignedObjectToken, RegionAlignment, align_many, covered_patches
from armot.sequence import FrameTokens
from armot.tmf import TemporalMemoryFusion
from armot.tokenizer import BoxDiscretizer, ImageTokenizer, ImageTokens, ObjectAdapter, discretize_box, query_tensor

TOKEN_MODES = ("query", "box")
DETECTORS = ("oracle", "toy")


@dataclass(frozen=True)
class ModelConfig:
    """Płaska konfiguracja modelu (klucze pliku konfiguracyjnego)."""
    d_img: int = 64
    d_lm: int = 128
    d_det: int = 64
    patch: int = 8
    channels: int = 3
    capacity: int = DEFAULT_CAPACITY
    layers: int = 6
    heads: int = 4
    ffn: int = 256
    max_len: int = 512
    dropout: float = 0.1
    token_mode: str = "query"
    n_bins: int = 200
    alpha: float = 1.0
    use_raa: bool = True
    use_tmf: bool = False
    history_images: bool = False
    detector: str = "oracle"
    n_queries: int = 16

    def __post_init__(self):
        if self.token_mode not in TOKEN_MODES:
            raise ConfigError(f"Nieznany token_mode {self.token_mode!r}, dozwolone: {', '.join(TOKEN_MODES)}")
        if self.detector not in DETECTORS:
            raise ConfigError(f"Nieznany detector {self.detector!r}, dozwolone: {', '.join(DETECTORS)}")
        if self.token_mode == "box" and self.use_tmf:
            raise ConfigError("TMF wymaga ciągłych tokenów obiektów (token_mode = query)")
        if self.capacity < 1:
            raise ConfigError(f"capacity musi być dodatnie: {self.capacity}")
        self.dims.check_heads(self.heads)
        self.decoder_config()
        self.discretizer()

    @property
    def dims(self):
        return ModelDims(self.d_img, self.d_lm, self.d_det, self.patch)

    def decoder_config(self):
        return DecoderConfig(self.layers, self.heads, self.d_lm, self.ffn, self.max_len, self.dropout)

    def discretizer(self):
        return BoxDiscretizer(self.n_bins, self.alpha, offset=self.capacity + 1)


class ArMotModel(nn.Module):
    """Model z wszystkimi komponentami; tryb pracy wynika z ModelConfig."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        dims = config.dims
        self.vocab = IDVocabulary(config.capacity, config.d_lm)
        self.image_tokenizer = ImageTokenizer(dims, channels=config.channels)
        self.object_adapter = ObjectAdapter(dims)
        self.raa = RegionAlignment(config.d_lm)
        self.raa.init_identity()
        self.tmf = TemporalMemoryFusion(config.d_lm, config.heads) if config.use_tmf else None
        n_bin_tokens = config.n_bins if config.token_mode == "box" else 0
        self.decoder = CausalDecoder(config.decoder_config(), self.vocab, n_bin_tokens)
        self.detector = ToyDetector(dims, config.n_queries, config.heads) if config.detector == "toy" else None

    @property
    def device(self):
        return self.decoder.device

    @property
    def new_index(self):
        return self.vocab.new_index

    def tokenize_images(self, images):
        """Obrazy B x H x W x C -> (tokeny B x N x d_lm, cechy B x N x d_img, grid_h, grid_w)."""
        batch = torch.as_tensor(images, dtype=torch.float32, device=self.device).permute(0, 3, 1, 2)
        return self.image_tokenizer.encode(batch)

    def object_tokens(self, detections, image):
        """
        Reprezentacje obiektów w kolejności detekcji.

        Args:
            detections: Lista Detection
            image: ImageTokens tej klatki

        Returns:
            Lista AlignedObjectToken (tryb zapytań) albo krotek 4 tokenów (tryb prostokątów)
        """
        if self.config.token_mode == "box":
            disc = self.config.discretizer()
            return [discretize_box(d.bbox, disc) for d in detections]
        if not detections:
            return []
        for detection in detections:
            detection.check_dims(self.config.dims)
        queries = torch.stack([query_tensor(d, self.device) for d in detections])
        tokens = self.object_adapter(queries)
        bboxes = [d.bbox for d in detections]
        if self.config.use_raa:
            tokens = align_many(tokens, bboxes, image.tokens, image.grid_h, image.grid_w, self.raa)
        return [AlignedObjectToken(tokens[i], i, tuple(covered_patches(b, image.grid_h, image.grid_w)))
                for i, b in enumerate(bboxes)]

    def detect(self, features, grid_h, grid_w, frames):
        """Detekcje dla wsadu klatek: z detektora (tryb toy) albo z klatek (wyrocznia)."""
        if self.detector is None:
            return [list(frame.detections) for frame in frames]
        output = self.detector(features, grid_h, grid_w)
        return [decode_detections(output, b) for b in range(len(frames))]

    def encode_frames(self, frames):
        images = torch.stack([torch.as_tensor(f.image, dtype=torch.float32) for f in frames])
        return self.tokenize_images(images)

    def frame_tokens(self, frames, detections=None, encoded=None, gt_ids=None):
        """
        Tokenizuje klatki (wsadowo) i buduje FrameTokens.

        Args:
            frames: Lista FrameObservation
            detections: Opcjonalne listy detekcji (domyślnie z detect)
            encoded: Wynik encode_frames, jeśli już policzony
            gt_ids: Opcjonalne listy id gt zgodne z detections (domyślnie frame.gt_ids)

        Returns:
            Lista FrameTokens
        """
        tokens, features, grid_h, grid_w = encoded if encoded is not None else self.encode_frames(frames)
        if detections is None:
            detections = self.detect(features, grid_h, grid_w, frames)
        result = []
        for b, frame in enumerate(frames):
            image = ImageTokens(tokens[b], grid_h, grid_w, features[b])
            ids = gt_ids[b] if gt_ids is not None else frame.gt_ids
            result.append(FrameTokens(image, self.object_tokens(detections[b], image), detections[b], ids))
        return result


def model_header(config):
    return {
        "model": config_to_mapping(config),
        "dims": config_to_mapping(config.dims),
        "decoder": config_to_mapping(config.decoder_config()),
        "capacity": config.capacity,
    }


def save_model(model, path):
    save_checkpoint(path, model_header(model.config), model.state_dict())


def load_model(path, device="cpu"):
    """
    Wczytuje model z punktu kontrolnego.

    Raises:
        CheckpointError: brak pliku, zła wersja albo niezgodne parametry
    """
    header, state = load_checkpoint(path, map_location=device)
    try:
        config = build_config(ModelConfig, header["model"])
    except (KeyError, ConfigError) as exc:
        raise CheckpointError(f"Niepoprawny nagłówek punktu kontrolnego {path}: {exc}") from exc
    model = ArMotModel(config)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"Parametry punktu kontrolnego {path} nie pasują do konfiguracji: {exc}") from exc
    logger.info("Wczytano model z {} (tryb tokenów {}, TMF {})", path, config.token_mode, config.use_tmf)
    return model.to(device).eval()
