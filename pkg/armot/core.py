"""
Typy domenowe: wymiary modelu, prostokąty, detekcje, klatki, kontekst śladu
oraz słownik identyfikatorów z tokenem <new>.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from torch import nn

from armot.errors import CapacityExhaustedError, ConfigError, InvalidBoxError, ShapeError

NEW_TOKEN = "<new>"
DEFAULT_CAPACITY = 64


@dataclass(frozen=True)
class ModelDims:
    """Szerokości kanałów: koder obrazu, dekoder, zapytania detektora oraz bok łatki."""
    d_img: int = 64
    d_lm: int = 128
    d_det: int = 64
    patch: int = 8

    def __post_init__(self):
        for name in ("d_img", "d_lm", "d_det", "patch"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"ModelDims.{name} musi być dodatnią liczbą całkowitą, jest {value!r}")

    def check_heads(self, heads):
        """Sprawdza, czy d_lm dzieli się przez liczbę głów uwagi."""
        if heads < 1 or self.d_lm % heads != 0:
            raise ConfigError(f"d_lm={self.d_lm} nie dzieli się przez liczbę głów {heads}")


@dataclass(frozen=True)
class BBox:
    """Prostokąt w znormalizowanych współrzędnych [0, 1] (x1, y1, x2, y2)."""
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise InvalidBoxError(f"Niepoprawny prostokąt: {self.as_tuple()}")

    @classmethod
    def clamped(cls, x1, y1, x2, y2):
        """
        Przycina współrzędne do [0, 1].

        Returns:
            BBox albo None, jeśli po przycięciu prostokąt jest zdegenerowany
        """
        x1, x2 = float(np.clip(x1, 0.0, 1.0)), float(np.clip(x2, 0.0, 1.0))
        y1, y2 = float(np.clip(y1, 0.0, 1.0)), float(np.clip(y2, 0.0, 1.0))
        if x1 >= x2 or y1 >= y2:
            return None
        return cls(x1, y1, x2, y2)

    @classmethod
    def from_pixels(cls, left, top, width, height, image_width, image_height):
        """Tworzy prostokąt z pikselowego zapisu MOTChallenge (lewy, górny, szerokość, wysokość)."""
        return cls.clamped(left / image_width, top / image_height,
                           (left + width) / image_width, (top + height) / image_height)

    def to_pixels(self, image_width, image_height):
        """Zwraca (lewy, górny, szerokość, wysokość) w pikselach."""
        left = self.x1 * image_width
        top = self.y1 * image_height
        return left, top, self.x2 * image_width - left, self.y2 * image_height - top

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def as_array(self):
        return np.array(self.as_tuple(), dtype=np.float64)

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))


@dataclass
class Detection:
    """
    Jedna detekcja: prostokąt, pewność, wektor zapytania detektora (d_det)
    i opcjonalny deskryptor wyglądu z symulatora.
    """
    bbox: BBox
    confidence: float
    query_embedding: object
    appearance: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError(f"Pewność detekcji poza [0, 1]: {self.confidence}")

    def check_dims(self, dims):
        length = int(self.query_embedding.shape[-1])
        if length != dims.d_det:
            raise ShapeError(f"Długość zapytania {length} != d_det={dims.d_det}")


@dataclass(frozen=True)
class Annotation:
    """Prostokąt ground truth jednego obiektu w klatce; niewidoczny w trakcie zasłonięcia."""
    track_id: int
    bbox: BBox
    visible: bool = True


@dataclass
class FrameObservation:
    """
    Klatka nagrania: obraz H x W x C, detekcje (w kolejności detektora),
    identyfikatory gt zgodne z detekcjami (-1 = fałszywy alarm) oraz adnotacje gt.
    """
    frame_index: int
    image: np.ndarray
    detections: list = field(default_factory=list)
    gt_ids: Optional[list] = None
    annotations: list = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ConfigError(f"Indeks klatki musi być nieujemny: {self.frame_index}")
        if self.image.ndim != 3:
            raise ConfigError(f"Obraz musi mieć kształt H x W x C, ma {self.image.shape}")
        if self.gt_ids is not None and len(self.gt_ids) != len(self.detections):
            raise ConfigError("gt_ids musi mieć tyle elementów co detections")

    @property
    def height(self):
        return self.image.shape[0]

    @property
    def width(self):
        return self.image.shape[1]

    def visible_annotations(self):
        return [a for a in self.annotations if a.visible]


@dataclass
class TrackContext:
    """
    Wpis menedżera kontekstu czasowego (TCM): identyfikator w słowniku, ostatni token
    obiektu, liczba klatek nieobecności, klatki pierwszego i ostatniego przypisania
    oraz etykieta śladu w wyniku (identyfikatory słownika wracają do puli, etykiety nie).
    """
    track_id: int
    latest_token: object
    n_lost: int = 0
    last_seen: int = 0
    first_seen: int = 0
    label: int = None

    def mark_seen(self, token, frame_index):
        self.latest_token = token
        self.n_lost = 0
        self.last_seen = frame_index

    def mark_missing(self, frame_index):
        self.n_lost = frame_index - self.last_seen

    def expired(self, tau_loss):
        """Czy w następnej klatce przerwa od ostatniego przypisania przekroczy tau_loss."""
        return self.n_lost + 1 > tau_loss


class IDVocabulary(nn.Module):
    """
    Słownik tożsamości: K konkretnych identyfikatorów [0, K) oraz token <new>
    pod indeksem K. Tablica osadzeń ma K + 1 uczonych wierszy długości d_lm
    i jest współdzielona z głowicą wyjściową dekodera.
    """

    def __init__(self, capacity=DEFAULT_CAPACITY, d_lm=128):
        super().__init__()
        if capacity < 1:
            raise ConfigError(f"Pojemność słownika musi być dodatnia: {capacity}")
        self.capacity = capacity
        self.embedding = nn.Embedding(capacity + 1, d_lm)
        nn.init.normal_(self.embedding.weight, std=0.02)

    @property
    def new_index(self):
        return self.capacity

    @property
    def size(self):
        return self.capacity + 1

    def is_concrete(self, index):
        return 0 <= index < self.capacity

    def forward(self, indices):
        return self.embedding(indices)

    def output_weight(self):
        """Macierz (K + 1) x d_lm używana jako głowica wyjściowa (wagi wiązane)."""
        return self.embedding.weight


def assign_free_id(active_ids, vocab):
    """
    Zwraca najmniejszy identyfikator z [0, K), którego nie ma w active_ids.

    Args:
        active_ids: Zbiór zajętych identyfikatorów
        vocab: IDVocabulary (lub liczba K)

    Returns:
        Wolny identyfikator

    Raises:
        CapacityExhaustedError: gdy wszystkie K identyfikatorów jest zajętych
    """
    capacity = vocab if isinstance(vocab, int) else vocab.capacity
    for candidate in range(capacity):
        if candidate not in active_ids:
            return candidate
    raise CapacityExhaustedError(
        f"Wszystkie {capacity} identyfikatory są zajęte - zwiększ capacity (K)")


def canonical_order(detections):
    """
    Kolejność kanoniczna obiektów w klatce: malejąca pewność,
    przy remisie rosnące x1, potem y1.

    Returns:
        Lista indeksów detekcji
    """
    return sorted(range(len(detections)),
                  key=lambda i: (-detections[i].confidence, detections[i].bbox.x1, detections[i].bbox.y1))
