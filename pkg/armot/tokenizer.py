"""
Tokenizacja obrazu i obiektów.

- ImageTokenizer: mały koder łatek P x P (d_img kanałów) + adapter wizyjny
  (dwuwarstwowy perceptron) do przestrzeni dekodera d_lm
- ObjectAdapter: stos warstw perceptronu d_det -> d_lm (token obiektu E)
- BoxDiscretizer: zamiana prostokąta na 4 dyskretne tokeny przedziałów
- encode_query: zamrożony zastępnik zapytania detektora dla detekcji z wyroczni
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
from torch import nn

from armot.errors import ConfigError, ShapeError

QUERY_FEATURES = 10
QUERY_SCALE = 4.0
QUERY_SEED = 20240611


@dataclass
class ImageTokens:
    """Tokeny obrazu (grid_h * grid_w) x d_lm w kolejności wierszowej oraz cechy łatek d_img."""
    tokens: torch.Tensor
    grid_h: int
    grid_w: int
    features: torch.Tensor = None

    def __post_init__(self):
        if self.tokens.shape[0] != self.grid_h * self.grid_w:
            raise ShapeError(f"Liczba tokenów {self.tokens.shape[0]} != {self.grid_h} x {self.grid_w}")

    def __len__(self):
        return self.tokens.shape[0]


def image_to_tensor(image, device=None):
    """Zamienia obraz H x W x C (numpy lub tensor) na tensor 1 x C x H x W float32."""
    if isinstance(image, np.ndarray):
        image = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
    return image.to(device=device, dtype=torch.float32).permute(2, 0, 1).unsqueeze(0)


class ImageTokenizer(nn.Module):
    """Koder łatek (splot P x P z krokiem P) i adapter wizyjny do d_lm."""

    def __init__(self, dims, channels=3):
        super().__init__()
        self.dims = dims
        self.encoder = nn.Sequential(
            nn.Conv2d(channels, dims.d_img, kernel_size=dims.patch, stride=dims.patch),
            nn.GELU(),
            nn.Conv2d(dims.d_img, dims.d_img, kernel_size=1),
        )
        self.adapter = nn.Sequential(
            nn.Linear(dims.d_img, dims.d_lm),
            nn.GELU(),
            nn.Linear(dims.d_lm, dims.d_lm),
        )

    def encode(self, images):
        """
        Args:
            images: Tensor B x C x H x W

        Returns:
            Krotka (tokeny B x N x d_lm, cechy B x N x d_img, grid_h, grid_w)
        """
        _, _, height, width = images.shape
        patch = self.dims.patch
        if height % patch or width % patch:
            raise ShapeError(f"Obraz {height}x{width} nie dzieli się na łatki {patch}x{patch}")
        features = self.encoder(images)
        grid_h, grid_w = features.shape[2], features.shape[3]
        # B x d_img x gh x gw -> B x (gh*gw) x d_img, kolejność wierszowa
        features = features.flatten(2).transpose(1, 2)
        return self.adapter(features), features, grid_h, grid_w

    def forward(self, image):
        device = next(self.parameters()).device
        tokens, features, grid_h, grid_w = self.encode(image_to_tensor(image, device))
        return ImageTokens(tokens[0], grid_h, grid_w, features[0])


def image_tokenize(image, dims, tokenizer=None):
    """
    Dzieli obraz na łatki P x P i zwraca tokeny obrazu w przestrzeni dekodera.

    Args:
        image: Tablica H x W x C
        dims: ModelDims
        tokenizer: Wytrenowany ImageTokenizer (gdy None, tworzony jest nowy)

    Returns:
        ImageTokens
    """
    height, width = image.shape[0], image.shape[1]
    if height % dims.patch or width % dims.patch:
        raise ShapeError(f"Obraz {height}x{width} nie dzieli się na łatki {dims.patch}x{dims.patch}")
    tokenizer = tokenizer or ImageTokenizer(dims, channels=image.shape[2])
    return tokenizer(image)


class ObjectAdapter(nn.Module):
    """Adapter obiektów: zapytanie detektora Q (d_det) -> token obiektu E (d_lm)."""

    def __init__(self, dims, n_layers=2):
        super().__init__()
        self.dims = dims
        layers = [nn.Linear(dims.d_det, dims.d_lm)]
        for _ in range(n_layers - 1):
            layers += [nn.GELU(), nn.Linear(dims.d_lm, dims.d_lm)]
        self.mlp = nn.Sequential(*layers)

    def zero_init_last(self):
        nn.init.zeros_(self.mlp[-1].weight)
        nn.init.zeros_(self.mlp[-1].bias)

    def forward(self, queries):
        if queries.shape[-1] != self.dims.d_det:
            raise ShapeError(f"Zapytanie ma długość {queries.shape[-1]}, oczekiwano d_det={self.dims.d_det}")
        return self.mlp(queries)


def query_tensor(detection, device=None):
    query = detection.query_embedding
    if isinstance(query, np.ndarray):
        query = torch.from_numpy(query.astype(np.float32))
    return query.to(device=device, dtype=torch.float32)


def object_tokenize_query(detection, adapter):
    """
    Zamienia detekcję na token obiektu (wektor d_lm).

    Args:
        detection: Detection z query_embedding długości d_det
        adapter: ObjectAdapter

    Returns:
        Tensor d_lm
    """
    detection.check_dims(adapter.dims)
    device = next(adapter.parameters()).device
    return adapter(query_tensor(detection, device))


@dataclass(frozen=True)
class BoxDiscretizer:
    """
    Dyskretyzacja współrzędnych: n_bins przedziałów skalowanych przez alpha,
    indeks tokenu = offset + numer przedziału.
    """
    n_bins: int = 200
    alpha: float = 1.0
    offset: int = 0

    def __post_init__(self):
        if self.n_bins < 1:
            raise ConfigError(f"n_bins musi być dodatnie: {self.n_bins}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha musi należeć do (0, 1]: {self.alpha}")
        if self.offset < 0:
            raise ConfigError(f"offset musi być nieujemny: {self.offset}")

    @property
    def effective_bins(self):
        return max(1, int(round(self.alpha * self.n_bins)))

    def bin(self, coordinate):
        bins = self.effective_bins
        return min(int(math.floor(coordinate * bins)), bins - 1)


def discretize_box(bbox, disc):
    """
    Zwraca 4 indeksy tokenów [x1, y1, x2, y2] dla prostokąta.

    Args:
        bbox: BBox
        disc: BoxDiscretizer

    Returns:
        Krotka 4 liczb całkowitych
    """
    return tuple(disc.offset + disc.bin(c) for c in bbox.as_tuple())


@lru_cache(maxsize=8)
def _fourier_matrix(in_dim, half):
    rng = np.random.default_rng(QUERY_SEED)
    return rng.normal(0.0, QUERY_SCALE, size=(in_dim, half))


def appearance_statistics(image, bbox):
    """Średnia i odchylenie standardowe każdego kanału obrazu wewnątrz prostokąta."""
    height, width = image.shape[0], image.shape[1]
    r0 = min(int(math.floor(bbox.y1 * height)), height - 1)
    c0 = min(int(math.floor(bbox.x1 * width)), width - 1)
    r1 = max(int(math.ceil(bbox.y2 * height)), r0 + 1)
    c1 = max(int(math.ceil(bbox.x2 * width)), c0 + 1)
    crop = image[r0:r1, c0:c1].reshape(-1, image.shape[2]).astype(np.float64)
    return np.concatenate([crop.mean(axis=0), crop.std(axis=0)])


def encode_query(bbox, appearance, d_det):
    """
    Zamrożone zapytanie detektora: losowe cechy Fouriera z (prostokąt, statystyki wyglądu).

    Args:
        bbox: BBox
        appearance: Wektor statystyk wyglądu (lub None)
        d_det: Długość wyniku

    Returns:
        Tablica float32 długości d_det
    """
    appearance = np.zeros(QUERY_FEATURES - 4) if appearance is None else np.asarray(appearance, dtype=np.float64)
    features = np.concatenate([bbox.as_array(), appearance[:QUERY_FEATURES - 4]])
    features = np.pad(features, (0, QUERY_FEATURES - features.shape[0]))
    half = (d_det + 1) // 2
    projected = 2.0 * np.pi * features @ _fourier_matrix(QUERY_FEATURES, half)
    encoded = np.concatenate([np.sin(projected), np.cos(projected)])[:d_det]
    return encoded.astype(np.float32)
