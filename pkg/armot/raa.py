"""
Wyrównanie z regionem (RAA): token obiektu jest łączony ze średnią tokenów
obrazu z łatek, które pokrywa prostokąt detekcji.
"""

import math
from dataclasses import dataclass

import torch
from torch import nn

from armot.errors import ShapeError


@dataclass
class AlignedObjectToken:
    """Wyrównany token obiektu (d_lm) z indeksem detekcji i listą pokrytych łatek."""
    vector: torch.Tensor
    detection_index: int
    patches: tuple

    def __post_init__(self):
        if not self.patches:
            raise ShapeError("Wyrównany token musi pokrywać co najmniej jedną łatkę")


def covered_patches(bbox, grid_h, grid_w):
    """
    Łatki, których komórka przecina prostokąt z dodatnim polem.

    Args:
        bbox: BBox
        grid_h: Liczba wierszy siatki łatek
        grid_w: Liczba kolumn siatki łatek

    Returns:
        Lista indeksów łatek w kolejności wierszowej (nigdy pusta)
    """
    c0 = max(int(math.floor(bbox.x1 * grid_w)), 0)
    c1 = min(int(math.ceil(bbox.x2 * grid_w)) - 1, grid_w - 1)
    r0 = max(int(math.floor(bbox.y1 * grid_h)), 0)
    r1 = min(int(math.ceil(bbox.y2 * grid_h)) - 1, grid_h - 1)
    if c0 > c1 or r0 > r1:
        cx, cy = bbox.center
        row = min(int(cy * grid_h), grid_h - 1)
        col = min(int(cx * grid_w), grid_w - 1)
        return [row * grid_w + col]
    return [r * grid_w + c for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)]


def region_mean(image_tokens, patches):
    """Średnia tokenów obrazu (N x d_lm) po wskazanych łatkach."""
    index = torch.as_tensor(patches, dtype=torch.long, device=image_tokens.device)
    return image_tokens.index_select(0, index).mean(dim=0)


class RegionAlignment(nn.Module):
    """Warstwa liniowa 2·d_lm -> d_lm na konkatenacji (token obiektu, średnia regionu)."""

    def __init__(self, d_lm):
        super().__init__()
        self.d_lm = d_lm
        self.fuse = nn.Linear(2 * d_lm, d_lm)

    def init_identity(self):
        """Wyjście równe tokenowi obiektu: jedynki na pierwszych d_lm wejściach, zera na regionie."""
        with torch.no_grad():
            self.fuse.weight.zero_()
            self.fuse.weight[:, :self.d_lm] = torch.eye(self.d_lm)
            self.fuse.bias.zero_()

    def forward(self, obj, region):
        if obj.shape[-1] != self.d_lm or region.shape[-1] != self.d_lm:
            raise ShapeError(f"RAA oczekuje wektorów długości {self.d_lm}")
        return self.fuse(torch.cat([obj, region], dim=-1))


def align(obj, bbox, img, fusion, detection_index=0):
    """
    Wzbogaca token obiektu o średnią tokenów obrazu z jego regionu.

    Args:
        obj: Token obiektu (d_lm)
        bbox: Prostokąt detekcji
        img: ImageTokens tej samej klatki
        fusion: RegionAlignment
        detection_index: Indeks źródłowej detekcji

    Returns:
        AlignedObjectToken
    """
    patches = covered_patches(bbox, img.grid_h, img.grid_w)
    vector = fusion(obj, region_mean(img.tokens, patches))
    return AlignedObjectToken(vector, detection_index, tuple(patches))


def align_many(objs, bboxes, image_tokens, grid_h, grid_w, fusion):
    """Wersja wsadowa: objs N x d_lm, tokeny obrazu (grid_h*grid_w) x d_lm -> N x d_lm."""
    if not bboxes:
        return objs
    regions = torch.stack([region_mean(image_tokens, covered_patches(b, grid_h, grid_w)) for b in bboxes])
    return fusion(objs, regions)
