"""
Fuzja pamięci czasowej (TMF): aktualizacja pamięci śladu uwagą wielogłową.

fused = L (stan ukryty dekodera) + T (pamięć śladu)
T' = LayerNorm(fused + MHA(q=fused, k=fused, v=E))
gdzie E to wyrównany token obiektu z bieżącej klatki. Każdy ślad ma sekwencję
długości 1, więc ślady są od siebie niezależne.
"""

from dataclasses import dataclass

import torch
from torch import nn

from armot.errors import ShapeError


@dataclass
class TrackMemory:
    """Pamięć jednego śladu (wektor d_lm) i znacznik inicjalizacji."""
    vector: torch.Tensor = None
    initialized: bool = False


class TemporalMemoryFusion(nn.Module):
    """Moduł TMF: uwaga wielogłowa (batch_first) i normalizacja warstwy."""

    def __init__(self, d_lm, heads=4, dropout=0.0):
        super().__init__()
        if d_lm % heads:
            raise ShapeError(f"d_lm={d_lm} nie dzieli się przez {heads} głów")
        self.d_lm = d_lm
        self.attention = nn.MultiheadAttention(d_lm, heads, dropout=dropout, batch_first=True)
        self.norm = nn.LayerNorm(d_lm)

    def zero_init_output(self):
        nn.init.zeros_(self.attention.out_proj.weight)
        nn.init.zeros_(self.attention.out_proj.bias)

    def forward(self, hidden, history, embed):
        """
        Args:
            hidden: Stany ukryte B x d_lm
            history: Pamięci B x d_lm (dla nowych śladów równe hidden)
            embed: Wyrównane tokeny obiektów B x d_lm

        Returns:
            Nowe pamięci B x d_lm
        """
        for tensor in (hidden, history, embed):
            if tensor.shape[-1] != self.d_lm:
                raise ShapeError(f"TMF oczekuje wektorów długości {self.d_lm}, jest {tensor.shape[-1]}")
        fused = (hidden + history).unsqueeze(1)
        attended, _ = self.attention(fused, fused, embed.unsqueeze(1), need_weights=False)
        return self.norm(fused + attended).squeeze(1)

    def update_many(self, hidden, memories, embed):
        """Aktualizuje listę TrackMemory; niezainicjalizowana historia przyjmuje stan ukryty."""
        history = torch.stack([
            m.vector if m.initialized else hidden[i] for i, m in enumerate(memories)
        ]) if memories else hidden
        updated = self(hidden, history, embed)
        return [TrackMemory(vector, True) for vector in updated]


def tmf_update(current_hidden, history, current_embed, module):
    """
    Aktualizuje pamięć jednego śladu.

    Args:
        current_hidden: Stan ukryty dekodera w pozycji obiektu (d_lm)
        history: TrackMemory
        current_embed: Wyrównany token obiektu (d_lm)
        module: TemporalMemoryFusion

    Returns:
        Nowa TrackMemory
    """
    past = history.vector if history.initialized else current_hidden
    if past.shape[-1] != current_hidden.shape[-1]:
        raise ShapeError("Pamięć śladu i stan ukryty mają różne długości")
    updated = module(current_hidden.unsqueeze(0), past.unsqueeze(0), current_embed.unsqueeze(0))
    return TrackMemory(updated[0], True)
