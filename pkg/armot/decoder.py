"""
Przyczynowy dekoder transformera nad slotami ciągłymi i dyskretnymi.

Sloty dyskretne o indeksie < K + 1 są osadzane tablicą słownika identyfikatorów,
wyższe indeksy (tokeny przedziałów prostokąta) osobną tablicą. Głowica wyjściowa
jest związana z tablicą identyfikatorów: logity = h · E^T.
"""

import os
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from loguru import logger
from torch import nn

from armot.errors import CheckpointError, ConfigError, SequenceTooLongError
from armot.sequence import DiscreteSlot

CHECKPOINT_MAGIC = "ARMOT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DecoderConfig:
    layers: int = 6
    heads: int = 4
    d_lm: int = 128
    ffn: int = 256
    max_len: int = 512
    dropout: float = 0.1
    positional: str = "learned"

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.ffn < 1 or self.max_len < 1:
            raise ConfigError("layers, heads, ffn i max_len muszą być dodatnie")
        if self.d_lm % self.heads:
            raise ConfigError(f"d_lm={self.d_lm} nie dzieli się przez liczbę głów {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout musi należeć do [0, 1): {self.dropout}")
        if self.positional != "learned":
            raise ConfigError(f"Nieobsługiwane kodowanie pozycji: {self.positional!r}")


@dataclass
class DecoderOutput:
    """Logity P x (K + 1) w pozycjach predykcji oraz stany ukryte L x d_lm."""
    logits: torch.Tensor
    hidden: torch.Tensor


class DecoderLayer(nn.Module):
    """Warstwa pre-norm: uwaga przyczynowa i sieć FFN z połączeniami resztkowymi."""

    def __init__(self, d_model, heads, ffn, dropout):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(d_model, heads, dropout=dropout, batch_first=True)
        self.linear1 = nn.Linear(d_model, ffn)
        self.linear2 = nn.Linear(ffn, d_model)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(dropout)
        nn.init.normal_(self.linear1.weight, std=0.02)
        nn.init.normal_(self.linear2.weight, std=0.02)

    def forward(self, x, mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, h, attn_mask=mask, need_weights=False)[0])
        h = self.norm2(x)
        return x + self.dropout(self.linear2(F.gelu(self.linear1(h))))


def causal_mask(length, device=None):
    """Maska logiczna L x L: True oznacza zablokowaną (przyszłą) pozycję."""
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class CausalDecoder(nn.Module):
    """
    Dekoder przyczynowy.

    Args:
        config: DecoderConfig
        vocab: IDVocabulary (współdzielona tablica osadzeń i głowica wyjściowa)
        n_bin_tokens: Liczba tokenów przedziałów prostokąta (0 w trybie zapytań)
    """

    def __init__(self, config, vocab, n_bin_tokens=0):
        super().__init__()
        self.config = config
        self.vocab = vocab
        self.n_bin_tokens = n_bin_tokens
        self.bin_embedding = nn.Embedding(n_bin_tokens, config.d_lm) if n_bin_tokens else None
        if self.bin_embedding is not None:
            nn.init.normal_(self.bin_embedding.weight, std=0.02)
        self.positions = nn.Embedding(config.max_len, config.d_lm)
        nn.init.normal_(self.positions.weight, std=0.02)
        self.layers = nn.ModuleList(
            DecoderLayer(config.d_lm, config.heads, config.ffn, config.dropout) for _ in range(config.layers))
        self.norm = nn.LayerNorm(config.d_lm)

    @property
    def device(self):
        return self.positions.weight.device

    def embed_discrete(self, indices):
        id_size = self.vocab.size
        is_id = indices < id_size
        out = self.vocab(torch.where(is_id, indices, torch.zeros_like(indices)))
        if self.bin_embedding is not None and not bool(is_id.all()):
            bins = self.bin_embedding(torch.where(is_id, torch.zeros_like(indices), indices - id_size))
            out = torch.where(is_id.unsqueeze(-1), out, bins)
        elif not bool(is_id.all()):
            raise ConfigError(f"Indeks tokenu >= {id_size}, a dekoder nie ma tokenów przedziałów")
        return out

    def embed(self, seq):
        """Zamienia sloty sekwencji na macierz L x d_lm."""
        discrete = [(i, slot.index) for i, slot in enumerate(seq.slots) if isinstance(slot, DiscreteSlot)]
        rows = [None] * len(seq.slots)
        if discrete:
            indices = torch.tensor([index for _, index in discrete], device=self.device)
            embedded = self.embed_discrete(indices)
            for k, (i, _) in enumerate(discrete):
                rows[i] = embedded[k]
        for i, slot in enumerate(seq.slots):
            if rows[i] is None:
                rows[i] = slot.vector.to(self.device)
        return torch.stack(rows)

    def run(self, x):
        """Przebieg przez warstwy dla wejścia B x L x d_lm (po dodaniu pozycji)."""
        length = x.shape[1]
        if length > self.config.max_len:
            raise SequenceTooLongError(f"Sekwencja ma {length} slotów, max_len={self.config.max_len}")
        x = x + self.positions(torch.arange(length, device=x.device))
        mask = causal_mask(length, x.device)
        for layer in self.layers:
            x = layer(x, mask)
        return self.norm(x)

    def logits_from_hidden(self, hidden):
        return hidden @ self.vocab.output_weight().T

    def forward(self, seq):
        """
        Args:
            seq: TokenSequence

        Returns:
            DecoderOutput z logitami dla każdej pozycji predykcji
        """
        if len(seq) > self.config.max_len:
            raise SequenceTooLongError(f"Sekwencja ma {len(seq)} slotów, max_len={self.config.max_len}")
        if any(p < 1 for p in seq.predict_positions):
            raise ConfigError("Pozycja predykcji musi być >= 1")
        hidden = self.run(self.embed(seq).unsqueeze(0))[0]
        read = torch.tensor([p - 1 for p in seq.predict_positions], dtype=torch.long, device=hidden.device)
        return DecoderOutput(self.logits_from_hidden(hidden.index_select(0, read)), hidden)

    def forward_batch(self, seqs):
        """
        Przebieg wsadowy (dopełnienie zerami na końcu; maska przyczynowa wystarcza,
        bo dopełnienie leży za wszystkimi prawdziwymi slotami).

        Returns:
            Krotka (logity wszystkich pozycji predykcji złączone w kolejności sekwencji,
            cele w tej samej kolejności albo None, stany ukryte B x L x d_lm)
        """
        length = max(len(s) for s in seqs)
        if length > self.config.max_len:
            raise SequenceTooLongError(f"Sekwencja ma {length} slotów, max_len={self.config.max_len}")
        batch = torch.zeros(len(seqs), length, self.config.d_lm, device=self.device)
        for b, seq in enumerate(seqs):
            batch[b, :len(seq)] = self.embed(seq)
        hidden = self.run(batch)
        rows, cols, targets = [], [], []
        for b, seq in enumerate(seqs):
            rows += [b] * len(seq.predict_positions)
            cols += [p - 1 for p in seq.predict_positions]
            if seq.target_ids is not None:
                targets += seq.target_ids
        picked = hidden[torch.tensor(rows, device=self.device), torch.tensor(cols, device=self.device)]
        target_tensor = torch.tensor(targets, dtype=torch.long, device=self.device) if targets else None
        return self.logits_from_hidden(picked), target_tensor, hidden


def constrained_argmax(logits, constraint):
    """
    Wybiera najlepszy dopuszczalny indeks.

    Args:
        logits: Wektor K + 1 logitów
        constraint: Niepusty zbiór dopuszczalnych indeksów

    Returns:
        Krotka (indeks, prawdopodobieństwo softmax w obrębie zbioru)
    """
    allowed = sorted(constraint)
    if not allowed:
        raise ConfigError("Zbiór dopuszczalnych identyfikatorów jest pusty")
    subset = logits[torch.tensor(allowed, device=logits.device)]
    probs = torch.softmax(subset.double(), dim=0)
    best = int(torch.argmax(probs))
    return allowed[best], float(probs[best])


def predict_id(decoder, seq, constraint):
    """Przewiduje identyfikator w ostatniej pozycji predykcji sekwencji."""
    output = decoder(seq)
    index, confidence = constrained_argmax(output.logits[-1], constraint)
    return index, confidence, output


def save_checkpoint(path, header, state_dict):
    """
    Zapisuje punkt kontrolny: nagłówek (magia, wersja, konfiguracje) i parametry.

    Raises:
        CheckpointError: ze ścieżką i przyczyną, gdy zapis się nie powiedzie
    """
    path = Path(path)
    payload = {"magic": CHECKPOINT_MAGIC, "version": CHECKPOINT_VERSION,
               "header": header, "state_dict": state_dict}
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except (OSError, RuntimeError) as exc:
        raise CheckpointError(f"Nie można zapisać punktu kontrolnego {path}: {exc}") from exc
    logger.info("Zapisano punkt kontrolny {}", path)


def load_checkpoint(path, map_location="cpu"):
    """
    Wczytuje punkt kontrolny i sprawdza magię oraz wersję.

    Returns:
        Krotka (nagłówek, state_dict)
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location=map_location, weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"Nie można odczytać punktu kontrolnego {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} nie jest punktem kontrolnym armot")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Nieobsługiwana wersja punktu kontrolnego {payload.get('version')} (oczekiwano {CHECKPOINT_VERSION})")
    return payload["header"], payload["state_dict"]
