"""
Budowa sekwencji wejściowej dekodera.

Sekwencja składa się ze slotów ciągłych (tokeny obrazu, obiektów, pamięci)
i dyskretnych (identyfikatory, tokeny przedziałów prostokąta). Pozycja predykcji p
to indeks slotu identyfikatora; logity odczytywane są ze stanu ukrytego w p - 1.
"""

from dataclasses import dataclass, field

import numpy as np
import torch

from armot.core import assign_free_id, canonical_order
from armot.errors import CapacityExhaustedError, ClipTooShortError, ConfigError
from armot.raa import AlignedObjectToken


@dataclass
class ContinuousSlot:
    vector: torch.Tensor
    source: str = "object"


@dataclass
class DiscreteSlot:
    index: int
    source: str = "id"


@dataclass
class TokenSequence:
    """Sloty, pozycje predykcji i (w treningu) docelowe indeksy słownika."""
    slots: list = field(default_factory=list)
    predict_positions: list = field(default_factory=list)
    target_ids: list = None

    def __post_init__(self):
        if self.target_ids is not None and len(self.target_ids) != len(self.predict_positions):
            raise ConfigError("Liczba celów musi być równa liczbie pozycji predykcji")

    def __len__(self):
        return len(self.slots)


@dataclass
class FrameTokens:
    """
    Klatka gotowa do budowy sekwencji: tokeny obrazu, reprezentacje obiektów
    w kolejności detekcji (wektor / AlignedObjectToken albo krotka 4 tokenów
    przedziałów), detekcje (do kolejności kanonicznej) i identyfikatory gt.
    """
    image: object
    objects: list
    detections: list
    gt_ids: list = None

    def ordered(self):
        return canonical_order(self.detections)


@dataclass(frozen=True)
class SequenceConfig:
    """Budowa sekwencji treningowych."""
    capacity: int = 64
    window: int = None
    history_images: bool = False
    supervise_first_frame: bool = False
    random_id_assignment: bool = False

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigError(f"capacity musi być dodatnie: {self.capacity}")
        if self.window is not None and self.window < 1:
            raise ConfigError(f"window musi być >= 1: {self.window}")

    @property
    def new_index(self):
        return self.capacity


def image_slots(image):
    if image is None:
        return []
    return [ContinuousSlot(image.tokens[i], "image") for i in range(len(image))]


def object_slots(obj, source="object"):
    """Sloty jednego obiektu: jeden ciągły (wektor) albo 4 dyskretne (tryb prostokątów)."""
    if isinstance(obj, AlignedObjectToken):
        return [ContinuousSlot(obj.vector, source)]
    if isinstance(obj, torch.Tensor):
        return [ContinuousSlot(obj, source)]
    return [DiscreteSlot(int(index), "bin") for index in obj]


def build_frame_block(frame_tokens, pairs):
    """
    Blok klatki: [tokeny obrazu] + [E1, ID1, E2, ID2, ...].

    Args:
        frame_tokens: ImageTokens albo None
        pairs: Lista (token obiektu, indeks słownika) w kolejności kanonicznej

    Returns:
        Lista slotów
    """
    slots = image_slots(frame_tokens)
    for obj, index in pairs:
        slots.extend(object_slots(obj))
        slots.append(DiscreteSlot(int(index), "id"))
    return slots


def memory_block(memories):
    """Historia w trybie TMF: dla każdego śladu (rosnąco po id) token pamięci i jego identyfikator."""
    slots = []
    for vector, track_id in sorted(memories, key=lambda item: item[1]):
        slots.append(ContinuousSlot(vector, "memory"))
        slots.append(DiscreteSlot(int(track_id), "id"))
    return slots


def frame_sequence(history, image, objects, targets):
    """Sekwencja dla jednej klatki: historia, obraz, pary (obiekt, cel) z pozycjami predykcji."""
    slots = list(history) + image_slots(image)
    positions = []
    for obj, target in zip(objects, targets):
        slots.extend(object_slots(obj))
        positions.append(len(slots))
        slots.append(DiscreteSlot(int(target), "id"))
    return TokenSequence(slots, positions, [int(t) for t in targets])


def _free_id(active, capacity, rng):
    if rng is None:
        return assign_free_id(active, capacity)
    free = [i for i in range(capacity) if i not in active]
    if not free:
        raise CapacityExhaustedError(f"Wszystkie {capacity} identyfikatory są zajęte")
    return int(free[rng.integers(len(free))])


def plan_clip_identities(gt_ids_per_frame, capacity, rng=None):
    """
    Przypisuje identyfikatory w klipie.

    Pierwsze wystąpienie tożsamości gt ma cel <new>, a po klatce dostaje
    konkretny identyfikator (najmniejszy wolny albo losowy wolny, gdy podano rng).
    Fałszywe alarmy (gt = -1) są jednorazowymi tożsamościami.

    Args:
        gt_ids_per_frame: Dla każdej klatki lista id gt w kolejności kanonicznej
        capacity: K
        rng: numpy Generator lub None

    Returns:
        Krotka (cele na klatkę, konkretne identyfikatory na klatkę)
    """
    new_index = capacity
    assigned = {}
    active = set()
    targets, concrete = [], []
    for gt_ids in gt_ids_per_frame:
        frame_targets = [assigned.get(g, new_index) if g >= 0 else new_index for g in gt_ids]
        frame_concrete = []
        for g, target in zip(gt_ids, frame_targets):
            if target == new_index:
                target = _free_id(active, capacity, rng)
                active.add(target)
                if g >= 0:
                    assigned[g] = target
            frame_concrete.append(target)
        targets.append(frame_targets)
        concrete.append(frame_concrete)
    return targets, concrete


def build_training_sequence(clip, config, rng=None):
    """
    Sekwencje uczące z wymuszaniem nauczyciela (teacher forcing) dla klipu.

    Args:
        clip: Lista FrameTokens z gt_ids (co najmniej 2 klatki)
        config: SequenceConfig
        rng: numpy Generator (wymagany przy random_id_assignment)

    Returns:
        Lista TokenSequence, po jednej dla każdej nadzorowanej klatki
    """
    if len(clip) < 2:
        raise ClipTooShortError(f"Klip musi mieć co najmniej 2 klatki, ma {len(clip)}")
    if any(frame.gt_ids is None for frame in clip):
        raise ConfigError("Klip treningowy wymaga gt_ids")
    if config.random_id_assignment and rng is None:
        rng = np.random.default_rng(0)

    orders = [frame.ordered() for frame in clip]
    gt_ordered = [[frame.gt_ids[j] for j in order] for frame, order in zip(clip, orders)]
    targets, concrete = plan_clip_identities(
        gt_ordered, config.capacity, rng if config.random_id_assignment else None)

    blocks, sequences = [], []
    for i, (frame, order) in enumerate(zip(clip, orders)):
        objects = [frame.objects[j] for j in order]
        start = 0 if config.window is None else max(0, i - config.window)
        history = [slot for block in blocks[start:i] for slot in block]
        if i > 0 or config.supervise_first_frame:
            sequences.append(frame_sequence(history, frame.image, objects, targets[i]))
        image = frame.image if config.history_images else None
        blocks.append(build_frame_block(image, list(zip(objects, concrete[i]))))
    return sequences


def build_inference_prefix(history, current, answered, next_obj):
    """
    Prefiks do przewidzenia identyfikatora kolejnego obiektu bieżącej klatki.

    Args:
        history: Sloty historii (bloki okna + pary TCM albo blok pamięci TMF)
        current: ImageTokens bieżącej klatki albo None
        answered: Pary (token, indeks słownika) obiektów już obsłużonych w tej klatce
        next_obj: Token obiektu, dla którego przewidujemy identyfikator

    Returns:
        TokenSequence kończąca się slotami next_obj, z jedną pozycją predykcji na końcu
    """
    slots = list(history) + image_slots(current)
    for obj, index in answered:
        slots.extend(object_slots(obj))
        slots.append(DiscreteSlot(int(index), "id"))
    slots.extend(object_slots(next_obj))
    return TokenSequence(slots, [len(slots)])


def dump_sequence(seq):
    """
    Zrzut tekstowy sekwencji: nagłówek z pozycjami predykcji, potem jeden slot na linię
    w postaci rodzaj,źródło,indeks (dyskretne) lub rodzaj,źródło,norma (ciągłe).
    """
    lines = ["# predict: " + ",".join(str(p) for p in seq.predict_positions)]
    if seq.target_ids is not None:
        lines.append("# targets: " + ",".join(str(t) for t in seq.target_ids))
    for slot in seq.slots:
        if isinstance(slot, DiscreteSlot):
            lines.append(f"discrete,{slot.source},{slot.index}")
        else:
            lines.append(f"continuous,{slot.source},{float(torch.linalg.vector_norm(slot.vector)):.6f}")
    return "\n".join(lines) + "\n"
