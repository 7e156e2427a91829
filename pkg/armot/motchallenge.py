"""
Format tekstowy MOTChallenge: frame,id,bb_left,bb_top,bb_width,bb_height,conf,-1,-1,-1

Klatki i identyfikatory w pliku liczone są od 1, prostokąty w pikselach.
Wewnątrz pakietu klatki i identyfikatory liczone są od 0, a prostokąty są
znormalizowane - konwersja odbywa się wyłącznie tutaj.
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from armot.core import BBox
from armot.errors import MotParseError

MIN_FIELDS = 7


@dataclass(frozen=True)
class MotRecord:
    """Jedna linia pliku MOTChallenge."""
    frame: int
    track_id: int
    left: float
    top: float
    width: float
    height: float
    confidence: float = 1.0


@dataclass(frozen=True)
class TrackRecord:
    """Wynik śledzenia jednego obiektu w klatce (indeksy od 0, prostokąt znormalizowany)."""
    frame_index: int
    track_id: int
    bbox: BBox
    confidence: float = 1.0


@dataclass
class TrackingResult:
    """Wynik śledzenia całego nagrania."""
    records: list = field(default_factory=list)
    n_frames: int = 0
    width: int = 1
    height: int = 1

    def by_frame(self):
        """Słownik indeks klatki -> lista rekordów (każda klatka z [0, n_frames))."""
        frames = {t: [] for t in range(self.n_frames)}
        for record in self.records:
            frames.setdefault(record.frame_index, []).append(record)
        return frames

    def track_ids(self):
        return sorted({r.track_id for r in self.records})

    def to_mot_records(self):
        records = []
        for r in self.records:
            left, top, width, height = r.bbox.to_pixels(self.width, self.height)
            records.append(MotRecord(r.frame_index + 1, r.track_id + 1, left, top, width, height, r.confidence))
        return records

    @classmethod
    def from_mot_records(cls, records, width, height, n_frames=None):
        """
        Tworzy wynik z rekordów MOTChallenge; prostokąty są przycinane do obrazu,
        a zdegenerowane pomijane.
        """
        converted = []
        for record in records:
            bbox = BBox.from_pixels(record.left, record.top, record.width, record.height, width, height)
            if bbox is not None:
                converted.append(TrackRecord(record.frame - 1, record.track_id - 1, bbox, record.confidence))
        if n_frames is None:
            n_frames = max((r.frame for r in records), default=0)
        return cls(converted, n_frames, width, height)


def format_number(value):
    """Liczba całkowita bez części ułamkowej, pozostałe w najkrótszym dokładnym zapisie."""
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def format_record(record):
    return ",".join([
        str(record.frame), str(record.track_id),
        format_number(record.left), format_number(record.top),
        format_number(record.width), format_number(record.height),
        format_number(record.confidence), "-1", "-1", "-1",
    ])


def write_mot_records(records, path):
    """Zapisuje rekordy w kolejności listy, jedna linia na rekord."""
    lines = [format_record(r) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_motchallenge(result, path):
    """
    Zapisuje wynik śledzenia w formacie MOTChallenge.

    Args:
        result: TrackingResult
        path: Plik docelowy
    """
    write_mot_records(result.to_mot_records(), path)


def _parse_int(text, path, number, name):
    try:
        value = float(text)
    except ValueError:
        raise MotParseError(path, number, f"pole {name} nie jest liczbą: {text!r}") from None
    if not value.is_integer():
        raise MotParseError(path, number, f"pole {name} musi być liczbą całkowitą: {text!r}")
    return int(value)


def parse_line(line, path="<mot>", number=1):
    """Parsuje jedną linię; zgłasza MotParseError z numerem linii."""
    fields = [f.strip() for f in line.split(",")]
    if len(fields) < MIN_FIELDS:
        raise MotParseError(path, number, f"oczekiwano co najmniej {MIN_FIELDS} pól, jest {len(fields)}")
    frame = _parse_int(fields[0], path, number, "frame")
    if frame < 1:
        raise MotParseError(path, number, f"numer klatki musi być >= 1: {frame}")
    track_id = _parse_int(fields[1], path, number, "id")
    try:
        left, top, width, height, confidence = (float(f) for f in fields[2:7])
    except ValueError:
        raise MotParseError(path, number, f"niepoprawne pole liczbowe w {line.strip()!r}") from None
    return MotRecord(frame, track_id, left, top, width, height, confidence)


def read_motchallenge(path):
    """
    Wczytuje plik MOTChallenge.

    Args:
        path: Ścieżka do pliku

    Returns:
        Słownik numer klatki (od 1) -> lista MotRecord w kolejności z pliku
    """
    frames = {}
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            record = parse_line(line, path, number)
            frames.setdefault(record.frame, []).append(record)
    return frames


def flatten_records(frames):
    return [record for frame in sorted(frames) for record in frames[frame]]


def read_tracking_result(path, width, height, n_frames=None):
    """Wczytuje plik MOTChallenge jako TrackingResult."""
    return TrackingResult.from_mot_records(flatten_records(read_motchallenge(path)), width, height, n_frames)


def record_extent(records):
    """Najmniejszy obraz (szerokość, wysokość) mieszczący wszystkie prostokąty."""
    width = max((r.left + r.width for r in records), default=1.0)
    height = max((r.top + r.height for r in records), default=1.0)
    return max(1, math.ceil(width)), max(1, math.ceil(height))


def unclipped_frame(records, width=None, height=None):
    """
    Przesuwa rekordy i powiększa kadr tak, aby żaden prostokąt nie był przycinany
    przy normalizacji (gt MOT17 ma prostokąty z ujemnym lewym/górnym brzegiem).
    IoU nie zmienia się przy przesunięciu ani skalowaniu osi.

    Args:
        records: Lista MotRecord (gt i predykcje razem)
        width, height: Rozmiar obrazu, jeśli znany

    Returns:
        Krotka (przesunięte rekordy, szerokość, wysokość)
    """
    dx = -min(0.0, min((r.left for r in records), default=0.0))
    dy = -min(0.0, min((r.top for r in records), default=0.0))
    if dx or dy:
        records = [replace(r, left=r.left + dx, top=r.top + dy) for r in records]
    extent_w, extent_h = record_extent(records)
    return list(records), max(width or 1, extent_w), max(height or 1, extent_h)
