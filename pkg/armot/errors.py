"""
Wyjątki pakietu armot.

Każdy wyjątek dziedziczy po ArmotError oraz po najbliższym wbudowanym typie,
więc można łapać zarówno ArmotError, jak i np. ValueError.
"""


class ArmotError(Exception):
    """Wspólna klasa bazowa błędów pakietu."""


class ConfigError(ArmotError, ValueError):
    """Niepoprawna konfiguracja (plik, flagi lub wartości pól)."""


class InvalidBoxError(ArmotError, ValueError):
    """Prostokąt nie spełnia 0 <= x1 < x2 <= 1 oraz 0 <= y1 < y2 <= 1."""


class CapacityExhaustedError(ArmotError, RuntimeError):
    """Wszystkie K identyfikatorów jest zajętych - K jest za małe dla sceny."""


class ShapeError(ArmotError, ValueError):
    """Niezgodny kształt lub wymiar tablicy."""


class MotParseError(ArmotError, ValueError):
    """Błędna linia w pliku MOTChallenge."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {message}")


class ClipTooShortError(ArmotError, ValueError):
    """Klip treningowy ma mniej niż 2 klatki."""


class VideoTooShortError(ArmotError, ValueError):
    """Nagranie jest za krótkie, aby pobrać z niego klip."""


class SequenceTooLongError(ArmotError, ValueError):
    """Sekwencja wejściowa dekodera przekracza max_len."""


class NonFiniteLossError(ArmotError, RuntimeError):
    """Funkcja straty przyjęła wartość NaN lub nieskończoną."""


class CheckpointError(ArmotError, RuntimeError):
    """Nie można zapisać lub wczytać punktu kontrolnego."""


class FrameRangeError(ArmotError, ValueError):
    """Wyniki do porównania obejmują różną liczbę klatek."""


class ModelMismatchError(ArmotError, ValueError):
    """Konfiguracja śledzenia nie pasuje do wczytanego modelu."""
