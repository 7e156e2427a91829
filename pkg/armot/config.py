"""
Pliki konfiguracyjne w formacie "klucz = wartość".

Format:
- jedna para na linię, '#' rozpoczyna komentarz, puste linie są pomijane
- wartości to literały Pythona (liczby, bool, napisy, listy, krotki),
  np. occlusions = [(3, 2, 0), (10, 4, 1)]
- słowo, które nie jest literałem, jest traktowane jako napis (mode = tmf)

Kolejność ważności: wartości domyślne klas < plik < flagi wiersza poleceń.
"""

import ast
import dataclasses
import typing
from pathlib import Path

from armot.errors import ConfigError


def parse_value(text):
    """Zamienia tekst wartości na obiekt Pythona."""
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text, source="<config>"):
    """
    Parsuje treść pliku konfiguracyjnego.

    Args:
        text: Treść pliku
        source: Nazwa źródła używana w komunikatach błędów

    Returns:
        Słownik klucz -> wartość (w kolejności z pliku)
    """
    mapping = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: oczekiwano 'klucz = wartość', jest {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key.isidentifier():
            raise ConfigError(f"{source}:{number}: niepoprawny klucz {key!r}")
        if key in mapping:
            raise ConfigError(f"{source}:{number}: powtórzony klucz {key!r}")
        mapping[key] = parse_value(value)
    return mapping


def _strip_comment(line):
    # '#' wewnątrz napisu w cudzysłowie nie jest komentarzem
    quote = None
    for index, char in enumerate(line):
        if quote:
            if char == quote:
                quote = None
        elif char in "\"'":
            quote = char
        elif char == "#":
            return line[:index]
    return line


def read_config(path):
    """Wczytuje plik konfiguracyjny do słownika."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Brak pliku konfiguracyjnego: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def format_config(mapping):
    """Zwraca tekst pliku konfiguracyjnego (klucze posortowane, wartości jako repr)."""
    lines = []
    for key in sorted(mapping):
        value = mapping[key]
        if isinstance(value, Path):
            value = str(value)
        lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def write_config(mapping, path):
    """Zapisuje słownik w formacie klucz = wartość."""
    Path(path).write_text(format_config(mapping), encoding="utf-8")


def config_to_mapping(config):
    """Spłaszcza dataclass konfiguracji do słownika typów prostych."""
    return {field.name: getattr(config, field.name) for field in dataclasses.fields(config)}


def build_config(cls, mapping, **overrides):
    """
    Tworzy obiekt konfiguracji z kluczy pasujących do pól klasy.

    Args:
        cls: Klasa dataclass konfiguracji
        mapping: Słownik z pliku (może zawierać klucze innych klas)
        overrides: Wartości z flag; None oznacza brak nadpisania

    Returns:
        Instancja cls
    """
    hints = typing.get_type_hints(cls)
    values = {}
    for field in dataclasses.fields(cls):
        if field.name in overrides and overrides[field.name] is not None:
            value = overrides[field.name]
        elif field.name in mapping:
            value = mapping[field.name]
        else:
            continue
        values[field.name] = _coerce(value, hints.get(field.name))
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def _coerce(value, hint):
    origin = typing.get_origin(hint)
    if origin is tuple and isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    if hint is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def check_known_keys(mapping, *classes):
    """Zgłasza ConfigError dla kluczy nieznanych żadnej z podanych klas."""
    known = set()
    for cls in classes:
        known.update(field.name for field in dataclasses.fields(cls))
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"Nieznane klucze konfiguracji: {', '.join(unknown)}")
