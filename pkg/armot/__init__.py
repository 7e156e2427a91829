"""
Pakiet armot - autoregresyjne śledzenie wielu obiektów w skali biurkowej.

Detekcje z każdej klatki są zamieniane na tokeny obiektów, a przyczynowy
dekoder przewiduje dla każdego obiektu token identyfikatora (lub <new>)
na podstawie historii. Pakiet zawiera symulator syntetycznych nagrań,
trening, śledzenie oraz metryki MOTA/IDF1/HOTA.
"""

__version__ = "0.3.0"
