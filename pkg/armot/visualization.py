"""
Wizualizacja: krzywa straty, krzywe HOTA(alfa), słupki ablacji
i siatka klatek z prostokątami śladów.
"""

from pathlib import Path

import matplotlib
import matplotlib.pyplot as plt
import numpy as np

from armot.errors import ArmotError

TRACK_COLORS = matplotlib.colormaps["tab20"]


def _finish(fig, save_path, interactive):
    if save_path:
        fig.savefig(save_path, bbox_inches="tight")
        plt.close(fig)
    elif interactive:
        plt.show()
    else:
        plt.draw()
        plt.pause(0.001)
        plt.close(fig)
    if not interactive:
        plt.ion()


def read_train_log(path):
    """
    Wczytuje log treningu (linie step,loss,ce,lr; komentarze od '#').

    Returns:
        Krotka (kroki, straty) jako listy
    """
    steps, losses = [], []
    for line_number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split(",")
        try:
            steps.append(int(fields[0]))
            losses.append(float(fields[1]))
        except (IndexError, ValueError) as exc:
            raise ArmotError(f"{path}:{line_number}: niepoprawna linia logu treningu") from exc
    return steps, losses


def plot_loss_curve(steps, losses, title="Strata treningu", save_path=None, interactive=False, smooth=0):
    """
    Rysuje krzywą straty.

    Args:
        steps: Numery kroków
        losses: Wartości straty
        title: Tytuł wykresu
        save_path: Ścieżka do zapisania obrazu
        interactive: Czy tryb interaktywny
        smooth: Szerokość średniej kroczącej (0 wyłącza)
    """
    if not interactive:
        plt.ioff()
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(steps, losses, alpha=0.4 if smooth else 1.0, label="strata")
    if smooth and len(losses) >= smooth:
        kernel = np.ones(smooth) / smooth
        ax.plot(steps[smooth - 1:], np.convolve(losses, kernel, mode="valid"), label=f"średnia z {smooth}")
        ax.legend()
    ax.set_xlabel("krok")
    ax.set_ylabel("strata")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    _finish(fig, save_path, interactive)


def plot_hota_curves(reports, title="HOTA w funkcji progu alfa", save_path=None, interactive=False):
    """
    Krzywe HOTA, DetA i AssA po progach alfa.

    Args:
        reports: Słownik etykieta -> EvalReport
    """
    if not interactive:
        plt.ioff()
    fig, axes = plt.subplots(1, 3, figsize=(15, 4), sharey=True)
    for label, report in reports.items():
        for ax, values in zip(axes, (report.hota_alpha, report.deta_alpha, report.assa_alpha)):
            ax.plot(report.alphas, values, marker="o", markersize=3, label=label)
    for ax, name in zip(axes, ("HOTA", "DetA", "AssA")):
        ax.set_title(name)
        ax.set_xlabel("alfa")
        ax.set_ylim(0.0, 1.02)
        ax.grid(alpha=0.3)
    axes[0].legend()
    fig.suptitle(title)
    _finish(fig, save_path, interactive)


def plot_ablation(rows, metrics=("HOTA", "MOTA", "IDF1"), title="Ablacja", save_path=None, interactive=False):
    """
    Słupki metryk dla wariantów ablacji.

    Args:
        rows: Lista AblationRow (etykieta wariantu i EvalReport)
        metrics: Klucze z EvalReport.summary()
    """
    if not interactive:
        plt.ioff()
    fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(rows)), 5))
    width = 0.8 / len(metrics)
    positions = np.arange(len(rows))
    for k, metric in enumerate(metrics):
        values = [row.report.summary()[metric] for row in rows]
        ax.bar(positions + k * width, values, width, label=metric)
    ax.set_xticks(positions + width * (len(metrics) - 1) / 2)
    ax.set_xticklabels([row.label for row in rows], rotation=30, ha="right")
    ax.set_title(title)
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    _finish(fig, save_path, interactive)


def plot_frame_tracks(frames, result, columns=4, max_frames=8, title="Śledzone obiekty",
                      save_path=None, interactive=False):
    """
    Siatka klatek z prostokątami i identyfikatorami śladów (kolor zależy od id).

    Args:
        frames: Lista FrameObservation
        result: TrackingResult dla tych klatek
        columns: Liczba kolumn siatki
        max_frames: Ile klatek (równomiernie z całego nagrania) pokazać
    """
    if not interactive:
        plt.ioff()
    chosen = np.unique(np.linspace(0, len(frames) - 1, min(max_frames, len(frames))).round().astype(int))
    rows = int(np.ceil(len(chosen) / columns))
    fig, axes = plt.subplots(rows, columns, figsize=(3 * columns, 3 * rows), squeeze=False)
    by_frame = result.by_frame()
    for ax in axes.flat:
        ax.axis("off")
    for ax, t in zip(axes.flat, chosen):
        frame = frames[t]
        ax.imshow(np.clip(frame.image, 0.0, 1.0))
        for record in by_frame.get(frame.frame_index, []):
            left, top, w, h = record.bbox.to_pixels(frame.width, frame.height)
            color = TRACK_COLORS(record.track_id % TRACK_COLORS.N)
            ax.add_patch(plt.Rectangle((left, top), w, h, fill=False, edgecolor=color, linewidth=1.5))
            ax.text(left, top, str(record.track_id), color="white", fontsize=7,
                    bbox=dict(facecolor=color, alpha=0.8, pad=1, edgecolor="none"))
        ax.set_title(f"klatka {frame.frame_index}", fontsize=9)
    fig.suptitle(title)
    _finish(fig, save_path, interactive)
