"""
Zestawy ablacji: każdy wariant to trening, śledzenie i ewaluacja
na odłożonych scenariuszach.

Zestawy:
- tauloss: tau_loss w {1, 2, 3, 5, 10, 15} (jeden model, różne tau_loss)
- tmf: okno T=1 kontra pamięć TMF
- raa: z RAA i bez RAA
- tokens: tokeny zapytań kontra zdyskretyzowane prostokąty
- alpha: poziom dyskretyzacji alfa w {0.4, ..., 1.0} (tryb prostokątów)

Warianty o tej samej konfiguracji modelu współdzielą jeden trening.
Grupy treningowe mogą być liczone równolegle w osobnych procesach;
wyniki są składane w kolejności wariantów.
"""

import dataclasses
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from loguru import logger
from tqdm import tqdm

from armot.config import config_to_mapping
from armot.errors import ConfigError
from armot.inference import track_video
from armot.metrics import evaluate_many, gt_result
from armot.model import ModelConfig
from armot.simdata import apply_oracle, generate_scenario, generate_suite
from armot.trainer import evaluate_id_accuracy, run_training
from armot.visualization import plot_ablation

TAU_LOSS_GRID = (1, 2, 3, 5, 10, 15)
ALPHA_GRID = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
SUITES = ("tauloss", "tmf", "raa", "tokens", "alpha")
OCCLUSION_SUITES = ("tauloss", "tmf")
MAX_EVAL_OCCLUSION = 8


@dataclass(frozen=True)
class Variant:
    label: str
    model: tuple
    infer: object


@dataclass
class AblationRow:
    label: str
    report: object
    id_accuracy: float = None


def suite_variants(name, infer):
    """
    Warianty zestawu.

    Args:
        name: Nazwa zestawu (SUITES)
        infer: Bazowa InferConfig

    Returns:
        Lista Variant; model to krotka par (pole ModelConfig, wartość)
    """
    window = dataclasses.replace(infer, mode="window")
    if name == "tauloss":
        return [Variant(f"tauloss_{v}", (), dataclasses.replace(window, tau_loss=v)) for v in TAU_LOSS_GRID]
    if name == "tmf":
        return [
            Variant("window_t1", (("use_tmf", False),), dataclasses.replace(window, window=1)),
            Variant("tmf", (("token_mode", "query"), ("use_tmf", True)), dataclasses.replace(infer, mode="tmf")),
        ]
    if name == "raa":
        return [Variant("raa_on", (("use_raa", True),), window), Variant("raa_off", (("use_raa", False),), window)]
    if name == "tokens":
        return [Variant("query", (("token_mode", "query"),), window),
                Variant("box", (("token_mode", "box"), ("use_tmf", False)), window)]
    if name == "alpha":
        return [Variant(f"alpha_{a}", (("alpha", a), ("token_mode", "box"), ("use_tmf", False)), window)
                for a in ALPHA_GRID]
    raise ConfigError(f"Nieznany zestaw ablacji {name!r}, dozwolone: {', '.join(SUITES)}")


def eval_suite_config(name, suite, n_eval):
    """Odłożone scenariusze: inne ziarno; dla zestawów okluzji długie zasłonięcia."""
    held_out = dataclasses.replace(suite, n_scenarios=n_eval, seed=suite.seed + 1)
    if name in OCCLUSION_SUITES:
        held_out = dataclasses.replace(
            held_out, occlusion_prob=0.8, max_occlusion=max(1, min(MAX_EVAL_OCCLUSION, suite.n_frames - 2)))
    return held_out


def build_videos(suite, oracle, seed):
    """Scenariusze zestawu z detekcjami wyroczni."""
    videos = []
    for k, scenario in enumerate(generate_suite(suite)):
        videos.append(apply_oracle(generate_scenario(scenario), oracle, seed + k))
    return videos


def _run_group(job):
    """Jeden trening i wszystkie warianty, które go współdzielą."""
    model_config, train_config, oracle, train_suite, eval_suite, variants, with_accuracy = job
    train_videos = build_videos(train_suite, oracle, train_config.seed)
    eval_videos = build_videos(eval_suite, oracle, train_config.seed + 1)
    run = run_training(model_config, train_config, train_videos, progress=False)
    accuracy = evaluate_id_accuracy(run.model, eval_videos, seed=train_config.seed) if with_accuracy else None
    rows = []
    for variant in variants:
        pairs = [(gt_result(video), track_video(run.model, video, variant.infer)) for video in eval_videos]
        report = evaluate_many(pairs)
        logger.info("Wariant {}: HOTA {:.4f}, AssA {:.4f}", variant.label, report.hota, report.assa)
        rows.append(AblationRow(variant.label, report, accuracy))
    return rows


def ablate(name, model_config, train_config, infer, suite, oracle, n_eval=10, workers=1):
    """
    Uruchamia zestaw ablacji.

    Args:
        name: Nazwa zestawu
        model_config: Bazowa ModelConfig
        train_config: TrainConfig (wspólny budżet treningu)
        infer: Bazowa InferConfig
        suite: SuiteConfig scenariuszy treningowych
        oracle: OracleConfig
        n_eval: Liczba odłożonych scenariuszy
        workers: Liczba procesów

    Returns:
        Lista AblationRow w kolejności wariantów
    """
    variants = suite_variants(name, infer)
    groups = {}
    for variant in variants:
        groups.setdefault(variant.model, []).append(variant)
    eval_suite = eval_suite_config(name, suite, n_eval)
    jobs = []
    for overrides, members in groups.items():
        mapping = config_to_mapping(model_config)
        mapping.update(dict(overrides))
        config = ModelConfig(**mapping)
        members = [dataclasses.replace(v, infer=dataclasses.replace(v.infer, capacity=config.capacity))
                   for v in members]
        jobs.append((config, train_config, oracle, suite, eval_suite, members, name == "alpha"))
    logger.info("Ablacja {}: {} wariantów, {} treningów, {} procesów", name, len(variants), len(jobs), workers)

    if workers > 1 and len(jobs) > 1:
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=context) as executor:
            results = list(tqdm(executor.map(_run_group, jobs), total=len(jobs), desc=f"ablacja {name}"))
    else:
        results = [_run_group(job) for job in tqdm(jobs, desc=f"ablacja {name}")]
    rows = {row.label: row for group in results for row in group}
    return [rows[v.label] for v in variants]


def format_table(rows):
    """Tabela tekstowa wyników ablacji."""
    with_accuracy = any(row.id_accuracy is not None for row in rows)
    header = f"{'wariant':<12} {'HOTA':>7} {'DetA':>7} {'AssA':>7} {'MOTA':>7} {'IDF1':>7} {'IDSW':>5}"
    if with_accuracy:
        header += f" {'acc':>7}"
    lines = [header, "-" * len(header)]
    for row in rows:
        r = row.report
        line = f"{row.label:<12} {r.hota:7.4f} {r.deta:7.4f} {r.assa:7.4f} {r.mota:7.4f} {r.idf1:7.4f} {r.idsw:5d}"
        if with_accuracy:
            line += f" {row.id_accuracy:7.4f}" if row.id_accuracy is not None else f" {'-':>7}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def format_summary(rows):
    """Podsumowanie klucz=wartość: <wariant>.<metryka>=<wartość>."""
    lines = []
    for row in rows:
        for key, value in row.report.summary().items():
            lines.append(f"{row.label}.{key}={value:.6f}" if isinstance(value, float) else f"{row.label}.{key}={value}")
        if row.id_accuracy is not None:
            lines.append(f"{row.label}.ID_ACC={row.id_accuracy:.6f}")
    return "\n".join(lines) + "\n"


def write_ablation(rows, out_dir, name, plot=True):
    """
    Zapisuje ablation.txt, summary.txt i opcjonalnie ablation.png.

    Returns:
        Słownik nazwa -> ścieżka zapisanych plików
    """
    out_dir = Path(out_dir)
    paths = {"table": out_dir / "ablation.txt", "summary": out_dir / "summary.txt"}
    paths["table"].write_text(format_table(rows), encoding="utf-8")
    paths["summary"].write_text(format_summary(rows), encoding="utf-8")
    if plot:
        paths["plot"] = out_dir / "ablation.png"
        plot_ablation(rows, title=f"Ablacja: {name}", save_path=paths["plot"])
    return paths
