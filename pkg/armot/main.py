"""
Główny plik uruchamiający pakiet armot.

Podkomendy:
    simulate  - generuje syntetyczne nagrania z plikami gt
    train     - trenuje model na katalogu nagrań
    track     - śledzi nagranie wytrenowanym modelem
    eval      - liczy MOTA, IDF1 i HOTA dla pary plików MOTChallenge
    ablate    - uruchamia zestaw ablacji

Każda podkomenda zapisuje wyniki w katalogu --out i kończy się zapisem
manifest.cfg. Przy błędzie wypisuje jedną linię diagnostyki i zwraca kod 1.
"""

import argparse
import configparser
import dataclasses
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from loguru import logger

from armot import __version__
from armot.ablation import SUITES, ablate, format_table, write_ablation
from armot.config import build_config, check_known_keys, config_to_mapping, format_config, read_config, write_config
from armot.errors import ArmotError, ConfigError, FrameRangeError
from armot.inference import InferConfig, track_video
from armot.log import configure_logging
from armot.metrics import evaluate, write_report, write_summary
from armot.model import ModelConfig, load_model
from armot.motchallenge import TrackingResult, flatten_records, read_motchallenge, unclipped_frame, write_motchallenge
from armot.simdata import (
    SCENARIO_FILE, OracleConfig, SuiteConfig, generate_scenario, generate_suite, load_video_dir, save_video_dir,
)
from armot.trainer import LossWeights, TrainConfig, run_training
from armot.visualization import plot_frame_tracks, plot_hota_curves, plot_loss_curve, read_train_log

MANIFEST_FILE = "manifest.cfg"
SNAPSHOT_FILE = "config.cfg"


@dataclass
class RunManifest:
    """Zapis przebiegu: komenda, pełna konfiguracja, ziarno, wersja, wejścia, pliki wyjściowe, czas."""
    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    version: str = __version__
    outputs: dict = field(default_factory=dict)
    duration: float = 0.0

    def write(self, out_dir):
        """Zapis atomowy: plik tymczasowy i os.replace."""
        path = Path(out_dir) / MANIFEST_FILE
        tmp = path.with_name(path.name + ".tmp")
        mapping = dataclasses.asdict(self)
        mapping["outputs"] = {k: str(v) for k, v in self.outputs.items()}
        mapping["inputs"] = {k: str(v) for k, v in self.inputs.items()}
        tmp.write_text(format_config(mapping), encoding="utf-8")
        os.replace(tmp, path)
        return path


def prepare_out_dir(path, overwrite):
    """Tworzy katalog wyjściowy; niepusty katalog wymaga --overwrite."""
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise ConfigError(f"{path} istnieje i nie jest katalogiem")
    if path.is_dir() and any(path.iterdir()) and not overwrite:
        raise ConfigError(f"Katalog wyjściowy {path} nie jest pusty (użyj --overwrite)")
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_mapping(path, *classes):
    if path is None:
        return {}
    mapping = read_config(path)
    check_known_keys(mapping, *classes)
    return mapping


def video_dirs(data_dir):
    """Katalog pojedynczego nagrania albo jego podkatalogi z nagraniami (posortowane)."""
    data_dir = Path(data_dir)
    if (data_dir / SCENARIO_FILE).is_file() or (data_dir / "seqinfo.ini").is_file():
        return [data_dir]
    dirs = sorted(d for d in data_dir.iterdir()
                  if d.is_dir() and ((d / SCENARIO_FILE).is_file() or (d / "seqinfo.ini").is_file()))
    if not dirs:
        raise ConfigError(f"Brak nagrań w {data_dir}")
    return dirs


def cmd_simulate(args):
    mapping = load_mapping(args.config, SuiteConfig, OracleConfig)
    suite = build_config(SuiteConfig, mapping, seed=args.seed)
    oracle = build_config(OracleConfig, mapping)
    out = prepare_out_dir(args.out, args.overwrite)
    outputs = {}
    for k, scenario in enumerate(generate_suite(suite)):
        name = f"video_{k:03d}"
        save_video_dir(out / name, scenario, oracle, suite.seed + k, frames=generate_scenario(scenario),
                       images=args.images)
        outputs[name] = out / name
    print(f"Zapisano {suite.n_scenarios} nagrań w {out}")
    snapshot = {**config_to_mapping(suite), **config_to_mapping(oracle)}
    return snapshot, suite.seed, outputs, {}


def cmd_train(args):
    mapping = load_mapping(args.config, ModelConfig, TrainConfig, LossWeights, OracleConfig)
    model_config = build_config(ModelConfig, mapping)
    train_config = build_config(TrainConfig, mapping, seed=args.seed, device=args.device)
    oracle = build_config(OracleConfig, mapping, d_det=model_config.d_det)
    weights = build_config(LossWeights, mapping) if any(
        f.name in mapping for f in dataclasses.fields(LossWeights)) else None
    videos = [load_video_dir(d, patch=model_config.patch, oracle=oracle, oracle_seed=train_config.seed + k)
              for k, d in enumerate(video_dirs(args.data))]
    out = prepare_out_dir(args.out, args.overwrite)
    outputs = {"checkpoint": out / "checkpoint.pt", "log": out / "train_log.txt", "plot": out / "loss.png"}
    run = run_training(model_config, train_config, videos, weights=weights,
                       checkpoint_path=outputs["checkpoint"], log_path=outputs["log"])
    plot_loss_curve(*read_train_log(outputs["log"]), save_path=outputs["plot"], smooth=10)
    print(f"Trening zakończony: {len(run.steps)} kroków, ostatnia strata {run.steps[-1].loss:.4f}")
    snapshot = {**config_to_mapping(model_config), **config_to_mapping(train_config), **config_to_mapping(oracle)}
    return snapshot, train_config.seed, outputs, {"data": args.data}


def cmd_track(args):
    model = load_model(args.checkpoint, device=args.device or "cpu")
    mapping = load_mapping(args.config, InferConfig, OracleConfig)
    mapping.setdefault("capacity", model.config.capacity)
    infer = build_config(InferConfig, mapping, mode=args.mode, tau_loss=args.tau_loss, tau_det=args.tau_det)
    oracle = build_config(OracleConfig, mapping, d_det=model.config.d_det)
    seed = args.seed if args.seed is not None else 0
    video = load_video_dir(args.video, patch=model.config.patch, oracle=oracle, oracle_seed=seed)
    out = prepare_out_dir(args.out, args.overwrite)
    result = track_video(model, video, infer, progress=True)
    outputs = {"tracks": out / "tracks.txt", "plot": out / "tracks.png"}
    write_motchallenge(result, outputs["tracks"])
    plot_frame_tracks(video, result, save_path=outputs["plot"])
    print(f"Zapisano {len(result.records)} rekordów ({len(result.track_ids())} śladów) do {outputs['tracks']}")
    snapshot = {**config_to_mapping(infer), **config_to_mapping(oracle)}
    return snapshot, seed, outputs, {"checkpoint": args.checkpoint, "video": args.video}


def _sequence_info(gt_path):
    """(szerokość, wysokość, liczba klatek) z seqinfo.ini obok katalogu gt, jeśli istnieje."""
    seqinfo = Path(gt_path).resolve().parent.parent / "seqinfo.ini"
    if not seqinfo.is_file():
        return None
    info = configparser.ConfigParser()
    info.read(seqinfo, encoding="utf-8")
    sequence = info["Sequence"]
    return int(sequence["imWidth"]), int(sequence["imHeight"]), int(sequence["seqLength"])


def cmd_eval(args):
    gt_records = flatten_records(read_motchallenge(args.gt))
    pred_records = flatten_records(read_motchallenge(args.pred))
    info = _sequence_info(args.gt)
    width, height, n_frames = info if info is not None else (None, None, None)
    if args.width and args.height:
        width, height = args.width, args.height
    shifted, width, height = unclipped_frame(gt_records + pred_records, width, height)
    gt_records, pred_records = shifted[:len(gt_records)], shifted[len(gt_records):]
    n_frames = args.n_frames or n_frames or max((r.frame for r in gt_records + pred_records), default=0)
    last_pred = max((r.frame for r in pred_records), default=0)
    if last_pred > n_frames:
        raise FrameRangeError(f"Predykcja sięga klatki {last_pred}, nagranie ma {n_frames} klatek")
    gt = TrackingResult.from_mot_records(gt_records, width, height, n_frames)
    pred = TrackingResult.from_mot_records(pred_records, width, height, n_frames)
    report = evaluate(gt, pred)
    out = prepare_out_dir(args.out, args.overwrite)
    outputs = {"report": out / "report.txt", "summary": out / "summary.txt", "plot": out / "hota.png"}
    write_report(report, outputs["report"])
    write_summary(report, outputs["summary"])
    plot_hota_curves({Path(args.pred).name: report}, save_path=outputs["plot"])
    print(report.to_text(), end="")
    inputs = {"gt": args.gt, "pred": args.pred, "width": width, "height": height, "n_frames": n_frames}
    return {}, 0, outputs, inputs


def cmd_ablate(args):
    classes = (ModelConfig, TrainConfig, InferConfig, SuiteConfig, OracleConfig)
    mapping = load_mapping(args.config, *classes)
    model_config = build_config(ModelConfig, mapping)
    train_config = build_config(TrainConfig, mapping, seed=args.seed, device=args.device)
    mapping.setdefault("capacity", model_config.capacity)
    infer = build_config(InferConfig, mapping, mode=args.mode, tau_loss=args.tau_loss, tau_det=args.tau_det)
    suite = build_config(SuiteConfig, mapping, seed=args.seed)
    oracle = build_config(OracleConfig, mapping, d_det=model_config.d_det)
    out = prepare_out_dir(args.out, args.overwrite)
    rows = ablate(args.suite, model_config, train_config, infer, suite, oracle,
                  n_eval=args.n_eval, workers=args.workers)
    outputs = write_ablation(rows, out, args.suite)
    print(format_table(rows), end="")
    snapshot = {}
    for config in (model_config, train_config, infer, suite, oracle):
        snapshot.update(config_to_mapping(config))
    return snapshot, train_config.seed, outputs, {"suite": args.suite, "n_eval": args.n_eval, "workers": args.workers}


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "track": cmd_track,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="armot", description="Autoregresyjne śledzenie wielu obiektów")
    parser.add_argument("--version", action="version", version=f"armot {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Plik konfiguracyjny klucz = wartość")
    common.add_argument("--seed", type=int, help="Ziarno (nadpisuje wszystkie klucze seed)")
    common.add_argument("--out", type=Path, required=True, help="Katalog wyjściowy")
    common.add_argument("--overwrite", action="store_true", help="Pozwól nadpisać niepusty katalog wyjściowy")
    common.add_argument("--device", type=str, help="Urządzenie torch (cpu, cuda)")

    inference = argparse.ArgumentParser(add_help=False)
    inference.add_argument("--mode", choices=("window", "tmf"), help="Tryb historii śledzenia")
    inference.add_argument("--tau-loss", type=int, help="Po ilu klatkach nieobecności ślad jest usuwany")
    inference.add_argument("--tau-det", type=float, help="Próg pewności detekcji")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Generuj syntetyczne nagrania")
    simulate.add_argument("--images", action="store_true", help="Zapisz także obrazy klatek (img1/*.png)")

    train = subparsers.add_parser("train", parents=[common], help="Trenuj model")
    train.add_argument("--data", type=Path, required=True, help="Katalog nagrań (lub jedno nagranie)")

    track = subparsers.add_parser("track", parents=[common, inference], help="Śledź nagranie")
    track.add_argument("--checkpoint", type=Path, required=True, help="Punkt kontrolny modelu")
    track.add_argument("--video", type=Path, required=True, help="Katalog nagrania")

    evaluation = subparsers.add_parser("eval", parents=[common], help="Policz metryki")
    evaluation.add_argument("--gt", type=Path, required=True, help="Plik gt MOTChallenge")
    evaluation.add_argument("--pred", type=Path, required=True, help="Plik predykcji MOTChallenge")
    evaluation.add_argument("--width", type=int, help="Szerokość obrazu w pikselach (prostokąty wystające poza obraz nie są przycinane)")
    evaluation.add_argument("--height", type=int, help="Wysokość obrazu w pikselach")
    evaluation.add_argument("--n-frames", type=int, help="Liczba klatek nagrania")

    ablation = subparsers.add_parser("ablate", parents=[common, inference], help="Uruchom zestaw ablacji")
    ablation.add_argument("--suite", choices=SUITES, required=True, help="Nazwa zestawu")
    ablation.add_argument("--workers", type=int, default=1, help="Liczba procesów")
    ablation.add_argument("--n-eval", type=int, default=10, help="Liczba odłożonych scenariuszy")
    return parser


def main(argv=None):
    """
    Uruchamia podkomendę.

    Returns:
        Kod wyjścia: 0 gdy zapisano manifest, 1 przy błędzie
    """
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        configure_logging()
        snapshot, seed, outputs, inputs = COMMANDS[args.command](args)
        write_config(snapshot, Path(args.out) / SNAPSHOT_FILE)
        outputs["config"] = Path(args.out) / SNAPSHOT_FILE
        manifest = RunManifest(args.command, snapshot, seed, inputs=inputs, outputs=outputs,
                               duration=round(time.perf_counter() - start, 3))
        path = manifest.write(args.out)
    except (ArmotError, OSError) as exc:
        logger.opt(exception=exc).debug("Szczegóły błędu")
        print(f"armot {args.command}: {exc}", file=sys.stderr)
        return 1
    logger.info("Zapisano manifest {}", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
