"""
Metryki śledzenia: CLEAR (MOTA), IDF1 i HOTA (DetA, AssA).

- match_frame: dopasowanie węgierskie na IoU w jednej klatce
- IDF1: globalne przypisanie trajektorii gt do trajektorii predykcji,
  liczone jako przepływ o minimalnym koszcie w sieci warstwowej
  (źródło -> trajektorie gt -> trajektorie predykcji -> ujście)
- HOTA: jedno dopasowanie na klatkę ważone globalną zgodnością tożsamości,
  filtrowane progami alfa = 0.05, 0.10, ..., 0.95 i uśrednione
"""

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from armot.errors import FrameRangeError
from armot.motchallenge import TrackingResult, TrackRecord

CLEAR_THRESHOLD = 0.5
HOTA_ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 20))
HOTA_EPS = np.finfo(float).eps


def iou_matrix(gt_boxes, pred_boxes):
    """
    IoU każdej pary prostokątów (x1, y1, x2, y2).

    Args:
        gt_boxes: Tablica N x 4
        pred_boxes: Tablica M x 4

    Returns:
        Tablica N x M
    """
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    pred = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    x1 = np.maximum(gt[:, None, 0], pred[None, :, 0])
    y1 = np.maximum(gt[:, None, 1], pred[None, :, 1])
    x2 = np.minimum(gt[:, None, 2], pred[None, :, 2])
    y2 = np.minimum(gt[:, None, 3], pred[None, :, 3])
    inter = np.clip(x2 - x1, 0, None) * np.clip(y2 - y1, 0, None)
    area_gt = (gt[:, 2] - gt[:, 0]) * (gt[:, 3] - gt[:, 1])
    area_pred = (pred[:, 2] - pred[:, 0]) * (pred[:, 3] - pred[:, 1])
    union = area_gt[:, None] + area_pred[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def match_from_ious(ious, threshold):
    """Dopasowanie maksymalizujące sumę IoU; pary poniżej progu są wykluczone."""
    if ious.size == 0:
        return []
    weights = np.where(ious >= threshold, ious, 0.0)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return sorted((int(g), int(p)) for g, p in zip(rows, cols) if ious[g, p] >= threshold)


def match_frame(gt_boxes, pred_boxes, iou_threshold=CLEAR_THRESHOLD):
    """
    Dopasowanie jeden do jednego w klatce.

    Args:
        gt_boxes: Prostokąty gt (N x 4)
        pred_boxes: Prostokąty predykcji (M x 4)
        iou_threshold: Minimalne IoU pary

    Returns:
        Lista par (indeks gt, indeks predykcji) posortowana po indeksie gt
    """
    return match_from_ious(iou_matrix(gt_boxes, pred_boxes), iou_threshold)


@dataclass
class EvalReport:
    mota: float = 1.0
    idf1: float = 1.0
    hota: float = 1.0
    deta: float = 1.0
    assa: float = 1.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    num_gt: int = 0
    num_pred: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0
    alphas: tuple = HOTA_ALPHAS
    hota_alpha: list = field(default_factory=list)
    deta_alpha: list = field(default_factory=list)
    assa_alpha: list = field(default_factory=list)

    def summary(self):
        """Słownik klucz -> wartość do pliku podsumowania."""
        return {
            "MOTA": self.mota, "IDF1": self.idf1, "HOTA": self.hota, "DetA": self.deta, "AssA": self.assa,
            "TP": self.tp, "FP": self.fp, "FN": self.fn, "IDSW": self.idsw,
            "GT": self.num_gt, "PRED": self.num_pred, "IDTP": self.idtp, "IDFP": self.idfp, "IDFN": self.idfn,
        }

    def to_summary(self):
        lines = []
        for key, value in self.summary().items():
            lines.append(f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}")
        return "\n".join(lines) + "\n"

    def to_text(self):
        lines = [
            "Wyniki ewaluacji",
            "================",
            f"HOTA  {self.hota:8.4f}   DetA {self.deta:8.4f}   AssA {self.assa:8.4f}",
            f"MOTA  {self.mota:8.4f}   IDF1 {self.idf1:8.4f}",
            f"TP {self.tp}  FP {self.fp}  FN {self.fn}  IDSW {self.idsw}  GT {self.num_gt}",
            "",
            "alfa    HOTA    DetA    AssA",
        ]
        for alpha, h, d, a in zip(self.alphas, self.hota_alpha, self.deta_alpha, self.assa_alpha):
            lines.append(f"{alpha:4.2f}  {h:6.4f}  {d:6.4f}  {a:6.4f}")
        return "\n".join(lines) + "\n"


def write_report(report, path):
    Path(path).write_text(report.to_text(), encoding="utf-8")


def write_summary(report, path):
    Path(path).write_text(report.to_summary(), encoding="utf-8")


def _frame_arrays(records):
    ids = [r.track_id for r in records]
    boxes = np.array([r.bbox.as_tuple() for r in records], dtype=np.float64).reshape(-1, 4)
    return ids, boxes


def _clear(frames, threshold):
    tp = fp = fn = idsw = 0
    last_match = {}
    for gt_ids, pred_ids, ious in frames:
        matches = match_from_ious(ious, threshold)
        tp += len(matches)
        fn += len(gt_ids) - len(matches)
        fp += len(pred_ids) - len(matches)
        for g, p in matches:
            gid, pid = gt_ids[g], pred_ids[p]
            if gid in last_match and last_match[gid] != pid:
                idsw += 1
            last_match[gid] = pid
    return tp, fp, fn, idsw


def identity_assignment(overlaps):
    """
    Optymalne przypisanie trajektorii gt do trajektorii predykcji.

    Args:
        overlaps: Słownik (gt_id, pred_id) -> liczba klatek z IoU >= progu

    Returns:
        Krotka (IDTP, słownik gt_id -> pred_id)
    """
    gt_tracks = sorted({g for g, _ in overlaps})
    pred_tracks = sorted({p for _, p in overlaps})
    if not gt_tracks:
        return 0, {}
    graph = nx.DiGraph()
    for g in gt_tracks:
        graph.add_edge("source", ("gt", g), capacity=1, weight=0)
    for p in pred_tracks:
        graph.add_edge(("pred", p), "sink", capacity=1, weight=0)
    for g in gt_tracks:
        for p in pred_tracks:
            graph.add_edge(("gt", g), ("pred", p), capacity=1, weight=-overlaps.get((g, p), 0))
    flow = nx.max_flow_min_cost(graph, "source", "sink")
    assignment = {}
    for g in gt_tracks:
        for (_, p), amount in flow[("gt", g)].items():
            if amount > 0:
                assignment[g] = p
    idtp = sum(overlaps.get((g, p), 0) for g, p in assignment.items())
    return idtp, assignment


def _idf1(frames, num_gt, num_pred, threshold):
    overlaps = defaultdict(int)
    for gt_ids, pred_ids, ious in frames:
        for g, p in zip(*np.nonzero(ious >= threshold)):
            overlaps[(gt_ids[g], pred_ids[p])] += 1
    idtp, _ = identity_assignment(dict(overlaps))
    idfp, idfn = num_pred - idtp, num_gt - idtp
    idf1 = 1.0 if num_gt + num_pred == 0 else 2 * idtp / (num_gt + num_pred)
    return idf1, idtp, idfp, idfn


def alignment_scores(frames, gt_counts, pred_counts):
    """
    Globalna zgodność par tożsamości (gt_id, pred_id) w [0, 1].

    W każdej klatce IoU pary jest normalizowane sumami IoU jej wiersza i kolumny;
    suma po klatkach dzielona jest jak indeks Jaccarda przez liczbę klatek obu tożsamości.
    """
    potential = defaultdict(float)
    for gt_ids, pred_ids, ious in frames:
        if ious.size == 0:
            continue
        denom = ious.sum(axis=1, keepdims=True) + ious.sum(axis=0, keepdims=True) - ious
        normalized = np.divide(ious, denom, out=np.zeros_like(ious), where=denom > HOTA_EPS)
        for g, p in zip(*np.nonzero(normalized)):
            potential[(gt_ids[g], pred_ids[p])] += float(normalized[g, p])
    return {(g, p): value / (gt_counts[g] + pred_counts[p] - value) for (g, p), value in potential.items()}


def hota_matches(frames, alignment):
    """
    Jedno dopasowanie na klatkę maksymalizujące sumę zgodność * IoU.

    Returns:
        Dla każdej klatki lista trójek (indeks gt, indeks predykcji, IoU); progi alfa filtrują je później
    """
    matched = []
    for gt_ids, pred_ids, ious in frames:
        if ious.size == 0:
            matched.append([])
            continue
        align = np.array([[alignment.get((g, p), 0.0) for p in pred_ids] for g in gt_ids])
        rows, cols = linear_sum_assignment(align * ious, maximize=True)
        matched.append([(int(g), int(p), float(ious[g, p])) for g, p in zip(rows, cols)])
    return matched


def _hota_at(frames, matched, alpha, gt_counts, pred_counts):
    tp = fp = fn = 0
    pairs = defaultdict(int)
    for (gt_ids, pred_ids, _), frame_matches in zip(frames, matched):
        matches = [(g, p) for g, p, iou in frame_matches if iou >= alpha - HOTA_EPS]
        tp += len(matches)
        fn += len(gt_ids) - len(matches)
        fp += len(pred_ids) - len(matches)
        for g, p in matches:
            pairs[(gt_ids[g], pred_ids[p])] += 1
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    deta = tp / (tp + fp + fn)
    if tp == 0:
        return 0.0, deta, 0.0
    # każde dopasowanie wnosi TPA / (TPA + FPA + FNA) swojej pary
    assa = sum(count * count / (gt_counts[g] + pred_counts[p] - count)
               for (g, p), count in pairs.items()) / tp
    return float(np.sqrt(deta * assa)), deta, assa


def evaluate(gt, pred):
    """
    Porównuje wynik śledzenia z ground truth.

    Args:
        gt: TrackingResult ground truth (tylko widoczne obiekty)
        pred: TrackingResult predykcji

    Returns:
        EvalReport

    Raises:
        FrameRangeError: gdy wyniki obejmują różną liczbę klatek
    """
    if gt.n_frames != pred.n_frames:
        raise FrameRangeError(f"gt ma {gt.n_frames} klatek, predykcja {pred.n_frames}")
    gt_frames, pred_frames = gt.by_frame(), pred.by_frame()
    frames = []
    gt_counts, pred_counts = defaultdict(int), defaultdict(int)
    for t in sorted(set(gt_frames) | set(pred_frames)):
        gt_ids, gt_boxes = _frame_arrays(gt_frames.get(t, []))
        pred_ids, pred_boxes = _frame_arrays(pred_frames.get(t, []))
        frames.append((gt_ids, pred_ids, iou_matrix(gt_boxes, pred_boxes)))
        for g in gt_ids:
            gt_counts[g] += 1
        for p in pred_ids:
            pred_counts[p] += 1
    num_gt, num_pred = len(gt.records), len(pred.records)

    tp, fp, fn, idsw = _clear(frames, CLEAR_THRESHOLD)
    if num_gt:
        mota = 1.0 - (fn + fp + idsw) / num_gt
    else:
        mota = 1.0 if num_pred == 0 else 0.0
    idf1, idtp, idfp, idfn = _idf1(frames, num_gt, num_pred, CLEAR_THRESHOLD)

    matched = hota_matches(frames, alignment_scores(frames, gt_counts, pred_counts))
    per_alpha = [_hota_at(frames, matched, alpha, gt_counts, pred_counts) for alpha in HOTA_ALPHAS]
    hota_alpha = [h for h, _, _ in per_alpha]
    deta_alpha = [d for _, d, _ in per_alpha]
    assa_alpha = [a for _, _, a in per_alpha]
    return EvalReport(
        mota=mota, idf1=idf1,
        hota=float(np.mean(hota_alpha)), deta=float(np.mean(deta_alpha)), assa=float(np.mean(assa_alpha)),
        tp=tp, fp=fp, fn=fn, idsw=idsw, num_gt=num_gt, num_pred=num_pred,
        idtp=idtp, idfp=idfp, idfn=idfn,
        hota_alpha=hota_alpha, deta_alpha=deta_alpha, assa_alpha=assa_alpha,
    )


def concat_results(results):
    """
    Łączy wyniki wielu nagrań w jeden (przesunięte klatki i rozłączne identyfikatory),
    aby zliczenia sumowały się deterministycznie.
    """
    records, frame_offset, id_offset = [], 0, 0
    for result in results:
        for r in result.records:
            records.append(TrackRecord(r.frame_index + frame_offset, r.track_id + id_offset, r.bbox, r.confidence))
        frame_offset += result.n_frames
        id_offset += max((r.track_id for r in result.records), default=-1) + 1
    return TrackingResult(records, frame_offset)


def evaluate_many(pairs):
    """Ewaluacja listy par (gt, pred) jako jednej połączonej sekwencji."""
    pairs = list(pairs)
    for gt, pred in pairs:
        if gt.n_frames != pred.n_frames:
            raise FrameRangeError(f"gt ma {gt.n_frames} klatek, predykcja {pred.n_frames}")
    return evaluate(concat_results([g for g, _ in pairs]), concat_results([p for _, p in pairs]))


def gt_result(frames):
    """Wynik ground truth z widocznych adnotacji klatek."""
    records = [TrackRecord(f.frame_index, a.track_id, a.bbox, 1.0)
               for f in frames for a in f.visible_annotations()]
    height, width = (frames[0].height, frames[0].width) if frames else (1, 1)
    return TrackingResult(records, len(frames), width, height)
