"""
Mały detektor w stylu DETR: uczone zapytania zwracające uwagę na cechy łatek,
głowica obiektowości i głowica prostokątów, dopasowanie węgierskie do gt
oraz straty BCE + L1 + GIoU.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment
from torch import nn
from torchvision.ops import box_convert, generalized_box_iou, generalized_box_iou_loss, nms

from armot.core import BBox, Detection


@dataclass
class DetectorOutput:
    """Logity obiektowości B x Q, prostokąty (cx, cy, w, h) B x Q x 4, zapytania B x Q x d_det."""
    logits: torch.Tensor
    boxes: torch.Tensor
    queries: torch.Tensor


def patch_centers(grid_h, grid_w, device=None):
    """Środki komórek siatki w kolejności wierszowej, (grid_h*grid_w) x 2 jako (x, y)."""
    ys = (torch.arange(grid_h, device=device, dtype=torch.float32) + 0.5) / grid_h
    xs = (torch.arange(grid_w, device=device, dtype=torch.float32) + 0.5) / grid_w
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([grid_x.flatten(), grid_y.flatten()], dim=1)


class ToyDetector(nn.Module):
    """
    Detektor zapytaniowy.

    Args:
        dims: ModelDims (d_img cech łatek, d_det długość zapytań)
        n_queries: Liczba uczonych zapytań
        heads: Liczba głów uwagi
        layers: Liczba warstw dekodera zapytań
    """

    def __init__(self, dims, n_queries=16, heads=4, layers=2):
        super().__init__()
        self.dims = dims
        self.queries = nn.Embedding(n_queries, dims.d_det)
        self.feature_proj = nn.Linear(dims.d_img, dims.d_det)
        self.position_proj = nn.Linear(2, dims.d_det)
        layer = nn.TransformerDecoderLayer(dims.d_det, heads, dim_feedforward=2 * dims.d_det,
                                           dropout=0.0, batch_first=True)
        self.decoder = nn.TransformerDecoder(layer, layers)
        self.class_head = nn.Linear(dims.d_det, 1)
        self.box_head = nn.Sequential(
            nn.Linear(dims.d_det, dims.d_det), nn.ReLU(), nn.Linear(dims.d_det, 4))

    def forward(self, features, grid_h, grid_w):
        """
        Args:
            features: Cechy łatek B x N x d_img

        Returns:
            DetectorOutput
        """
        batch = features.shape[0]
        memory = self.feature_proj(features) + self.position_proj(patch_centers(grid_h, grid_w, features.device))
        queries = self.queries.weight.unsqueeze(0).expand(batch, -1, -1)
        decoded = self.decoder(queries, memory)
        return DetectorOutput(self.class_head(decoded).squeeze(-1), self.box_head(decoded).sigmoid(), decoded)


def to_xyxy(boxes):
    return box_convert(boxes, in_fmt="cxcywh", out_fmt="xyxy").clamp(0.0, 1.0)


@torch.no_grad()
def hungarian_match(logits, boxes, gt_boxes, weights):
    """
    Dopasowanie zapytań do prostokątów gt jednej klatki.

    Args:
        logits: Q logitów obiektowości
        boxes: Q x 4 (cx, cy, w, h)
        gt_boxes: G x 4 (x1, y1, x2, y2)
        weights: LossWeights (wagi kosztu)

    Returns:
        Krotka (indeksy zapytań, indeksy gt)
    """
    if gt_boxes.shape[0] == 0:
        return [], []
    prob = logits.sigmoid()
    pred_xyxy = to_xyxy(boxes)
    gt_cxcywh = box_convert(gt_boxes, in_fmt="xyxy", out_fmt="cxcywh")
    cost = (-weights.lambda_cls * prob[:, None]
            + weights.lambda_l1 * torch.cdist(boxes, gt_cxcywh, p=1)
            - weights.lambda_giou * generalized_box_iou(pred_xyxy, gt_boxes))
    rows, cols = linear_sum_assignment(cost.cpu().numpy())
    return rows.tolist(), cols.tolist()


def detection_loss(output, gt_boxes, weights):
    """
    Straty detektora dla wsadu klatek.

    Args:
        output: DetectorOutput
        gt_boxes: Lista tensorów G_b x 4 (x1, y1, x2, y2)
        weights: LossWeights

    Returns:
        Krotka (słownik strat cls/l1/giou, lista dopasowań (zapytania, gt) na klatkę)
    """
    matches = [hungarian_match(output.logits[b], output.boxes[b], gt_boxes[b], weights)
               for b in range(len(gt_boxes))]
    labels = torch.zeros_like(output.logits)
    matched_pred, matched_gt = [], []
    for b, (rows, cols) in enumerate(matches):
        labels[b, rows] = 1.0
        matched_pred += [output.boxes[b, r] for r in rows]
        matched_gt += [gt_boxes[b][c] for c in cols]
    losses = {"cls": F.binary_cross_entropy_with_logits(output.logits, labels)}
    if matched_pred:
        pred = torch.stack(matched_pred)
        gt = torch.stack(matched_gt)
        losses["l1"] = F.l1_loss(pred, box_convert(gt, in_fmt="xyxy", out_fmt="cxcywh"))
        losses["giou"] = generalized_box_iou_loss(to_xyxy(pred), gt, reduction="mean")
    else:
        zero = output.boxes.sum() * 0.0
        losses["l1"] = zero
        losses["giou"] = zero
    return losses, matches


def decode_detections(output, index=0, min_score=0.3, nms_iou=0.7):
    """
    Zamienia wyjście detektora na listę Detection (zapytania jako query_embedding).

    Args:
        output: DetectorOutput
        index: Numer klatki we wsadzie
        min_score: Minimalna pewność
        nms_iou: Próg IoU tłumienia niemaksymalnego

    Returns:
        Lista Detection
    """
    scores = output.logits[index].sigmoid()
    boxes = to_xyxy(output.boxes[index])
    keep = (scores >= min_score).nonzero().flatten()
    keep = keep[nms(boxes[keep], scores[keep], nms_iou)] if keep.numel() else keep
    detections = []
    for q in keep.tolist():
        bbox = BBox.clamped(*boxes[q].tolist())
        if bbox is not None:
            detections.append(Detection(bbox, float(scores[q]), output.queries[index, q]))
    return detections
