"""
Evaluation harness for mmforge
Counting error, VQA answer similarity and per-class segmentation reports
"""
import asyncio
import json
import logging
import re
import string
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config import DEFAULT_MAX_WORKERS, UNCHANGED_EPSILON
from ..errors import (
    ClassSetMismatch, DimensionMismatch, EmptyInput, LengthMismatch, MalformedDocument,
    NotNormalized, UnknownImage,
)
from ..models.backend import EmbedRequest
from ..models.dataset import DatasetManifest
from ..models.evaluation import (
    CountingRow, CountPrediction, SegmentationReport, SegReportRow, Taxonomy, VqaRow,
)
from ..models.mask import BinaryMask, RleMask
from ..utils.masks import ClassIouAccumulator, rle_decode
from .backend_gateway import BackendGateway

logger = logging.getLogger(__name__)

DEFAULT_TAXONOMY_PATH = Path(__file__).resolve().parent.parent / "data" / "coco_taxonomy.tsv"
NORM_TOLERANCE = 1e-6
DELTA_DECIMALS = 9
NO_MATCH: Optional[str] = None

_PUNCTUATION = re.compile(f"[{re.escape(string.punctuation)}]")


# Counting

def _paired(pred: Sequence[float], gt: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions for {len(gt)} ground-truth values")
    if not len(pred):
        raise EmptyInput("no values to compare")
    return np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)


def mae(pred: Sequence[float], gt: Sequence[float]) -> float:
    p, g = _paired(pred, gt)
    return float(np.abs(p - g).sum() / len(p))


def mse(pred: Sequence[float], gt: Sequence[float]) -> float:
    p, g = _paired(pred, gt)
    return float(np.square(p - g).sum() / len(p))


def evaluate_counting(
    dataset: DatasetManifest,
    predictions: Iterable[CountPrediction],
    dataset_name: str = "",
    model: str = "",
) -> CountingRow:
    """MAE/MSE of predicted totals against the manifest's CountLabels"""
    samples = dataset.by_id()
    pred, gt = [], []
    for p in predictions:
        if p.image_id not in samples:
            raise UnknownImage(f"prediction for image {p.image_id} which is not in the dataset")
        pred.append(p.predicted_total)
        gt.append(samples[p.image_id].count_label.total)
    row = CountingRow(dataset=dataset_name, model=model, mae=mae(pred, gt), mse=mse(pred, gt))
    logger.info(f"Counting over {len(pred)} predictions: MAE {row.mae:.4f}, MSE {row.mse:.4f}")
    return row


# Taxonomy and WUP

def parse_taxonomy(text: str) -> Taxonomy:
    """Edge list, one ``child<TAB>parent`` per line; '#' starts a comment"""
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not all(p.strip() for p in parts):
            raise MalformedDocument(f"taxonomy line {lineno}: expected 'child<TAB>parent'")
        edges.append((parts[0].strip().lower(), parts[1].strip().lower()))
    return Taxonomy(edges)


def load_taxonomy(path=None) -> Taxonomy:
    path = Path(path) if path else DEFAULT_TAXONOMY_PATH
    taxonomy = parse_taxonomy(path.read_text(encoding="utf-8"))
    logger.debug(f"Loaded taxonomy with {len(taxonomy)} terms from {path}")
    return taxonomy


def wup(taxonomy: Taxonomy, a: str, b: str) -> float:
    """2*depth(lcs) / (depth(a) + depth(b)); lcs is the deepest common ancestor"""
    chain_a = taxonomy.ancestors(a)
    common = set(taxonomy.ancestors(b))
    # chain runs leaf to root, so the first shared term is the deepest
    lcs = next(t for t in chain_a if t in common)
    return 2 * taxonomy.depth(lcs) / (taxonomy.depth(a) + taxonomy.depth(b))


def _normalize_answer(answer: str) -> List[str]:
    return _PUNCTUATION.sub(" ", answer.lower()).split()


def _singular(token: str, taxonomy: Taxonomy) -> str:
    if token in taxonomy:
        return token
    if token.endswith("s") and token[:-1] in taxonomy:
        return token[:-1]
    return token


def answer_to_node(answer: str, taxonomy: Taxonomy) -> Optional[str]:
    """
    Map a free-text answer onto a taxonomy term: exact phrase first, then
    the longest single token that names a term. Returns NO_MATCH otherwise.
    """
    tokens = _normalize_answer(answer)
    if not tokens:
        return NO_MATCH
    phrase = " ".join(tokens)
    if phrase in taxonomy:
        return phrase
    singular = [_singular(t, taxonomy) for t in tokens]
    phrase = " ".join(singular)
    if phrase in taxonomy:
        return phrase
    matches = [t for t in singular if t in taxonomy]
    if not matches:
        return NO_MATCH
    return max(matches, key=len)


def answer_wup(taxonomy: Taxonomy, predicted: str, truth: str) -> float:
    """WUP between two free-text answers; unmatched answers score 0"""
    a = answer_to_node(predicted, taxonomy)
    b = answer_to_node(truth, taxonomy)
    if a is NO_MATCH or b is NO_MATCH:
        return 0.0
    return wup(taxonomy, a, b)


# Embedding score

def embed_score(u: Sequence[float], v: Sequence[float]) -> float:
    """100 * max(cos(u, v), 0) for unit vectors"""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"vectors have dimensions {u.shape} and {v.shape}")
    for name, vec in (("u", u), ("v", v)):
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise NotNormalized(f"{name} has norm {norm}")
    return 100.0 * min(max(float(np.dot(u, v)), 0.0), 1.0)


def _vqa_truth(dataset: DatasetManifest, predictions: Sequence[Mapping]) -> List[Tuple[str, str]]:
    """Pair each prediction with its ground-truth answer"""
    samples = dataset.by_id()
    seen: Dict[int, int] = {}
    pairs = []
    for lineno, p in enumerate(predictions, start=1):
        try:
            image_id, answer = int(p["image_id"]), str(p["answer"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedDocument(f"VQA prediction {lineno}: {e}") from e
        sample = samples.get(image_id)
        if sample is None:
            raise UnknownImage(f"VQA prediction for image {image_id} which is not in the dataset")
        question = p.get("question")
        if question is not None:
            truth = next((q.answer for q in sample.vqa.pairs if q.question == question), None)
            if truth is None:
                raise MalformedDocument(f"image {image_id} has no question {question!r}")
        else:
            # unlabelled predictions follow the sample's pair order
            k = seen.get(image_id, 0)
            if k >= len(sample.vqa.pairs):
                raise MalformedDocument(f"more predictions than questions for image {image_id}")
            seen[image_id] = k + 1
            truth = sample.vqa.pairs[k].answer
        pairs.append((answer, truth))
    return pairs


async def evaluate_vqa(
    dataset: DatasetManifest,
    predictions: Sequence[Mapping],
    gateway: BackendGateway,
    taxonomy: Taxonomy,
    dataset_name: str = "",
    model: str = "",
    max_workers: int = DEFAULT_MAX_WORKERS,
) -> VqaRow:
    """Mean embedding score and mean WUP of predicted against reference answers"""
    pairs = _vqa_truth(dataset, predictions)
    if not pairs:
        raise EmptyInput("no VQA predictions")
    semaphore = asyncio.Semaphore(max_workers)

    async def score(predicted: str, truth: str) -> float:
        async with semaphore:
            u = await gateway.request(EmbedRequest(text=predicted))
            v = await gateway.request(EmbedRequest(text=truth))
        return embed_score(u.vector, v.vector)

    embed_scores = await asyncio.gather(*(score(p, t) for p, t in pairs))
    wups = [answer_wup(taxonomy, p, t) for p, t in pairs]
    row = VqaRow(
        dataset=dataset_name,
        model=model,
        embed_score=float(np.mean(embed_scores)),
        wup=float(np.mean(wups)),
    )
    logger.info(f"VQA over {len(pairs)} answers: embed score {row.embed_score:.2f}, WUP {row.wup:.4f}")
    return row


# Segmentation

def seg_report(
    baseline: Mapping[str, float],
    ours: Mapping[str, float],
    epsilon: float = UNCHANGED_EPSILON,
    baseline_label: str = "Baseline",
    ours_label: str = "Ours",
) -> SegmentationReport:
    """Per-class comparison; classes keep the baseline's order"""
    if set(baseline) != set(ours):
        missing = sorted(set(baseline) ^ set(ours))
        raise ClassSetMismatch(f"class sets differ on {missing}")
    if not baseline:
        raise EmptyInput("no classes to compare")

    rows = [SegReportRow(name, float(baseline[name]), float(ours[name])) for name in baseline]
    # deltas are compared at 9 decimals so rows exactly on the band edge stay unchanged
    deltas = [round(r.delta, DELTA_DECIMALS) for r in rows]
    improved = sum(1 for d in deltas if d > epsilon)
    degraded = sum(1 for d in deltas if d < -epsilon)
    report = SegmentationReport(
        rows=rows,
        miou_baseline=float(np.mean([r.baseline_iou for r in rows])),
        miou_ours=float(np.mean([r.ours_iou for r in rows])),
        improved=improved,
        degraded=degraded,
        unchanged=len(rows) - improved - degraded,
        baseline_label=baseline_label,
        ours_label=ours_label,
    )
    report.validate()
    return report


def load_class_ious(path) -> Dict[str, float]:
    """JSON object mapping class name to IoU"""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedDocument(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise MalformedDocument(f"{path} must hold an object of class -> IoU")
    try:
        return {str(k): float(v) for k, v in data.items()}
    except (TypeError, ValueError) as e:
        raise MalformedDocument(f"{path}: IoU values must be numbers ({e})") from e


def load_mask_predictions(path) -> Dict[int, Dict[str, BinaryMask]]:
    """JSONL of {image_id, masks: {class: rle}}"""
    result: Dict[int, Dict[str, BinaryMask]] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
                result[int(entry["image_id"])] = {
                    str(name): rle_decode(RleMask.from_coco(rle)) for name, rle in entry["masks"].items()
                }
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise MalformedDocument(f"{path} line {lineno}: {e}") from e
    return result


def class_ious_from_masks(
    predictions: Mapping[int, Mapping[str, BinaryMask]],
    ground_truth: Mapping[int, Mapping[str, BinaryMask]],
) -> Dict[str, float]:
    """Dataset-level per-class IoU, accumulated in image id order"""
    accumulator = ClassIouAccumulator()
    for image_id in sorted(ground_truth):
        accumulator.add(predictions.get(image_id, {}), ground_truth[image_id])
    return accumulator.result()
