"""
Evaluation models for mmforge
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from ..errors import InvariantViolation, MalformedDocument, UnknownTerm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountPrediction:
    """Model output for one counting question"""
    image_id: int
    predicted_total: int
    predicted_per_category: Optional[Dict[str, int]] = None

    def __post_init__(self):
        if self.predicted_total < 0:
            raise InvariantViolation(f"image {self.image_id}: predicted_total must be >= 0")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CountPrediction":
        try:
            per_category = data.get("predicted_per_category")
            return cls(
                image_id=int(data["image_id"]),
                predicted_total=int(data["predicted_total"]),
                predicted_per_category={str(k): int(v) for k, v in per_category.items()} if per_category else None,
            )
        except KeyError as e:
            raise MalformedDocument(f"counting prediction has no {e}") from e
        except (AttributeError, TypeError, ValueError) as e:
            raise MalformedDocument(f"bad counting prediction {data!r}: {e}") from e


class Taxonomy:
    """
    Single-rooted tree of terms, built from (child, parent) edges.
    depth(root) == 1.
    """

    def __init__(self, edges: Iterable[Tuple[str, str]]):
        self.parents: Dict[str, Optional[str]] = {}
        for child, parent in edges:
            if child == parent:
                raise InvariantViolation(f"taxonomy term '{child}' is its own parent")
            previous = self.parents.get(child)
            if previous is not None and previous != parent:
                raise InvariantViolation(f"taxonomy term '{child}' has two parents: '{previous}', '{parent}'")
            self.parents[child] = parent
            self.parents.setdefault(parent, None)

        roots = [name for name, parent in self.parents.items() if parent is None]
        if len(roots) != 1:
            raise InvariantViolation(f"taxonomy must have exactly one root, found {sorted(roots)}")
        self.root = roots[0]

        self._depths: Dict[str, int] = {}
        for name in self.parents:
            self._depths[name] = len(self._chain(name))

    def _chain(self, name: str) -> List[str]:
        chain = [name]
        seen = {name}
        while self.parents[chain[-1]] is not None:
            parent = self.parents[chain[-1]]
            if parent in seen:
                raise InvariantViolation(f"taxonomy has a cycle through '{parent}'")
            seen.add(parent)
            chain.append(parent)
        return chain

    def __contains__(self, name: str) -> bool:
        return name in self.parents

    def __len__(self) -> int:
        return len(self.parents)

    @property
    def nodes(self) -> List[str]:
        return sorted(self.parents)

    def ancestors(self, name: str) -> List[str]:
        """Path from ``name`` up to the root, both included"""
        if name not in self.parents:
            raise UnknownTerm(f"'{name}' is not in the taxonomy")
        return self._chain(name)

    def depth(self, name: str) -> int:
        if name not in self._depths:
            raise UnknownTerm(f"'{name}' is not in the taxonomy")
        return self._depths[name]


@dataclass(frozen=True)
class SegReportRow:
    name: str
    baseline_iou: float
    ours_iou: float

    @property
    def delta(self) -> float:
        return self.ours_iou - self.baseline_iou

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "baseline_iou": self.baseline_iou, "ours_iou": self.ours_iou}


@dataclass
class SegmentationReport:
    """Per-class IoU comparison between two models"""
    rows: List[SegReportRow]
    miou_baseline: float
    miou_ours: float
    improved: int
    degraded: int
    unchanged: int
    baseline_label: str = "Baseline"
    ours_label: str = "Ours"

    @property
    def miou_delta(self) -> float:
        return self.miou_ours - self.miou_baseline

    def validate(self) -> None:
        if self.improved + self.degraded + self.unchanged != len(self.rows):
            raise InvariantViolation(
                f"classification counts {self.improved}+{self.degraded}+{self.unchanged} "
                f"do not cover {len(self.rows)} classes"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "miou_baseline": self.miou_baseline,
            "miou_ours": self.miou_ours,
            "improved": self.improved,
            "degraded": self.degraded,
            "unchanged": self.unchanged,
            "baseline_label": self.baseline_label,
            "ours_label": self.ours_label,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SegmentationReport":
        return cls(
            rows=[SegReportRow(str(r["name"]), float(r["baseline_iou"]), float(r["ours_iou"])) for r in data["rows"]],
            miou_baseline=float(data["miou_baseline"]),
            miou_ours=float(data["miou_ours"]),
            improved=int(data["improved"]),
            degraded=int(data["degraded"]),
            unchanged=int(data["unchanged"]),
            baseline_label=data.get("baseline_label", "Baseline"),
            ours_label=data.get("ours_label", "Ours"),
        )


@dataclass(frozen=True)
class CountingRow:
    dataset: str
    model: str
    mae: float
    mse: float

    def to_dict(self) -> Dict[str, Any]:
        return {"dataset": self.dataset, "model": self.model, "mae": self.mae, "mse": self.mse}


@dataclass(frozen=True)
class VqaRow:
    dataset: str
    model: str
    embed_score: float
    wup: float

    def to_dict(self) -> Dict[str, Any]:
        return {"dataset": self.dataset, "model": self.model, "embed_score": self.embed_score, "wup": self.wup}


@dataclass
class EvalReport:
    """Counting, VQA and segmentation results; any section may be empty"""
    counting: List[CountingRow] = field(default_factory=list)
    vqa: List[VqaRow] = field(default_factory=list)
    segmentation: Optional[SegmentationReport] = None

    def validate(self) -> None:
        if self.segmentation is not None:
            self.segmentation.validate()

    def merge(self, other: "EvalReport") -> "EvalReport":
        segmentation = self.segmentation
        if other.segmentation is not None:
            if segmentation is not None:
                logger.warning("Both reports carry a segmentation section, keeping the first")
            else:
                segmentation = other.segmentation
        return EvalReport(
            counting=self.counting + other.counting,
            vqa=self.vqa + other.vqa,
            segmentation=segmentation,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "counting": [r.to_dict() for r in self.counting],
            "vqa": [r.to_dict() for r in self.vqa],
            "segmentation": self.segmentation.to_dict() if self.segmentation else None,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        try:
            segmentation = data.get("segmentation")
            return cls(
                counting=[CountingRow(**r) for r in data.get("counting", [])],
                vqa=[VqaRow(**r) for r in data.get("vqa", [])],
                segmentation=SegmentationReport.from_dict(segmentation) if segmentation else None,
            )
        except KeyError as e:
            raise MalformedDocument(f"report is missing {e}") from e
        except (AttributeError, TypeError, ValueError) as e:
            raise MalformedDocument(f"bad report document: {e}") from e
