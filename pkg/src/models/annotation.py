"""
Annotation data models for mmforge
"""
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional

from ..errors import UnresolvedPlaceholder

CAPTION_KIND = "future_plausible"
PLACEHOLDERS: FrozenSet[str] = frozenset({"file_name", "caption", "categories"})


@dataclass(frozen=True)
class CaptionRecord:
    """Future-plausible caption for one image"""
    image_id: int
    text: str
    kind: str = CAPTION_KIND

    def to_dict(self) -> Dict[str, Any]:
        return {"image_id": self.image_id, "text": self.text, "kind": self.kind}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CaptionRecord":
        return cls(image_id=int(data["image_id"]), text=str(data["text"]), kind=str(data.get("kind", CAPTION_KIND)))


@dataclass(frozen=True)
class VqaPair:
    """Question-answer pair"""
    question: str
    answer: str

    def to_dict(self) -> Dict[str, str]:
        return {"question": self.question, "answer": self.answer}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VqaPair":
        return cls(question=str(data["question"]), answer=str(data["answer"]))


@dataclass
class VqaSet:
    """The three question-answer pairs tied to one image"""
    image_id: Optional[int]
    pairs: List[VqaPair] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"image_id": self.image_id, "pairs": [p.to_dict() for p in self.pairs]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VqaSet":
        image_id = data.get("image_id")
        return cls(
            image_id=None if image_id is None else int(image_id),
            pairs=[VqaPair.from_dict(p) for p in data["pairs"]],
        )


@dataclass(frozen=True)
class PromptTemplate:
    """Named prompt body with {placeholder} fields"""
    name: str
    body: str

    def __post_init__(self):
        unknown = self.placeholders() - PLACEHOLDERS
        if unknown:
            raise UnresolvedPlaceholder(
                f"template '{self.name}' uses undeclared placeholders {sorted(unknown)}"
            )

    def placeholders(self) -> FrozenSet[str]:
        return frozenset(
            name for _, name, _, _ in string.Formatter().parse(self.body) if name is not None
        )

    def render(self, **fields: str) -> str:
        missing = self.placeholders() - fields.keys()
        if missing:
            raise UnresolvedPlaceholder(
                f"template '{self.name}' needs {sorted(missing)} which were not supplied"
            )
        return self.body.format(**fields)

    @classmethod
    def from_file(cls, path, name: str = None) -> "PromptTemplate":
        path = Path(path)
        return cls(name=name or path.stem, body=path.read_text(encoding="utf-8"))
