"""
Prompt construction and reply parsing for the caption and VQA backends
"""
import logging
from typing import Dict, List, Optional, Sequence

from ..config import COUNTING_TEMPLATES, VQA_PAIR_COUNT
from ..data.prompt_templates import CAPTION_TEMPLATE, VQA_TEMPLATE
from ..errors import MalformedPair, MismatchedImage, WrongPairCount
from ..models.annotation import CaptionRecord, PromptTemplate, VqaPair, VqaSet
from ..models.coco import CountLabel, ImageRecord

logger = logging.getLogger(__name__)

DEFAULT_CAPTION_TEMPLATE = PromptTemplate("caption", CAPTION_TEMPLATE)
DEFAULT_VQA_TEMPLATE = PromptTemplate("vqa", VQA_TEMPLATE)


def build_caption_prompt(
    image: ImageRecord,
    categories: Sequence[str],
    template: PromptTemplate = DEFAULT_CAPTION_TEMPLATE,
) -> str:
    """Prompt asking for a plausible future description of the image"""
    return template.render(
        file_name=image.file_name,
        categories=", ".join(categories) if categories else "no annotated objects",
        caption="",
    )


def build_vqa_prompt(
    image: ImageRecord,
    caption: CaptionRecord,
    template: PromptTemplate = DEFAULT_VQA_TEMPLATE,
) -> str:
    """Prompt asking for three Q:/A: pairs grounded in image and caption"""
    if caption.image_id != image.id:
        raise MismatchedImage(f"caption is for image {caption.image_id}, not {image.id}")
    return template.render(file_name=image.file_name, caption=caption.text, categories="")


def parse_vqa_response(text: str, image_id: Optional[int] = None) -> VqaSet:
    """
    Parse a reply in the Q:/A: line protocol.

    Blank lines are allowed between blocks but not between a question and
    its answer.
    """
    pairs: List[VqaPair] = []
    question: Optional[str] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            if question is not None:
                raise MalformedPair(f"line {lineno}: blank line between question and answer")
            continue

        if question is None:
            if not line.startswith("Q:"):
                raise MalformedPair(f"line {lineno}: expected 'Q:' but got {line!r}")
            question = line[2:].strip()
            if not question:
                raise MalformedPair(f"line {lineno}: empty question")
            if not question.endswith("?"):
                raise MalformedPair(f"line {lineno}: question {question!r} does not end with '?'")
        else:
            if not line.startswith("A:"):
                raise MalformedPair(f"line {lineno}: expected 'A:' but got {line!r}")
            answer = line[2:].strip()
            if not answer:
                raise MalformedPair(f"line {lineno}: empty answer")
            pairs.append(VqaPair(question=question, answer=answer))
            question = None

    if question is not None:
        raise MalformedPair(f"question {question!r} has no answer")
    if len(pairs) != VQA_PAIR_COUNT:
        raise WrongPairCount(found=len(pairs), expected=VQA_PAIR_COUNT)
    return VqaSet(image_id=image_id, pairs=pairs)


def render_vqa(vqa: VqaSet) -> str:
    """Serialize pairs in the Q:/A: line protocol"""
    return "".join(f"Q: {p.question}\nA: {p.answer}\n" for p in vqa.pairs)


def counts_to_qa(label: CountLabel, templates: Dict[str, str] = COUNTING_TEMPLATES) -> List[VqaPair]:
    """Counting questions: one per category (name ascending), total last"""
    pairs = [
        VqaPair(question=templates["per_category"].format(name=name), answer=str(count))
        for name, count in sorted(label.per_category.items())
    ]
    pairs.append(VqaPair(question=templates["total"], answer=str(label.total)))
    return pairs
