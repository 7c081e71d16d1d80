"""
Default prompt templates for the caption and VQA backends
"""

CAPTION_TEMPLATE = (
    "You are given the image {file_name}. It shows: {categories}.\n"
    "Describe a plausible future scene that could unfold from this image in one paragraph. "
    "Mention the visible objects, their relationships and how they are likely to move next."
)

VQA_TEMPLATE = (
    "You are given the image {file_name} and this caption of its plausible future:\n"
    "{caption}\n"
    "Write exactly three visual question-answer pairs about the scene. "
    "Use one line per question starting with 'Q: ' and ending with '?', "
    "followed by one line per answer starting with 'A: '. "
    "Keep answers short."
)

VQA_RETRY_REMINDER = (
    "\nReminder: reply with exactly three question-answer pairs, no more and no fewer."
)
