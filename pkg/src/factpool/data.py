"""Question records: one JSON object per line.

Fields: context (str), question (str), candidates (list[str]),
answer_index (int), plus optional pre-linked entity lists
`question_entities` (list[str]) and `answer_entities` (list[list[str]],
one list per candidate).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class QuestionRecord:
    question: str
    candidates: list[str]
    answer_index: int
    context: str = ""
    question_entities: list[str] | None = None
    answer_entities: list[list[str]] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.candidates) < 1:
            raise ValueError("record needs at least one candidate")
        if not 0 <= self.answer_index < len(self.candidates):
            raise ValueError(
                f"answer_index {self.answer_index} out of range for "
                f"{len(self.candidates)} candidates"
            )
        if self.answer_entities is not None and len(self.answer_entities) != len(self.candidates):
            raise ValueError("answer_entities must have one list per candidate")

    def to_json(self) -> str:
        payload = {
            "context": self.context,
            "question": self.question,
            "candidates": self.candidates,
            "answer_index": self.answer_index,
        }
        if self.question_entities is not None:
            payload["question_entities"] = self.question_entities
        if self.answer_entities is not None:
            payload["answer_entities"] = self.answer_entities
        if self.meta:
            payload["meta"] = self.meta
        return json.dumps(payload, sort_keys=True)


def record_from_dict(obj: dict) -> QuestionRecord:
    return QuestionRecord(
        question=obj["question"],
        candidates=list(obj["candidates"]),
        answer_index=int(obj["answer_index"]),
        context=obj.get("context", ""),
        question_entities=obj.get("question_entities"),
        answer_entities=obj.get("answer_entities"),
        meta=obj.get("meta", {}),
    )


def load_dataset(path: str | Path) -> list[QuestionRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: bad record on line {lineno}: {exc}") from exc
    return records


def save_dataset(records: list[QuestionRecord], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
