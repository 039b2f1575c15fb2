"""Turn facts into natural-language text via per-relation templates."""

from __future__ import annotations

from dataclasses import dataclass, field

from factpool.kg import (
    VIRTUAL_ANSWER_RELATION,
    VIRTUAL_QUESTION_RELATION,
    Fact,
    id_to_surface,
)

# Virtual edges have fixed phrasings; template files cannot override them.
_VIRTUAL_TEMPLATES = {
    VIRTUAL_QUESTION_RELATION: "question mentions {t}",
    VIRTUAL_ANSWER_RELATION: "question asks about {t}",
}


class TemplateError(ValueError):
    """Raised for missing or malformed relation templates."""


@dataclass
class TemplateTable:
    """Relation id -> template string with one `{h}` and one `{t}` placeholder."""

    templates: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for relation, template in self.templates.items():
            _validate_template(relation, template)

    def add(self, relation: str, template: str) -> None:
        _validate_template(relation, template)
        self.templates[relation] = template

    def covers(self, relations: set[str]) -> bool:
        missing = {r for r in relations if r not in self.templates and r not in _VIRTUAL_TEMPLATES}
        return not missing

    def __contains__(self, relation: str) -> bool:
        return relation in self.templates or relation in _VIRTUAL_TEMPLATES


def _validate_template(relation: str, template: str) -> None:
    for placeholder in ("{h}", "{t}"):
        if template.count(placeholder) != 1:
            raise TemplateError(
                f"template for relation {relation!r} must contain {placeholder} exactly once: "
                f"{template!r}"
            )


def load_templates(path: str) -> TemplateTable:
    """Load a TSV of `relation\\ttemplate` lines ('#' comments allowed)."""
    table = TemplateTable()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TemplateError(f"{path}: malformed line {lineno}: {line!r}")
            table.add(parts[0].strip(), parts[1])
    return table


def save_templates(table: TemplateTable, path: str) -> None:
    lines = [f"{relation}\t{template}" for relation, template in sorted(table.templates.items())]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class VerbalizedFact:
    fact: Fact
    text: str


def verbalize(fact: Fact, templates: TemplateTable) -> VerbalizedFact:
    """Render a fact as text, substituting entity surface forms."""
    if fact.relation in _VIRTUAL_TEMPLATES:
        template = _VIRTUAL_TEMPLATES[fact.relation]
        text = template.replace("{t}", id_to_surface(fact.tail))
        return VerbalizedFact(fact=fact, text=text)
    template = templates.templates.get(fact.relation)
    if template is None:
        raise TemplateError(f"no template for relation {fact.relation!r}")
    text = template.replace("{h}", id_to_surface(fact.head)).replace(
        "{t}", id_to_surface(fact.tail)
    )
    return VerbalizedFact(fact=fact, text=text)
