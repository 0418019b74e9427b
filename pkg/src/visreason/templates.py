"""Named prompt templates with ``{slot}`` substitution.

A template set is a directory of ``.txt`` files, one template per file,
named by stem. Shipped defaults cover every stage; a custom directory
overlays the defaults file by file, so users only provide the templates
they want to change.
"""

from __future__ import annotations

import os
import string
from dataclasses import dataclass
from importlib import resources


class TemplateError(KeyError):
    pass


REQUIRED_TEMPLATES = (
    "feature_prompt",
    "generic_caption",
    "predict",
    "followup",
    "revised_prompt",
    "icl_example",
    "icl_separator",
    "direct",
    "step1",
    "step2",
    "step3",
    "step4",
    "explanation_rate",
)


def _load_dir(path: str) -> dict[str, str]:
    loaded: dict[str, str] = {}
    for entry in sorted(os.listdir(path)):
        if entry.endswith(".txt"):
            with open(os.path.join(path, entry), encoding="utf-8") as fh:
                loaded[entry[:-4]] = fh.read().rstrip("\n")
    return loaded


def _load_defaults() -> dict[str, str]:
    root = resources.files("visreason").joinpath("default_templates")
    loaded: dict[str, str] = {}
    for entry in root.iterdir():
        if entry.name.endswith(".txt"):
            loaded[entry.name[:-4]] = entry.read_text(encoding="utf-8").rstrip("\n")
    return loaded


@dataclass(frozen=True)
class TemplateSet:
    templates: dict[str, str]

    @classmethod
    def load(cls, custom_dir: str | None = None) -> "TemplateSet":
        merged = _load_defaults()
        if custom_dir is not None:
            if not os.path.isdir(custom_dir):
                raise TemplateError(f"template directory not found: {custom_dir}")
            merged.update(_load_dir(custom_dir))
        missing = [name for name in REQUIRED_TEMPLATES if name not in merged]
        if missing:
            raise TemplateError(f"missing templates: {', '.join(missing)}")
        return cls(merged)

    def text(self, name: str) -> str:
        try:
            return self.templates[name]
        except KeyError:
            raise TemplateError(f"unknown template {name!r}") from None

    def slots(self, name: str) -> set[str]:
        fields = {
            field
            for _, field, _, _ in string.Formatter().parse(self.text(name))
            if field
        }
        return fields

    def render(self, name: str, **slots: str) -> str:
        try:
            return self.text(name).format(**slots)
        except (KeyError, IndexError) as exc:
            raise TemplateError(f"template {name!r} needs slot {exc}") from None
