"""Textual prompts for (LCZ class, band group) pairs.

Every prompt follows the template ``"a photo of a {class} with {group} bands"``,
where ``{class}`` is an extended description of the LCZ class and ``{group}``
the band group's prompt name.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .bands import BandGroupSpec, default_band_groups
from .data import LCZ_CODES, NUM_CLASSES

PREFIX = "a photo of a "
SUFFIX = " bands"

CLASS_NAMES = (
    "compact high-rise",
    "compact mid-rise",
    "compact low-rise",
    "open high-rise",
    "open mid-rise",
    "open low-rise",
    "lightweight low-rise",
    "large low-rise",
    "sparsely built",
    "heavy industry",
    "dense trees",
    "scattered trees",
    "bush, scrub",
    "low plants",
    "bare rock or paved",
    "bare soil or sand",
    "water",
)

# Fixed descriptions for LCZ 1, 9 and G; they take precedence over the description file.
BUILTIN_DESCRIPTIONS = {
    0: "dense clusters of vertical edifices with limited spatial gaps, representing urban centers",
    8: "areas with minimal building density, characterized by isolated structures and significant open spaces",
    16: "bodies of water such as rivers, lakes, or seas, appearing as uniform blue areas on images",
}


class DescriptionFileError(ValueError):
    pass


@dataclass(frozen=True)
class ClassDescription:
    class_id: int
    class_name: str
    extended_description: str


def build_prompt(desc: ClassDescription, spec: BandGroupSpec) -> str:
    text = desc.extended_description
    if not text or not text.strip():
        raise ValueError(f"class {desc.class_id}: empty description")
    if not spec.prompt_name:
        raise ValueError(f"band group {spec.name}: empty prompt name")
    return PREFIX + text + " with " + spec.prompt_name + SUFFIX


def parse_descriptions(text: str, source: str = "<string>") -> dict:
    """Parse ``class_id<TAB>description`` lines; ``#`` starts a comment line."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        key, sep, desc = line.partition("\t")
        if not sep:
            raise DescriptionFileError(f"{source}:{n}: expected 'class_id<TAB>description'")
        try:
            class_id = int(key)
        except ValueError:
            raise DescriptionFileError(f"{source}:{n}: class id {key!r} is not an integer") from None
        if not 0 <= class_id < NUM_CLASSES:
            raise DescriptionFileError(f"{source}:{n}: class id {class_id} outside 0..16")
        if class_id in out:
            raise DescriptionFileError(f"{source}:{n}: duplicate class id {class_id}")
        desc = desc.strip()
        if not desc:
            raise DescriptionFileError(f"{source}:{n}: empty description")
        out[class_id] = desc
    return out


def _bundled_descriptions() -> str:
    return resources.files("bplcz").joinpath("resources/descriptions.tsv").read_text()


@dataclass
class PromptCatalog:
    descriptions: list
    groups: list
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.entries:
            self.entries = {
                (d.class_id, g.name): build_prompt(d, g) for d in self.descriptions for g in self.groups
            }

    def __len__(self) -> int:
        return len(self.entries)

    def prompt(self, class_id: int, group_name: str) -> str:
        return self.entries[(int(class_id), group_name)]

    def prompts_for(self, labels, group_name: str) -> list:
        return [self.prompt(y, group_name) for y in labels]

    def all_prompts(self) -> list:
        """Prompts ordered class-major, group-minor."""
        return [self.prompt(d.class_id, g.name) for d in self.descriptions for g in self.groups]

    def dump(self) -> str:
        lines = []
        for d in self.descriptions:
            for g in self.groups:
                lines.append(f"{d.class_id}\t{LCZ_CODES[d.class_id]}\t{g.name}\t{self.prompt(d.class_id, g.name)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()


def default_catalog(groups=None, description_file=None) -> PromptCatalog:
    """Catalog for all 17 classes.

    Descriptions come from the built-in table, then the description file
    (bundled by default); classes missing from both fall back to their bare
    class name with a warning.
    """
    groups = default_band_groups() if groups is None else list(groups)
    if description_file is None:
        supplied = parse_descriptions(_bundled_descriptions(), "descriptions.tsv")
    else:
        path = Path(description_file)
        supplied = parse_descriptions(path.read_text(), str(path))

    descriptions, fallback = [], []
    for cid, name in enumerate(CLASS_NAMES):
        text = BUILTIN_DESCRIPTIONS.get(cid) or supplied.get(cid)
        if text is None:
            fallback.append(cid)
            text = name
        descriptions.append(ClassDescription(cid, name, text))
    if fallback:
        codes = ", ".join(f"{c} (LCZ {LCZ_CODES[c]})" for c in fallback)
        warnings.warn(f"no extended description for classes {codes}; using class names", stacklevel=2)
    return PromptCatalog(descriptions, groups)
