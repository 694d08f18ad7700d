"""Band groups: physically motivated channel subsets of each modality."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import MS_CHANNELS, SAR_CHANNELS, Sample


class Modality(str, Enum):
    SAR = "SAR"
    MS = "MS"

    @property
    def channel_count(self) -> int:
        return SAR_CHANNELS if self is Modality.SAR else MS_CHANNELS


@dataclass(frozen=True)
class BandGroupSpec:
    name: str
    modality: Modality
    channels: tuple  # 1-based
    prompt_name: str

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    @property
    def indices(self) -> list:
        """0-based channel indices into the modality tensor."""
        return [c - 1 for c in self.channels]

    @property
    def width(self) -> int:
        return len(self.channels)

    def check(self):
        chans = self.channels
        if not chans:
            raise ValueError(f"band group {self.name}: empty channel list")
        if any(b <= a for a, b in zip(chans, chans[1:])):
            raise ValueError(f"band group {self.name}: channels {chans} not strictly increasing")
        limit = self.modality.channel_count
        if chans[0] < 1 or chans[-1] > limit:
            raise ValueError(f"band group {self.name}: channels {chans} outside 1..{limit}")


@dataclass(frozen=True)
class GroupedSample:
    groups: tuple
    label: int


def default_band_groups() -> list:
    """The seven groups in canonical order (VH, VV, PolSAR, RGB, VRE, NIR, SWIR)."""
    return [
        BandGroupSpec("VH", Modality.SAR, (1, 2, 5), "vh"),
        BandGroupSpec("VV", Modality.SAR, (3, 4, 6), "vv"),
        BandGroupSpec("PolSAR", Modality.SAR, (7, 8), "pol"),
        BandGroupSpec("RGB", Modality.MS, (1, 2, 3), "red green blue"),
        BandGroupSpec("VRE", Modality.MS, (4, 5, 6, 8), "vegetation red edge"),
        BandGroupSpec("NIR", Modality.MS, (7,), "near infrared"),
        BandGroupSpec("SWIR", Modality.MS, (9, 10), "short wave infrared"),
    ]


def validate_partition(specs) -> None:
    """Each modality's channels must be covered exactly once by the specs."""
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate band group names in {names}")
    for spec in specs:
        spec.check()
    for modality in Modality:
        seen = {}
        for spec in specs:
            if spec.modality is not modality:
                continue
            for c in spec.channels:
                if c in seen:
                    raise ValueError(f"{modality.value} channel {c} in both {seen[c]} and {spec.name}")
                seen[c] = spec.name
        missing = sorted(set(range(1, modality.channel_count + 1)) - set(seen))
        if missing:
            raise ValueError(f"{modality.value} channels {missing} not assigned to any band group")


def split_arrays(sar, ms, specs) -> list:
    """Slice channel-last arrays (``[..., 8]`` and ``[..., 10]``) into band groups.

    Works on numpy arrays and torch tensors alike.
    """
    out = []
    for spec in specs:
        src = sar if spec.modality is Modality.SAR else ms
        limit = src.shape[-1]
        if spec.channels[0] < 1 or spec.channels[-1] > limit:
            raise ValueError(f"band group {spec.name}: channels {spec.channels} outside 1..{limit}")
        out.append(src[..., spec.indices])
    return out


def split_bands(sample: Sample, specs=None) -> GroupedSample:
    specs = default_band_groups() if specs is None else specs
    for spec in specs:
        spec.check()
    groups = split_arrays(sample.sar, sample.ms, specs)
    return GroupedSample(tuple(np.array(g) for g in groups), sample.label)


def format_band_table(specs) -> str:
    """Tab-separated table: name, modality, comma-joined channels, prompt name."""
    lines = ["# name\tmodality\tchannels\tprompt_name"]
    for s in specs:
        lines.append(f"{s.name}\t{s.modality.value}\t{','.join(map(str, s.channels))}\t{s.prompt_name}")
    return "\n".join(lines) + "\n"


def parse_band_table(text: str) -> list:
    specs = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ValueError(f"band table line {n}: expected 4 tab-separated fields, got {len(fields)}")
        name, modality, channels, prompt_name = (f.strip() for f in fields)
        try:
            chans = tuple(int(c) for c in channels.split(","))
            spec = BandGroupSpec(name, Modality(modality), chans, prompt_name)
        except ValueError as exc:
            raise ValueError(f"band table line {n}: {exc}") from exc
        specs.append(spec)
    validate_partition(specs)
    return specs


def band_table_hash(specs) -> str:
    return hashlib.sha256(format_band_table(specs).encode()).hexdigest()
