# retypelab/schemas/synth.py - Synthetic corpus configuration
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator

from retypelab.schemas.asm import FunctionListing, TypeLabel

DEFAULT_EPILOGUE_WEIGHTS = (0.2, 0.4, 0.4)
DEFAULT_COUNT_PER_TYPE = 100


def _default_counts() -> Dict[TypeLabel, int]:
    return {label: DEFAULT_COUNT_PER_TYPE for label in TypeLabel}


class SynthConfig(BaseModel):
    """Knobs of the synthetic assembly generator."""
    model_config = ConfigDict(frozen=True)

    counts: Dict[TypeLabel, int] = Field(default_factory=_default_counts)
    callers_per_function: int = Field(default=2, ge=0)
    calls_per_caller: int = Field(default=4, ge=1)
    distractor_probability: float = Field(default=0.3, ge=0.0, le=1.0)
    max_distractors: int = Field(default=3, ge=0)
    confusable_mode: bool = False
    epilogue_variant_weights: Tuple[float, float, float] = DEFAULT_EPILOGUE_WEIGHTS
    return_anchors: bool = False
    label_rotation: int = Field(default=0, ge=0, le=9)
    function_prefix: str = "_func"
    rng_seed: int = 0

    @field_validator("counts")
    @classmethod
    def validate_counts(cls, v):
        for label, count in v.items():
            if count < 0:
                raise ValueError(f"count for {label.value} must be >= 0, got {count}")
        return {label: v.get(label, 0) for label in TypeLabel}

    @field_validator("epilogue_variant_weights")
    @classmethod
    def validate_weights(cls, v):
        if any(w < 0 for w in v):
            raise ValueError("epilogue weights must be non-negative")
        if abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"epilogue weights must sum to 1, got {sum(v)}")
        return v

    @field_validator("rng_seed")
    @classmethod
    def validate_seed(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")
        return v

    @field_validator("function_prefix")
    @classmethod
    def validate_prefix(cls, v):
        if not v or not (v[0].isalpha() or v[0] in "_$.@?") or any(c.isspace() or c in ",;:[]+" for c in v):
            raise ValueError(f"function_prefix {v!r} is not a valid symbol prefix")
        return v

    @property
    def total_functions(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def uniform(cls, count: int, **kwargs) -> "SynthConfig":
        return cls(counts={label: count for label in TypeLabel}, **kwargs)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]], base: Optional["SynthConfig"] = None) -> "SynthConfig":
        """
        Build a config from key=value strings.

        ``count`` sets every type, ``count.<type>`` one type; other keys mirror the
        field names. ``seed`` is accepted as an alias of ``rng_seed``.
        """
        data = base.model_dump() if base is not None else {}
        counts = dict(data.get("counts") or _default_counts())
        for key, raw in values.items():
            if raw is None:
                continue
            value = raw.strip()
            if key == "count":
                counts = {label: int(value) for label in TypeLabel}
            elif key.startswith("count."):
                counts[TypeLabel(key[len("count."):])] = int(value)
            elif key == "epilogue_variant_weights":
                data[key] = tuple(float(w) for w in value.split(","))
            elif key == "seed":
                data["rng_seed"] = int(value)
            elif key in cls.model_fields:
                data[key] = value
            else:
                raise ValueError(f"Unknown synth config key {key!r}")
        data["counts"] = counts
        return cls(**data)

    @classmethod
    def from_file(cls, path: Path) -> "SynthConfig":
        return cls.from_mapping(dotenv_values(path))


class SyntheticCorpus(BaseModel):
    """Labeled callee functions followed by their unlabeled caller functions."""
    model_config = ConfigDict(frozen=True)

    config: SynthConfig
    functions: Tuple[FunctionListing, ...]

    @property
    def labeled(self) -> List[FunctionListing]:
        return [fn for fn in self.functions if fn.is_labeled]

    @property
    def callers(self) -> List[FunctionListing]:
        return [fn for fn in self.functions if not fn.is_labeled]
