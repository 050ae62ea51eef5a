# retypelab/schemas/rules.py - Class association rules and their rendered cards
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class AssociationRule(BaseModel):
    """IF every antecedent feature occurs THEN the function returns consequent."""
    model_config = ConfigDict(frozen=True)

    antecedents: Tuple[str, ...]
    consequent: str
    support: float = Field(ge=0.0, le=1.0)
    confidence: float = Field(ge=0.0, le=1.0)
    covered_count: int = Field(ge=0)
    match_count: int = Field(ge=0)

    @field_validator("antecedents")
    @classmethod
    def validate_antecedents(cls, v):
        if not v:
            raise ValueError("a rule needs at least one antecedent")
        if len(set(v)) != len(v):
            raise ValueError("antecedents must be distinct")
        return tuple(sorted(v))

    def sort_key(self):
        return (-self.support, len(self.antecedents), self.antecedents, self.consequent)


class RuleCard(BaseModel):
    number: int
    rule: AssociationRule
    provenance: str = ""

    @property
    def ret_antecedents(self) -> List[str]:
        return [a for a in self.rule.antecedents if a.startswith("RET:")]

    @property
    def post_antecedents(self) -> List[str]:
        return [a for a in self.rule.antecedents if not a.startswith("RET:")]


class RuleCheck(BaseModel):
    holds: bool
    matched_rows: int
    counterexample_row: Optional[int] = None
    counterexample_label: Optional[str] = None
