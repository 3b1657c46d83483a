"""Allocation of indivisible objects under lexicographic preferences.

Deterministic mechanisms live in :mod:`qmech.mechanisms`, the random
serial dictatorship and lottery comparisons in :mod:`qmech.randomized`,
and exhaustive property checks in :mod:`qmech.axioms`.
"""

from .core import (
    Comparison,
    DetAllocation,
    GeneralSetPref,
    InfeasibleError,
    LexOrder,
    LexProfile,
    Names,
    PickingSequence,
    Quota,
    RandAllocation,
    ValidationError,
    lex_compare,
    permute_objects,
    top_k,
    valid_quotas,
)
from .mechanisms import (
    BossyFixture,
    DictatorPolicy,
    Imposed,
    Interleaving,
    SequentialDictatorQuota,
    SerialDictatorQuota,
    build_identical_profile,
    run_interleaving,
    run_sequential,
    run_serial,
)
from .randomized import (
    EnumerationCapExceeded,
    envy_witnesses,
    equal_treatment_witnesses,
    ld_dominates,
    rsdq_exact,
    rsdq_sample,
    sd_dominates,
)
from .space import BudgetExceeded, OutcomeTable, ProfileSpace

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
