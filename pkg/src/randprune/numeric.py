"""Integer counting helpers for quantities defined as products of a
count and a decimal ratio.

Decimal ratios such as 0.83 are not exact in binary, so ``count * ratio``
can land a hair above or below the intended integer.  The guarded
versions recover the decimal intent before rounding.
"""

from __future__ import annotations

import math

_GUARD = 1e-9


def ceil_count(x: float) -> int:
    """Ceiling of ``x`` robust to float representation error."""
    return int(math.ceil(x - _GUARD))


def floor_count(x: float) -> int:
    """Floor (truncation toward zero for x >= 0) robust to float error."""
    return int(math.floor(x + _GUARD))
