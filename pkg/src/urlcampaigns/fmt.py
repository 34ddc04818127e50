"""Fixed-point rendering of exact integer ratios.

Scores and percentages travel through the pipeline as (numerator,
denominator) integer pairs and are only rounded at presentation time,
half-up, at the precision the caller asks for. Thresholds such as
"mean positive score > 0" therefore never suffer float drift.
"""

from __future__ import annotations


def round_half_up_ratio(num: int, den: int, dp: int) -> int:
    """Value of num/den scaled by 10**dp and rounded half-up (num >= 0)."""
    if den <= 0:
        raise ValueError("denominator must be positive")
    if num < 0:
        raise ValueError("negative ratios are not used here")
    scaled = num * 10**dp
    return (2 * scaled + den) // (2 * den)


def render_ratio(num: int, den: int, dp: int) -> str:
    """Render num/den as a fixed dp-decimal string, rounding half-up."""
    units = round_half_up_ratio(num, den, dp)
    if dp == 0:
        return str(units)
    whole, frac = divmod(units, 10**dp)
    return f"{whole}.{frac:0{dp}d}"


def render_pct(num: int, den: int, dp: int = 2) -> str:
    """Render num/den as a percentage at dp decimals, without the % sign."""
    return render_ratio(num * 100, den, dp)
