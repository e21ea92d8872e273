import logging

import pandas as pd

logger = logging.getLogger(__name__)


def to_csv_text(rows: list[dict], columns: list[str]) -> str:
    """CSV with a header row, fixed column order and a fixed float format."""
    frame = pd.DataFrame(rows, columns=columns)
    return frame.to_csv(index=False, float_format="%.10g", na_rep="nan", lineterminator="\n")


def write_csv(rows: list[dict], columns: list[str], out: str | None) -> str:
    """Write to `out` when given and return the text either way."""
    text = to_csv_text(rows, columns)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        logger.info(f"Wrote {len(rows)} row(s) to {out}")
    return text
