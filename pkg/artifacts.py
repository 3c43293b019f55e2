import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any
from typing import Dict
from typing import List
from logger import logger
from common import fmt_float


STOPPING_LINE_COLUMNS = ["replica", "fragment_id", "mass", "freeze_time", "depth", "weight"]
SELF_SIMILAR_COLUMNS = ["replica", "fragment_id", "mass", "freeze_time", "self_similar_time"]
OVERSHOOT_COLUMNS = ["replica", "x", "passage_value", "overshoot", "exp_neg_overshoot"]
SLLN_COLUMNS = ["replica", "eta", "f_id", "pairing", "mass", "limit_pairing", "ratio", "fragment_count"]


@dataclass
class Artifact:
    """A table of rows plus a summary document and the verdict of its check."""

    columns: List[str]
    rows: List[List[Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    passed: bool = True


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def render_csv(artifact: Artifact) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(artifact.columns)
    for row in artifact.rows:
        writer.writerow([_cell(v) for v in row])
    return out.getvalue()


def render_json(artifact: Artifact, config: Dict[str, Any]) -> str:
    doc = {
        "config": config,
        "summary": artifact.summary,
        "passed": artifact.passed,
        "columns": artifact.columns,
        "rows": artifact.rows,
    }
    return json.dumps(_json_value(doc), indent=2, sort_keys=True) + "\n"


def write_artifact(artifact: Artifact, path: str, fmt: str, config: Dict[str, Any]) -> None:
    text = render_json(artifact, config) if fmt == "json" else render_csv(artifact)
    if fmt == "csv" and artifact.summary:
        logger.info(f"summary: {json.dumps(_json_value(artifact.summary), sort_keys=True)}")
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w") as f:
        f.write(text)
    logger.info(f"wrote {len(artifact.rows)} rows to {path}")
