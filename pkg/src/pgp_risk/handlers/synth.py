import json
import logging

from ..errors import ConfigError
from ..series_ingest import write_csv
from ..synth import KINDS, generate
from .common import guarded, response
from .config import load_run_config

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = 1000


@guarded("synth")
def handler(event):
    cfg = load_run_config(event)
    kind = event.get("kind") or KINDS[0]
    length = event.get("length")
    length = DEFAULT_LENGTH if length is None else length

    errors = []
    if kind not in KINDS:
        errors.append(f"kind must be one of {', '.join(KINDS)}")
    if length < 2:
        errors.append("length must be >= 2")
    if errors:
        raise ConfigError("invalid synth request: " + "; ".join(errors), details=errors)

    series = generate(kind, length, cfg.seed)
    path = write_csv(series, cfg.out / f"{kind}-n{length}-seed{cfg.seed}.csv")
    logger.info(json.dumps({"event": "SeriesGenerated", "kind": kind, "length": length, "seed": cfg.seed}))
    return response(0, {"kind": kind, "length": length, "seed": cfg.seed, "path": str(path)})
