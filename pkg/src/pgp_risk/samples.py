import json
import logging
from pathlib import Path
from typing import Dict

from .series_ingest import PriceSeries, load_csv

SAMPLES_DIR = Path(__file__).resolve().parents[2] / "data"
SAMPLE_PRICES_PATH = SAMPLES_DIR / "sample_prices.csv"

logger = logging.getLogger(__name__)

_SAMPLE_REGISTRY: Dict[str, PriceSeries] = {}


def sample_path(name: str = "sample_prices") -> Path:
    return SAMPLES_DIR / f"{name}.csv"


def load_sample(name: str = "sample_prices") -> PriceSeries:
    """Bundled price series, parsed once per process."""
    if name not in _SAMPLE_REGISTRY:
        path = sample_path(name)
        _SAMPLE_REGISTRY[name] = load_csv(path)
        logger.debug(json.dumps({"event": "SampleLoaded", "name": name, "rows": len(_SAMPLE_REGISTRY[name])}))
    return _SAMPLE_REGISTRY[name]
