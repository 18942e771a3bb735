from ..oracle_suite import run_verification
from .common import guarded, response
from .config import load_run_config


@guarded("verify")
def handler(event):
    cfg = load_run_config(event)
    profile = "full" if event.get("full") else "quick"
    results = run_verification(profile, jobs=cfg.jobs)
    passed = all(result.passed for result in results)
    return response(
        0 if passed else 4,
        {
            "profile": profile,
            "passed": passed,
            "checks": [result.to_dict() for result in results],
        },
    )
