import functools
import json
import logging

from ..errors import PgpRiskError

logger = logging.getLogger(__name__)


def response(exit_code: int, body: dict) -> dict:
    return {
        "exitCode": exit_code,
        "body": json.dumps(body, indent=2, allow_nan=False),
    }


def guarded(command: str):
    """Turn a command handler's exceptions into exit-coded responses."""

    def decorate(func):
        @functools.wraps(func)
        def wrapper(event):
            logger.info(json.dumps({"event": "CommandReceived", "command": command}))
            try:
                result = func(event)
            except PgpRiskError as exc:
                logger.warning(
                    json.dumps(
                        {
                            "event": "CommandFailed",
                            "command": command,
                            "error": type(exc).__name__,
                            "exitCode": exc.exit_code,
                        }
                    )
                )
                return response(exc.exit_code, exc.to_body())
            except Exception:
                logger.exception("Unexpected failure in command %s", command)
                return response(1, {"error": "InternalError", "message": f"{command} failed unexpectedly", "details": []})
            logger.info(json.dumps({"event": "CommandCompleted", "command": command, "exitCode": result["exitCode"]}))
            return result

        return wrapper

    return decorate
