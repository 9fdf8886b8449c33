from typing import List

from pydantic import ValidationError

from healthy_translate.errors import NonFiniteLossError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    """Bad command line: unknown command, bad override, unknown or missing config key."""


def format_error_loc(loc: tuple | None) -> str:
    """The dotted config key of a validation error, as it is spelled in the config file."""
    if not loc:
        return ""
    formatted = []
    for item in loc:
        if item is None or item == "":
            continue
        if isinstance(item, str):
            formatted.append(item if not formatted else "." + item)
        elif isinstance(item, int):
            formatted.append(f"[{item}]")
        else:
            formatted.append(str(item))
    return "".join(formatted)


def validation_messages(exc: ValidationError) -> List[str]:
    messages = []
    for error in exc.errors():
        message = error.get("msg", "Unknown error")
        if error.get("type") == "extra_forbidden":
            message = "unknown config key"
        elif error.get("type") == "missing":
            message = "missing required config key"
        loc = format_error_loc(error.get("loc"))
        messages.append(f"{loc}: {message}" if loc else message)
    return messages


def describe_failure(exc: BaseException) -> str:
    if isinstance(exc, NonFiniteLossError) and exc.snapshot_path is not None:
        return f"{exc} (state saved to {exc.snapshot_path})"
    message = str(exc)
    return message or type(exc).__name__
