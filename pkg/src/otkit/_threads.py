"""Worker count for internal FFTs (``OTKIT_THREADS`` or ``--threads``)."""
import os

_value = None


def get() -> int:
    if _value is not None:
        return _value
    try:
        return max(1, int(os.environ.get("OTKIT_THREADS", "1")))
    except ValueError:
        return 1


def set(n) -> None:  # noqa: A001
    global _value
    _value = None if n is None else max(1, int(n))
