"""RFC3339 helpers. All instants are timezone-aware UTC at 1 s resolution."""

from datetime import datetime, timezone

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def parse_ts(text):
    """Parse an RFC3339 timestamp into an aware UTC datetime, dropping sub-seconds.

    Raises ``ValueError`` for unparseable text or naive timestamps.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError("timestamp has no UTC offset")
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_ts(dt):
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def to_epoch(dt):
    return int((dt - EPOCH).total_seconds())


def from_epoch(seconds):
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)
