"""Timecode parsing and rendering.

Times are integer milliseconds internally; HH:MM:SS is a render/parse
convention only. MM:SS inputs are accepted but never emitted.
"""
from __future__ import annotations

import re

from orion.errors import OrionError

MS_PER_SECOND = 1000
MS_PER_MINUTE = 60 * MS_PER_SECOND
MS_PER_HOUR = 60 * MS_PER_MINUTE

# HH:MM:SS or HH:MM:SS.mmm (hours 1-4 digits), or MM:SS / MM:SS.mmm
_HMS = re.compile(r"^(\d{1,4}):(\d{2}):(\d{2})(?:\.(\d{3}))?$")
_MS = re.compile(r"^(\d{2}):(\d{2})(?:\.(\d{3}))?$")


class MalformedTimecode(OrionError):
    pass


def parse_timecode(s: str) -> int:
    """Parse ``HH:MM:SS[.mmm]`` or ``MM:SS[.mmm]`` into total milliseconds."""
    m = _HMS.match(s)
    if m:
        hours, minutes, seconds, frac = m.groups()
    else:
        m = _MS.match(s)
        if not m:
            raise MalformedTimecode(f"not a timecode: {s!r}")
        minutes, seconds, frac = m.groups()
        hours = "0"
    if int(minutes) >= 60 or int(seconds) >= 60:
        raise MalformedTimecode(f"minutes/seconds must be < 60: {s!r}")
    return (
        int(hours) * MS_PER_HOUR
        + int(minutes) * MS_PER_MINUTE
        + int(seconds) * MS_PER_SECOND
        + (int(frac) if frac else 0)
    )


def format_timecode(ms: int) -> str:
    """Render milliseconds as zero-padded ``HH:MM:SS``, with ``.mmm`` only when nonzero."""
    if ms < 0:
        raise MalformedTimecode(f"negative milliseconds: {ms}")
    hours, rest = divmod(ms, MS_PER_HOUR)
    minutes, rest = divmod(rest, MS_PER_MINUTE)
    seconds, frac = divmod(rest, MS_PER_SECOND)
    out = f"{hours:02d}:{minutes:02d}:{seconds:02d}"
    if frac:
        out += f".{frac:03d}"
    return out
