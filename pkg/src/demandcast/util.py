"""Small shared helpers for stable file output."""

from __future__ import annotations

import hashlib
import json


def fmt_float(x: float) -> str:
    """17 significant digits: enough for bit-stable float round trips."""
    return f"{float(x):.17g}"


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()
