# retypelab/core/integrity.py - Fingerprints and checksums for persisted artifacts
import hashlib
import hmac
import json
from typing import Any, Iterable

from retypelab.schemas.model import VocabularyFingerprint


def vocabulary_fingerprint(names: Iterable[str]) -> VocabularyFingerprint:
    """64-bit fingerprint of an ordered feature vocabulary."""
    names = list(names)
    digest = hashlib.sha256()
    for name in names:
        digest.update(name.encode("utf-8"))
        digest.update(b"\x00")
    return VocabularyFingerprint(digest=digest.hexdigest()[:16], size=len(names))


def canonical_json(payload: Any) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def generate_checksum(payload: Any) -> str:
    """SHA256 checksum of a JSON-serializable payload."""
    return f"sha256={hashlib.sha256(canonical_json(payload)).hexdigest()}"


def verify_checksum(payload: Any, checksum: str) -> bool:
    if not checksum or not checksum.startswith("sha256="):
        return False
    return hmac.compare_digest(generate_checksum(payload), checksum)
