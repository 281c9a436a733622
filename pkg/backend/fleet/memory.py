"""
Recurrence memory for interest / no-interest classification.

A signature is the participant set of an event plus its magnitude band
(floor of log2 of the magnitude).  An event matching a known signature at
participant Jaccard ≥ 0.7 in the same or an adjacent band is a repeat
sighting (so magnitudes 31 and 33 still match); once a
signature has been seen ``no_interest_threshold`` times without an
operator objection, further sightings are labelled no_interest.
Labelling never suppresses an event.

Usage
-----
    from fleet.memory import PatternMemory, classify_event

    memory = PatternMemory(no_interest_threshold=3)
    event, memory = classify_event(event, memory)
"""
from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass

from .events import EventKind, EventOfInterest, jaccard

DEFAULT_NO_INTEREST_THRESHOLD = 3
DEFAULT_SIGNATURE_JACCARD = 0.7


def magnitude_band(magnitude: int) -> int:
    return int(math.floor(math.log2(max(1, int(magnitude)))))


def signature_key(participants, band: int) -> str:
    digest = hashlib.sha1()
    digest.update("\x1f".join(sorted(participants)).encode())
    digest.update(f"|{band}".encode())
    return digest.hexdigest()[:16]


@dataclass
class Signature:
    signature_id: str
    participants: frozenset
    band: int
    occurrences: int = 0
    last_seen: int | None = None
    operator_objection: bool = False
    no_interest: bool = False


class PatternMemory:
    """Signatures seen so far.  Mutated by one writer at a time."""

    def __init__(self, no_interest_threshold: int = DEFAULT_NO_INTEREST_THRESHOLD,
                 match_jaccard: float = DEFAULT_SIGNATURE_JACCARD):
        self.no_interest_threshold = int(no_interest_threshold)
        self.match_jaccard = float(match_jaccard)
        self.signatures: dict[str, Signature] = {}
        self.lock = threading.Lock()

    def __len__(self):
        return len(self.signatures)

    def match(self, participants: frozenset, band: int) -> Signature | None:
        best, best_key = None, None
        for sig in self.signatures.values():
            distance = abs(sig.band - band)
            if distance > 1:
                continue
            score = jaccard(participants, sig.participants)
            key = (score, -distance)
            if score >= self.match_jaccard and (best_key is None or key > best_key):
                best, best_key = sig, key
        return best

    def add(self, signature: Signature) -> Signature:
        self.signatures[signature.signature_id] = signature
        return signature

    def record_objection(self, signature_id: str):
        """Operator says this pattern matters; it will not be learned as no-interest."""
        self.signatures[signature_id].operator_objection = True

    def reset(self):
        with self.lock:
            self.signatures.clear()


def classify_event(event: EventOfInterest, memory: PatternMemory):
    """
    Returns
    -------
    (EventOfInterest with kind set, the same PatternMemory updated)

    Recovery events are returned unchanged and leave memory untouched.
    """
    if event.kind == EventKind.RECOVERY:
        return event, memory

    band = magnitude_band(event.magnitude)
    with memory.lock:
        sig = memory.match(event.participants, band)
        if sig is None:
            sig = memory.add(Signature(
                signature_id=signature_key(event.participants, band),
                participants=frozenset(event.participants),
                band=band,
            ))
        prior = sig.occurrences
        learned = prior >= memory.no_interest_threshold and not sig.operator_objection
        if sig.no_interest or learned:
            sig.no_interest = True
            kind = EventKind.NO_INTEREST
        else:
            kind = EventKind.INTEREST
        sig.occurrences = prior + 1
        sig.last_seen = event.detection_bin

    classified = event.with_changes(
        kind=kind,
        explanation={
            **event.explanation,
            'classification': {
                'signature': sig.signature_id,
                'magnitude_band': band,
                'prior_occurrences': prior,
                'no_interest_threshold': memory.no_interest_threshold,
                'operator_objection': sig.operator_objection,
            },
        },
    )
    return classified, memory
