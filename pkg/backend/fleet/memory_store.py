"""
Bridge between the in-memory ``PatternMemory`` and ``EventSignature`` rows.

Usage
-----
    from fleet.memory_store import load_memory, save_memory

    memory = load_memory(no_interest_threshold=3)
    ...classify events...
    save_memory(memory)
"""
import logging

from django.db import transaction

from .memory import PatternMemory, Signature
from .models import EventSignature

logger = logging.getLogger(__name__)


def load_memory(no_interest_threshold: int = 3, match_jaccard: float = 0.7) -> PatternMemory:
    memory = PatternMemory(no_interest_threshold, match_jaccard)
    for row in EventSignature.objects.all():
        memory.add(Signature(
            signature_id=row.signature_id,
            participants=frozenset(row.participants),
            band=row.magnitude_band,
            occurrences=row.occurrences,
            last_seen=row.last_seen,
            operator_objection=row.operator_objection,
            no_interest=row.no_interest,
        ))
    logger.info("Loaded %d event signature(s)", len(memory))
    return memory


@transaction.atomic
def save_memory(memory: PatternMemory) -> int:
    """Upsert every signature; stored occurrence counts never go down."""
    with memory.lock:
        signatures = list(memory.signatures.values())
    for sig in signatures:
        row, created = EventSignature.objects.select_for_update().get_or_create(
            signature_id=sig.signature_id,
            defaults={
                'participants': sorted(sig.participants),
                'magnitude_band': sig.band,
            },
        )
        row.occurrences = max(row.occurrences, sig.occurrences)
        row.last_seen = sig.last_seen
        row.operator_objection = row.operator_objection or sig.operator_objection
        row.no_interest = row.no_interest or sig.no_interest
        row.save()
    logger.info("Saved %d event signature(s)", len(signatures))
    return len(signatures)


def reset_memory() -> int:
    deleted, _ = EventSignature.objects.all().delete()
    return deleted
