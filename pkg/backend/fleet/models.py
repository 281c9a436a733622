"""
Persisted recurrence signatures, so interest / no-interest learning spans
runs of the ``sentinel`` command (``--remember``).
"""
from django.db import models
from django.utils.translation import gettext_lazy as _


class EventSignature(models.Model):
    """
    One learned fleet-event signature.

    Fields
    ------
    signature_id : str      – stable hash of participants + magnitude band
    participants : JSON     – sorted list of series ids
    magnitude_band : int    – floor(log2(magnitude))
    occurrences : int       – sightings so far (never decreases)
    last_seen : int         – detection bin of the latest sighting
    operator_objection : bool
    no_interest : bool      – sticky until the memory is reset
    """
    signature_id = models.CharField(_('signature id'), max_length=32, unique=True)
    participants = models.JSONField(_('participants'), default=list)
    magnitude_band = models.IntegerField(_('magnitude band'))
    occurrences = models.PositiveIntegerField(_('occurrences'), default=0)
    last_seen = models.IntegerField(_('last seen bin'), null=True, blank=True)
    operator_objection = models.BooleanField(_('operator objection'), default=False)
    no_interest = models.BooleanField(_('no interest'), default=False)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        verbose_name = _('event signature')
        verbose_name_plural = _('event signatures')
        ordering = ['created_at', 'id']

    def __str__(self):
        label = 'no_interest' if self.no_interest else 'learning'
        return f"{self.signature_id} ×{self.occurrences} ({label})"
