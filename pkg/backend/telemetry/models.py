"""
Audit trail of ``sentinel`` command invocations.
"""
from django.db import models
from django.utils.translation import gettext_lazy as _


class PipelineRun(models.Model):
    """
    One invocation of a ``sentinel`` subcommand.

    Fields
    ------
    run_type : str         – run / simulate / profile / graph_export
    status : str           – running → completed | failed
    config_hash : str      – sha256 of the resolved config block
    input_digest : str     – content digest of the analysed fleet, when there is one
    seed : int | None
    summary : JSON         – the report's summary record, or the error on failure
    """
    RUN_TYPES = (
        ('run', _('Run')),
        ('simulate', _('Simulate')),
        ('profile', _('Profile')),
        ('graph_export', _('Graph export')),
    )
    STATUS_CHOICES = (
        ('running', _('Running')),
        ('completed', _('Completed')),
        ('failed', _('Failed')),
    )

    run_type = models.CharField(_('run type'), max_length=20, choices=RUN_TYPES)
    status = models.CharField(_('status'), max_length=20, choices=STATUS_CHOICES, default='running')
    config_hash = models.CharField(_('config hash'), max_length=64, blank=True)
    input_digest = models.CharField(_('input digest'), max_length=64, blank=True)
    seed = models.BigIntegerField(_('seed'), null=True, blank=True)
    summary = models.JSONField(_('summary'), default=dict, blank=True)
    started_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        verbose_name = _('pipeline run')
        verbose_name_plural = _('pipeline runs')
        ordering = ['-started_at', '-id']

    def __str__(self):
        return f"{self.run_type} #{self.pk} ({self.status})"
