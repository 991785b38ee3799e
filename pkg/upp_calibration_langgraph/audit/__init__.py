from .trail import LOG_FORMAT, AuditTrail, configure_logging
