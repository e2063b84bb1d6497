class ConfigError(ValueError):
    """Invalid session configuration. The message starts with the offending
    field path."""
