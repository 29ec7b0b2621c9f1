"""siglog CLI command modules."""
