"""Bell-experiment string statistics toolkit."""
