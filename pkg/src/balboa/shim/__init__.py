"""Run-time interception of an unmodified application's network calls."""
