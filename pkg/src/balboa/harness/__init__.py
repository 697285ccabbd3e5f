"""Deterministic desk-scale test harness: synthetic sessions, chunk schedules, paired runs, benches."""
