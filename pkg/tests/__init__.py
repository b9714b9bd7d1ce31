"""Test suite for the allocation planner."""
