"""Test suite for starm."""
