"""Tests for mldenoise."""
