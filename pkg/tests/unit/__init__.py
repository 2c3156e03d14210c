"""Unit tests for splatmae."""
