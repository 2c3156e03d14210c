"""Test suite for splatmae."""
