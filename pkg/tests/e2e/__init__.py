"""End-to-end tests for the splatmae command line."""
