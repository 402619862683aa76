"""Test suite for the sea-fog forecasting toolkit."""
