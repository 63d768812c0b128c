"""CLI scripts for TidyBalance."""
