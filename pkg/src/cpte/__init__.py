"""CPTE estimation and preference-based policy learning."""
