"""Reference interpreter and random model generator used as a test oracle."""
