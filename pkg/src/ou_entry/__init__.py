"""Optimal entry into an irreversible storage investment under an OU spot price."""
