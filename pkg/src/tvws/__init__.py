"""Database-assisted spectrum access games, learning automata and experiment harness."""
