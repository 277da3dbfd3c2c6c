import os

# Headless plotting for experiment figure outputs.
os.environ.setdefault("MPLBACKEND", "Agg")
