"""
Command line and phase diagram
==============================

Every computation is also reachable from the `rle` command, which writes
CSV with the resolved configuration in its header.  Here the CLI is driven
in-process to sweep the (alpha, delta) plane.
"""

# %%
import csv
import io

from rle import cli

# %%
# Scenario labels over a small grid for the sparse prior.

cfg = cli.resolve_config("phase-diagram", None, {
    "prior": "bernoulli:0.1", "alpha": "0.25,0.5", "delta": "log:0.0005:0.05:9"})
text, code = cli.run("phase-diagram", cfg)
print(text)

# %%
# The header line alone is enough to reproduce the file.

header = text.splitlines()[1]
print(header[:120], "...")
rows = list(csv.DictReader(io.StringIO("\n".join(text.splitlines()[2:]))))
print(sum(r["scenario"] == "first-order" for r in rows), "first-order points")

# %%
# Equivalent shell usage:
#
#   rle thresholds --prior bernoulli:0.1 --alpha 0.25,0.5 --out thr.csv
#   rle amp --alpha 1 --delta 0.05 --L 2000 --trials 20 --out amp.csv
#   rle verify --L 12 --trials 500     # exit code 4 on a failed check
#   rle amp --config amp.csv           # byte-identical rerun
