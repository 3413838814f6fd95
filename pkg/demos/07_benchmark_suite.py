"""
A small benchmark
=================

Four scenes, both algorithms, the summary table and its JSON twin.
The full default suite is eight 10 s scenes (``pucktrack suite``).
"""

from pucktrack.evaluation import format_table, rows_to_json, run_suite

rows = run_suite([("static", 11), ("static", 12), ("moving", 21), ("moving", 22)], duration_s=3.0)
print(format_table(rows))
print(rows_to_json(rows[:1]))
