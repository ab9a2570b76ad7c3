"""Import BIO slot-filling triples and bracketed TSV annotations.

Run: python demos/05_importers.py
"""

import tempfile
from pathlib import Path

from pointerparse import import_bio, import_top, linearize
from pointerparse.data import corpus_stats, export_bio

workdir = Path(tempfile.mkdtemp())

# BIO triples: one sentence per line, tags aligned token-for-token, one
# intent label per line.
(workdir / "x.tokens").write_text(
    "will there be frost in cedar rapids tomorrow\n"
    "book the corner table for four\n"
)
(workdir / "x.tags").write_text(
    "O O O B-condition O B-place I-place B-date\n"
    "O B-table_name I-table_name I-table_name O B-size\n"
)
(workdir / "x.labels").write_text("check_weather\nreserve_table\n")

examples = import_bio(workdir / "x.tokens", workdir / "x.tags", workdir / "x.labels")
for ex in examples:
    print(ex.query.raw)
    print("  ->", linearize(ex.parse, ex.query).to_string())

# Export reproduces the original tag lines exactly.
tokens, tags, labels = export_bio(examples)
assert "\n".join(tags) + "\n" == (workdir / "x.tags").read_text()
print("BIO round trip: byte-identical")

# Bracketed TSV: terminals sit inline and align left-to-right with the
# utterance tokens; plain close brackets become label-specific on export.
(workdir / "x.tsv").write_text(
    "meet me at the planetarium\t"
    "[IN:CREATE_MEETING meet me at [SL:LOCATION the planetarium ] ]\n"
)
(tree_example,) = import_top(workdir / "x.tsv")
print("\n" + tree_example.query.raw)
print("  ->", linearize(tree_example.parse, tree_example.query).to_string())
print("stats:", corpus_stats(examples + [tree_example]))
