"""Walk through the three annotation styles and their pointer sequences.

Run: python demos/01_linearization.py
"""

from pointerparse import (
    Kind,
    Malformed,
    ParseNode,
    Query,
    SemanticParse,
    Style,
    TargetSequence,
    delinearize,
    linearize,
    validate,
)

# A simple query: one intent, two flat slots. Slot values are never copied
# into the target as words; each covered token becomes a pointer @ptr_i.
query = Query.from_text("queue up bad moon rising by creedence")
parse = SemanticParse(
    ParseNode(
        "QueueSongIntent",
        Kind.INTENT,
        (),
        (
            ParseNode("SongName", Kind.SLOT, (2, 3, 4)),
            ParseNode("ArtistName", Kind.SLOT, (6,)),
        ),
    ),
    Style.FLAT,
)
target = linearize(parse, query)
print("flat query:   ", query.raw)
print("flat target:  ", target.to_string())

# Hierarchical parse: intents nest inside slots. Labels carry IN:/SL:
# prefixes and use square brackets with label-specific closes.
query2 = Query.from_text("how long to the bakery near the river")
parse2 = SemanticParse(
    ParseNode(
        "IN:GET_ETA",
        Kind.INTENT,
        (0, 1, 2),
        (
            ParseNode(
                "SL:DESTINATION",
                Kind.SLOT,
                (),
                (
                    ParseNode(
                        "IN:GET_SHOP_LOCATION",
                        Kind.INTENT,
                        (3, 4, 5),
                        (ParseNode("SL:LANDMARK", Kind.SLOT, (6, 7)),),
                    ),
                ),
            ),
        ),
    ),
    Style.TREE,
)
target2 = linearize(parse2, query2)
print("\ntree query:   ", query2.raw)
print("tree target:  ", target2.to_string())

# Round trip: delinearize inverts linearize exactly.
assert delinearize(target2, query2, Style.TREE) == parse2
print("round trip:    recovered the identical tree")

# Span sets allow gaps and overlaps: here one label covers tokens 4 and 6
# while another covers the token in between.
query3 = Query.from_text("patient reports mild nasal upper swelling overnight")
parse3 = SemanticParse(
    ParseNode(
        "",
        Kind.GROUP,
        (),
        (
            ParseNode("Finding", Kind.SLOT, (3, 5)),
            ParseNode("Region", Kind.SLOT, (4,)),
        ),
    ),
    Style.SPANSET,
)
print("\nspanset query:", query3.raw)
print("spanset target:", linearize(parse3, query3).to_string())

# The validator reads arbitrary model output without raising.
broken = TargetSequence.from_string("QueueSongIntent SongName( @ptr_2 )ArtistName")
verdict = validate(broken, len(query), Style.FLAT)
print("\nbroken target:", broken.to_string())
print("well-formed:  ", verdict.ok, "| violations:", [v.value for v in verdict.violations])
try:
    delinearize(broken, query, Style.FLAT)
except Malformed as exc:
    print("delinearize:   raised Malformed:", exc)
