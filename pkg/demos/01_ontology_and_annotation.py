"""Loading an ontology and tagging concepts in free text.

The ontology is one JSON document: classes with labels, synonyms, parent
edges, and And/Or restriction properties. Loading validates references
and acyclicity, prunes excluded branches, and the result answers
hierarchy and restriction queries. The lexicon derived from labels and
synonyms drives a deterministic leftmost-longest concept tagger.
"""

import json
import tempfile
from pathlib import Path

from ontodecode import annotate, build_lexicon, load_ontology

DOCUMENT = {
    "classes": [
        {"id": "Root", "label": "clinical concept"},
        {"id": "Finding", "label": "clinical finding", "parents": ["Root"]},
        {"id": "Drug", "label": "drug", "parents": ["Root"]},
        {"id": "Aspirin", "label": "aspirin", "parents": ["Drug"],
         "synonyms": ["acetylsalicylic acid", "ASA"]},
        {"id": "Fever", "label": "fever", "parents": ["Finding"],
         "synonyms": ["pyrexia"],
         "restrictions": [{"kind": "and", "pairs": [
             {"property": "Interprets", "value": "BodyTemp"},
             {"property": "HasInterpretation", "value": "AboveRef"},
         ]}]},
        {"id": "BodyTemp", "label": "body temperature", "parents": ["Root"]},
        {"id": "AboveRef", "label": "above reference range", "parents": ["Root"]},
        # A non-clinical branch that gets pruned away on load.
        {"id": "Qualifier", "label": "qualifier value", "parents": ["Root"]},
        {"id": "Severity", "label": "severity", "parents": ["Qualifier"]},
    ],
    "excluded_roots": ["Qualifier"],
}

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "ontology.json"
    path.write_text(json.dumps(DOCUMENT, indent=2))
    onto = load_ontology(path)

print(f"loaded {len(onto)} classes (the excluded branch is gone)")
print("ancestors(Aspirin)        :", sorted(onto.ancestors("Aspirin")))
print("descendants_within(Root,1):", sorted(onto.descendants_within("Root", 1)))
print("restriction_classes(Fever):", sorted(onto.restriction_classes("Fever")))
print("verbalized(Fever)         :", onto.verbalize_restrictions("Fever"))

lexicon = build_lexicon(onto)
print(f"\nlexicon has {len(lexicon)} surface forms (labels, synonyms, plurals)")

note = "Pyrexia overnight; gave ASA 100mg. Body   temperature back in range."
print("\nnote:", note)
for ann in annotate(lexicon, note):
    print(f"  [{ann.start:>3}:{ann.end:<3}] {ann.surface!r:<22} -> {ann.class_id}")
