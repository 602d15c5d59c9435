"""Full pipeline in memory: extract, prune, verbalize.

The reference n-gram model stands in for a real LLM; its training lines
continue each extraction prompt into an answer so generations are
non-trivial. Every step is deterministic, so rerunning this script
reproduces the output byte for byte.
"""

from ontodecode import (
    DecodeConfig,
    DomainSpec,
    Ontology,
    annotate,
    build_dcf,
    build_lexicon,
    build_prompt,
    extract_csr,
    normalize_dcf,
    prune_csr,
    render_csr,
    train_ngram,
    verbalize,
)

onto = Ontology.from_dict({"classes": [
    {"id": "Root", "label": "clinical concept"},
    {"id": "Finding", "label": "clinical finding", "parents": ["Root"]},
    {"id": "Fever", "label": "fever", "parents": ["Finding"],
     "restrictions": [{"kind": "and", "pairs": [
         {"property": "Interprets", "value": "BodyTemp"},
         {"property": "HasInterpretation", "value": "AboveRef"},
     ]}]},
    {"id": "BodyTemp", "label": "body temperature", "parents": ["Root"]},
    {"id": "AboveRef", "label": "above reference range", "parents": ["Root"]},
    {"id": "Drug", "label": "drug", "parents": ["Root"]},
    {"id": "Aspirin", "label": "aspirin", "parents": ["Drug"]},
    {"id": "Headache", "label": "headache", "parents": ["Finding"]},
]})
lexicon = build_lexicon(onto)

# Note texts avoid the word "patient": it precedes ":" inside the prompt
# template, so completions echoing it would replay the template cheaply.
notes = [
    ("note-1", "fever spiked overnight and aspirin was given"),
    ("note-2", "headache resolved after aspirin"),
]

answers = {
    "Fever": "fever spiked overnight",
    "Aspirin": "aspirin was given today",
    "Headache": "headache resolved after aspirin",
}
instruction = "Summarize these clinical notes in a short text."
lm_lines = []
for _, text in notes:
    for ann in annotate(lexicon, text):
        lm_lines.append(build_prompt(onto, ann.class_id, text)
                        + " " + answers[ann.class_id])
lm_lines += [
    "fever : noted this morning",
    "aspirin : given this morning",
    "headache : resolved this morning",
    "==========",
    instruction + " the course was stable overnight",
]
lm = train_ngram(lm_lines, 2)

cfg = DecodeConfig(beam_size=4, num_groups=2, diversity_penalty=0.5,
                   window=5, max_tokens=12)

csrs = [extract_csr(lm, onto, lexicon, note, cfg) for note in notes]
print("extracted CSRs (a bigram backend cannot condition on the question,")
print("so values repeat; swap in a real model behind the same contract):")
for csr in csrs:
    print(f"  {csr.note_id}:")
    for class_id, value in csr.entries.items():
        print(f"    {class_id:<9} -> {value!r}")

# Domain analysis over a tiny two-domain corpus, then prune to "meds".
meds = DomainSpec("meds", ["aspirin given", "aspirin held", "drug chart reviewed"])
fevers = DomainSpec("fevers", ["fever spiking", "fever of unknown origin"])
meds_dcf = normalize_dcf([
    build_dcf(onto, lexicon, meds), build_dcf(onto, lexicon, fevers),
])[0]
pruned = [prune_csr(csr, meds_dcf, onto, k=2, alpha=1) for csr in csrs]
print("\npruned to the meds domain:")
for csr in pruned:
    print(f"  {csr.note_id}: {list(csr.entries)}")

summary = verbalize(lm, onto, lexicon, pruned, instruction, cfg)
print("\nrendered block for note-1:")
print("  " + (render_csr(pruned[0], onto) or "(empty)"))
print("\nfinal summary text:")
print("  " + summary)
