"""Domain-Class-Frequency maps and CSR pruning.

Two synthetic domains share an ontology. Building each domain's DCF and
normalizing against the cross-domain average suppresses ubiquitous
classes (the shared root normalizes to 1.0) and surfaces distinctive
ones (about 2.0). Pruning then keeps only CSR entries near a domain's
top classes.
"""

from ontodecode import (
    CSR,
    DomainSpec,
    Ontology,
    build_dcf,
    build_lexicon,
    normalize_dcf,
    prune_csr,
)

onto = Ontology.from_dict({"classes": [
    {"id": "Root", "label": "clinical concept"},
    {"id": "Heart", "label": "heart", "parents": ["Root"]},
    {"id": "HeartAttack", "label": "heart attack", "parents": ["Heart"]},
    {"id": "Echo", "label": "echocardiogram", "parents": ["Heart"]},
    {"id": "Brain", "label": "brain", "parents": ["Root"]},
    {"id": "Headache", "label": "headache", "parents": ["Brain"]},
    {"id": "Migraine", "label": "migraine", "parents": ["Headache"]},
    {"id": "Drug", "label": "drug", "parents": ["Root"]},
    {"id": "Aspirin", "label": "aspirin", "parents": ["Drug"]},
]})
lexicon = build_lexicon(onto)

cardio = DomainSpec("cardio", [
    "heart attack ruled out after echocardiogram",
    "echocardiogram normal, aspirin continued",
    "prior heart attack, on aspirin",
])
neuro = DomainSpec("neuro", [
    "migraine with aura, headache persists",
    "headache resolved, migraine history",
    "chronic migraine, aspirin tried",
])

raw = [build_dcf(onto, lexicon, spec, min_occ=1) for spec in (cardio, neuro)]
for dcf in raw:
    print(f"raw {dcf.domain:<7}:", {c: round(v, 2) for c, v in sorted(dcf.freq.items())})

normalized = normalize_dcf(raw)
print()
for dcf in normalized:
    ranked = sorted(dcf.freq.items(), key=lambda kv: (-kv[1], kv[0]))
    print(f"normalized {dcf.domain:<7}:",
          [(c, round(v, 2)) for c, v in ranked])

csr = CSR("note-9", {
    "HeartAttack": "prior heart attack noted",
    "Aspirin": "aspirin 100mg continued",
    "Migraine": "migraine history",
})
cardio_dcf = normalized[0]
pruned = prune_csr(csr, cardio_dcf, onto, k=2, alpha=1)
print("\nCSR keys before pruning:", list(csr.entries))
print("cardio keep (k=2, alpha=1):", list(pruned.entries))
