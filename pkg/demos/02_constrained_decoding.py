"""How the window scores steer beam search.

A scripted two-continuation language model offers "banana" (more likely)
and "aspirin" (less likely, but a descendant of the Drug base class).
With the hierarchy boost off, likelihood wins; with it on, the window
rescore flips the ranking. The same machinery scores restriction-property
mentions (P) and textual similarity to the source note (S).
"""

import math

from ontodecode import (
    DecodeConfig,
    LmContract,
    LmStep,
    Ontology,
    build_lexicon,
    decode,
    hierarchy_score,
    property_score,
    similarity_score,
)

onto = Ontology.from_dict({"classes": [
    {"id": "Root", "label": "clinical concept"},
    {"id": "Drug", "label": "drug", "parents": ["Root"]},
    {"id": "Aspirin", "label": "aspirin", "parents": ["Drug"]},
    {"id": "Fever", "label": "fever", "parents": ["Root"],
     "restrictions": [{"kind": "and", "pairs": [
         {"property": "Interprets", "value": "BodyTemp"},
         {"property": "HasInterpretation", "value": "AboveRef"},
     ]}]},
    {"id": "BodyTemp", "label": "body temperature", "parents": ["Root"]},
    {"id": "AboveRef", "label": "above reference range", "parents": ["Root"]},
]})
lexicon = build_lexicon(onto)


class ForkLm(LmContract):
    """Prompt token, then one of two single-word continuations, then EOS."""

    def __init__(self):
        self.words = ["q", "aspirin", "banana"]
        self.eos = 3
        self.vocab_size = 4

    def tokenize(self, text):
        return [self.words.index(w) for w in text.split()]

    def detokenize(self, ids):
        return " ".join(self.words[i] for i in ids if i != self.eos)

    def next_logits(self, prefix):
        if prefix and prefix[-1] == 0:
            return LmStep({1: math.log(0.45), 2: math.log(0.55)})
        return LmStep({self.eos: 0.0})


lm = ForkLm()
for h_bf in (0.0, 3.0):
    cfg = DecodeConfig(beam_size=2, num_groups=1, diversity_penalty=0.0,
                       window=1, h_bf=h_bf, p_bf=0.0, s_bf=0.0, max_tokens=4)
    result = decode(lm, "q", onto, lexicon, "Drug", "unrelated note", cfg)
    print(f"h_bf={h_bf:>3}: winner = {result.text!r}  (score {result.score:.4f})")

print("\nthe three window scores, standalone:")
print("  H(base=Drug, window tags {Aspirin, Fever}) =",
      hierarchy_score(onto, "Drug", {"Aspirin", "Fever"}, h_bf=3.0))
print("  P(base=Fever, window mentions body temperature) =",
      property_score(onto, "Fever", {"BodyTemp"},
                     "body temperature above reference range", p_bf=10.0))
print("  S(window vs note) =",
      round(similarity_score("took aspirin for",
                             "patient took aspirin for chest pain", s_bf=10.0), 4))
