"""Diverse (grouped) beam search steered by ontology-aware window scores.

Beams are expanded group by group; within one step, later groups pay a
Hamming diversity penalty for tokens earlier groups already picked at
that position. Every ``window`` freshly generated tokens, each group's
beams are detokenized, annotated, and scored:

  hierarchy  H = h_bf * (fraction of tagged classes descending from base)
  property   P = p_bf * |C ∩ P(base)| / (|C| * |P(base)|)
                 + ROUGE-2(window text, verbalized restrictions of base)
  similarity S = s_bf * ROUGE-2(window text, source note)

and the log-softmax of H+P+S across the group's beams is added to each
beam's cumulative log-probability, steering subsequent pruning. All three
scores define 0/0 as 0. How the window adjustment combines with token
likelihood is a policy choice: adding the log-softmax keeps both terms in
the log domain, and the policy lives entirely in ``window_rescore`` so
alternatives are a one-line change.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .annotator import Lexicon, annotate
from .lm import LmContract, TokenId
from .metrics import rouge2
from .ontology import ClassId, Ontology, UnknownClassError


@dataclass
class DecodeConfig:
    beam_size: int = 10
    num_groups: int = 2
    diversity_penalty: float = 0.5
    window: int = 10
    h_bf: float = 3.0
    p_bf: float = 10.0
    s_bf: float = 10.0
    max_tokens: int = 100
    # Similarity is computed over the current window by default; set this
    # to score the beam's full generated text against the note instead.
    similarity_full_beam: bool = False

    def validate(self) -> None:
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.num_groups < 1:
            raise ValueError(f"num_groups must be >= 1, got {self.num_groups}")
        if self.beam_size % self.num_groups != 0:
            raise ValueError(
                f"beam_size ({self.beam_size}) must be divisible by "
                f"num_groups ({self.num_groups})"
            )
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        for name in ("diversity_penalty", "h_bf", "p_bf", "s_bf"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass
class BeamState:
    tokens: list[TokenId]
    cum_logprob: float
    group: int
    window_start: int
    finished: bool = False
    gen_start: int = 0  # index where generated tokens begin (end of prompt)


@dataclass
class ScoreBreakdown:
    hierarchy: float
    property: float
    similarity: float
    adjusted: float  # log-softmax over the group's raw sums; always <= 0


@dataclass
class DecodeResult:
    text: str
    truncated: bool
    score: float
    tokens: list[TokenId] = field(default_factory=list)


def hierarchy_score(onto: Ontology, base: ClassId, window_classes: set[ClassId],
                    h_bf: float) -> float:
    """Boosted fraction of window classes that descend from ``base``."""
    if base not in onto:
        raise UnknownClassError(f"unknown class id: {base!r}")
    if not window_classes:
        return 0.0
    hits = sum(1 for c in window_classes if base in onto.ancestors(c))
    return h_bf * hits / len(window_classes)


def property_score(onto: Ontology, base: ClassId, window_classes: set[ClassId],
                   window_text: str, p_bf: float) -> float:
    """Restriction-property overlap: class hits plus textual ROUGE-2."""
    related = onto.restriction_classes(base)
    for c in window_classes:
        if c not in onto:
            raise UnknownClassError(f"unknown class id: {c!r}")
    if window_classes and related:
        hits = sum(1 for c in window_classes if c in related)
        class_term = p_bf * hits / (len(window_classes) * len(related))
    else:
        class_term = 0.0
    return class_term + rouge2(window_text, onto.verbalize_restrictions(base))


def similarity_score(window_text: str, note: str, s_bf: float) -> float:
    """Boosted ROUGE-2 between the window text and the source note."""
    return s_bf * rouge2(window_text, note)


def _log_softmax(raw: list[float]) -> list[float]:
    m = max(raw)
    lse = m + math.log(sum(math.exp(r - m) for r in raw))
    return [r - lse for r in raw]


def window_rescore(lm: LmContract, beams: list[BeamState], onto: Ontology,
                   lex: Lexicon, base: ClassId | None, note: str,
                   cfg: DecodeConfig) -> list[ScoreBreakdown | None]:
    """Score one group's current windows and fold the result into the beams.

    Beams whose window is empty (already rescored, nothing generated
    since) are skipped and get ``None`` in the returned list. For the
    others the raw sum H+P+S is computed, log-softmaxed across the
    participants, added to ``cum_logprob``, and the window is reset.
    """
    participants = [b for b in beams if b.window_start < len(b.tokens)]
    if not participants:
        return [None] * len(beams)

    raws: list[float] = []
    partial: list[tuple[float, float, float]] = []
    for beam in participants:
        window_ids = [t for t in beam.tokens[beam.window_start:] if t != lm.eos]
        window_text = lm.detokenize(window_ids)
        classes = {a.class_id for a in annotate(lex, window_text)}
        if base is not None:
            h = hierarchy_score(onto, base, classes, cfg.h_bf)
            p = property_score(onto, base, classes, window_text, cfg.p_bf)
        else:
            h = p = 0.0
        if cfg.similarity_full_beam:
            sim_ids = [t for t in beam.tokens[beam.gen_start:] if t != lm.eos]
            sim_text = lm.detokenize(sim_ids)
        else:
            sim_text = window_text
        s = similarity_score(sim_text, note, cfg.s_bf)
        partial.append((h, p, s))
        raws.append(h + p + s)

    adjusted = _log_softmax(raws)
    by_beam: dict[int, ScoreBreakdown] = {}
    for beam, (h, p, s), bs in zip(participants, partial, adjusted):
        beam.cum_logprob += bs
        beam.window_start = len(beam.tokens)
        by_beam[id(beam)] = ScoreBreakdown(hierarchy=h, property=p, similarity=s, adjusted=bs)
    return [by_beam.get(id(b)) for b in beams]


def decode(lm: LmContract, prompt: str, onto: Ontology, lex: Lexicon,
           base: ClassId | None, note: str, cfg: DecodeConfig) -> DecodeResult:
    """Run grouped beam search with periodic ontology-guided rescoring.

    Groups expand sequentially at each position; candidate scores of later
    groups are reduced by ``diversity_penalty`` times the count of that
    token among earlier groups' picks at this position, and the penalized
    score is what accumulates. Ties break on lowest beam index, then
    lowest token id (lexicographically smaller sequence). Returns the best
    finished beam, or the best unfinished one flagged truncated if nothing
    finished within ``max_tokens``.
    """
    cfg.validate()
    if base is not None and base not in onto:
        raise UnknownClassError(f"unknown class id: {base!r}")

    prompt_ids = lm.tokenize(prompt)
    per_group = cfg.beam_size // cfg.num_groups
    groups: list[list[BeamState]] = [
        [BeamState(tokens=list(prompt_ids), cum_logprob=0.0, group=g,
                   window_start=len(prompt_ids), gen_start=len(prompt_ids))]
        for g in range(cfg.num_groups)
    ]

    for _ in range(cfg.max_tokens):
        if all(b.finished for beams in groups for b in beams):
            break
        chosen_counts: Counter[TokenId] = Counter()
        for g, beams in enumerate(groups):
            if all(b.finished for b in beams):
                continue
            candidates: list[tuple[float, int, int, BeamState]] = []
            for idx, beam in enumerate(beams):
                if beam.finished:
                    # Finished beams hold their slot and compete by score.
                    candidates.append((beam.cum_logprob, idx, -1, beam))
                    continue
                step = lm.next_logits(beam.tokens)
                for token in sorted(step.logits):
                    score = (beam.cum_logprob + step.logits[token]
                             - cfg.diversity_penalty * chosen_counts[token])
                    candidates.append((score, idx, token, beam))
            candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

            new_beams: list[BeamState] = []
            group_chosen: list[TokenId] = []
            for score, _, token, parent in candidates[:per_group]:
                if token == -1:
                    new_beams.append(parent)
                    continue
                new_beams.append(BeamState(
                    tokens=parent.tokens + [token],
                    cum_logprob=score,
                    group=g,
                    window_start=parent.window_start,
                    finished=(token == lm.eos),
                    gen_start=parent.gen_start,
                ))
                group_chosen.append(token)
            groups[g] = new_beams
            chosen_counts.update(group_chosen)

            active = [b for b in new_beams if not b.finished]
            window_full = active and (len(active[0].tokens) - active[0].window_start
                                      >= cfg.window)
            if window_full or not active:
                window_rescore(lm, new_beams, onto, lex, base, note, cfg)

    # Flush windows left partial by max_tokens truncation.
    for beams in groups:
        window_rescore(lm, beams, onto, lex, base, note, cfg)

    ranked: list[tuple[float, int, BeamState]] = []
    for g, beams in enumerate(groups):
        for slot, beam in enumerate(beams):
            ranked.append((beam.cum_logprob, g * per_group + slot, beam))
    finished = [r for r in ranked if r[2].finished]
    pool = finished if finished else ranked
    best = max(pool, key=lambda r: (r[0], -r[1]))[2]

    generated = [t for t in best.tokens[len(prompt_ids):] if t != lm.eos]
    return DecodeResult(
        text=lm.detokenize(generated),
        truncated=not best.finished,
        score=best.cum_logprob,
        tokens=generated,
    )
