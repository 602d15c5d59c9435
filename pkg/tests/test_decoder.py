import math
import random

import pytest

from ontodecode.decoder import (
    BeamState,
    DecodeConfig,
    decode,
    hierarchy_score,
    property_score,
    similarity_score,
    window_rescore,
)
from ontodecode.annotator import Lexicon, build_lexicon
from ontodecode.lm import LmContract, LmStep
from ontodecode.metrics import rouge2
from ontodecode.ontology import UnknownClassError

from conftest import ConstantLm, make_ontology, random_dag, random_ngram_lm


def _config(**overrides) -> DecodeConfig:
    base = dict(beam_size=2, num_groups=1, diversity_penalty=0.0, window=10,
                h_bf=0.0, p_bf=0.0, s_bf=0.0, max_tokens=8)
    base.update(overrides)
    return DecodeConfig(**base)


class TestConfig:
    def test_defaults(self):
        cfg = DecodeConfig()
        assert (cfg.beam_size, cfg.num_groups, cfg.window) == (10, 2, 10)
        assert (cfg.h_bf, cfg.p_bf, cfg.s_bf) == (3.0, 10.0, 10.0)
        cfg.validate()

    @pytest.mark.parametrize("overrides", [
        {"beam_size": 0},
        {"beam_size": 10, "num_groups": 3},
        {"num_groups": 0},
        {"window": 0},
        {"max_tokens": 0},
        {"diversity_penalty": -0.1},
        {"h_bf": -1.0},
    ])
    def test_rejects_bad_values(self, overrides):
        with pytest.raises(ValueError):
            _config(**overrides).validate()


class TestScores:
    def test_hierarchy_empty_window(self, medical_ontology):
        assert hierarchy_score(medical_ontology, "Drug", set(), 3.0) == 0.0

    def test_hierarchy_half(self, medical_ontology):
        got = hierarchy_score(medical_ontology, "Drug", {"Aspirin", "Fever"}, 3.0)
        assert got == pytest.approx(1.5, abs=1e-9)

    def test_hierarchy_max(self, medical_ontology):
        got = hierarchy_score(medical_ontology, "Drug", {"Aspirin"}, 3.0)
        assert got == pytest.approx(3.0, abs=1e-9)

    def test_hierarchy_unknown_window_class(self, medical_ontology):
        with pytest.raises(UnknownClassError):
            hierarchy_score(medical_ontology, "Drug", {"ghost"}, 3.0)

    def test_property_class_hit_plus_text_match(self, medical_ontology):
        got = property_score(
            medical_ontology, "Fever", {"BodyTemp"},
            "body temperature above reference range", 10.0,
        )
        assert got == pytest.approx(6.0, abs=1e-9)

    def test_property_no_restrictions(self, medical_ontology):
        assert property_score(medical_ontology, "Drug", {"Aspirin"}, "aspirin", 10.0) == 0.0

    def test_property_empty_window(self, medical_ontology):
        assert property_score(medical_ontology, "Fever", set(), "unrelated words here", 10.0) == 0.0

    def test_property_bounds(self, medical_ontology):
        rng = random.Random(3)
        ids = list(medical_ontology.classes)
        for _ in range(50):
            classes = set(rng.sample(ids, rng.randint(0, len(ids))))
            score = property_score(medical_ontology, "Fever", classes, "body temperature", 10.0)
            assert 0.0 <= score <= 10.0 + 1.0

    def test_similarity_is_scaled_rouge(self):
        note = "patient took aspirin for chest pain"
        window = "took aspirin for"
        assert similarity_score(window, note, 10.0) == pytest.approx(
            10.0 * rouge2(window, note), abs=1e-12
        )

    def test_similarity_disjoint_and_empty(self):
        assert similarity_score("alpha beta", "gamma delta", 10.0) == 0.0
        assert similarity_score("", "gamma delta", 10.0) == 0.0

    def test_hierarchy_monotone_under_descendant_superset(self):
        rng = random.Random(17)
        for _ in range(50):
            onto = random_dag(rng, max_nodes=20)
            ids = list(onto.classes)
            base = rng.choice(ids)
            descendants = [c for c in ids if base in onto.ancestors(c)]
            classes = set(rng.sample(ids, rng.randint(0, len(ids) // 2)))
            if not descendants:
                continue
            extra = set(rng.sample(descendants, rng.randint(1, len(descendants))))
            h_before = hierarchy_score(onto, base, classes, 3.0) if classes else 0.0
            h_after = hierarchy_score(onto, base, classes | extra, 3.0)
            assert h_after >= h_before - 1e-12


class TestWindowRescore:
    def _beam(self, lm, text: str) -> BeamState:
        tokens = lm.tokenize(text)
        return BeamState(tokens=tokens, cum_logprob=-1.0, group=0, window_start=0)

    def test_singleton_group_is_noop(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["aspirin"], "aspirin")
        beam = self._beam(lm, "aspirin")
        cfg = _config()
        [breakdown] = window_rescore(lm, [beam], medical_ontology, medical_lexicon,
                                     None, "", cfg)
        assert breakdown.adjusted == 0.0
        assert beam.cum_logprob == -1.0
        assert beam.window_start == len(beam.tokens)

    def test_two_beam_softmax(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["aspirin", "banana"], "aspirin")
        beams = [self._beam(lm, "aspirin"), self._beam(lm, "banana")]
        cfg = _config(h_bf=2.0)
        results = window_rescore(lm, beams, medical_ontology, medical_lexicon,
                                 "Drug", "", cfg)
        raw = [2.0, 0.0]
        expected = [r - math.log(math.exp(2.0) + 1.0) for r in raw]
        assert results[0].adjusted == pytest.approx(expected[0], abs=1e-9)
        assert results[1].adjusted == pytest.approx(expected[1], abs=1e-9)
        assert results[0].adjusted == pytest.approx(-0.126928, abs=1e-6)
        assert results[1].adjusted == pytest.approx(-2.126928, abs=1e-6)
        assert beams[0].cum_logprob == pytest.approx(-1.0 + expected[0])

    def test_equal_raws_split_evenly(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["banana", "orange"], "banana")
        beams = [self._beam(lm, "banana"), self._beam(lm, "orange")]
        results = window_rescore(lm, beams, medical_ontology, medical_lexicon,
                                 "Drug", "", _config(h_bf=3.0))
        assert results[0].adjusted == pytest.approx(math.log(0.5), abs=1e-12)
        assert results[1].adjusted == pytest.approx(math.log(0.5), abs=1e-12)

    def test_group_probabilities_sum_to_one(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["aspirin", "fever", "banana"], "aspirin")
        beams = [self._beam(lm, t) for t in ("aspirin", "fever", "banana")]
        results = window_rescore(lm, beams, medical_ontology, medical_lexicon,
                                 "Drug", "aspirin fever please", _config(h_bf=3, p_bf=10, s_bf=10))
        assert sum(math.exp(r.adjusted) for r in results) == pytest.approx(1.0, abs=1e-9)
        assert all(r.adjusted <= 0.0 for r in results)

    def test_already_rescored_beams_skipped(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["aspirin"], "aspirin")
        fresh = self._beam(lm, "aspirin")
        spent = self._beam(lm, "aspirin")
        spent.window_start = len(spent.tokens)
        results = window_rescore(lm, [fresh, spent], medical_ontology, medical_lexicon,
                                 None, "", _config())
        assert results[0] is not None
        assert results[1] is None
        assert spent.cum_logprob == -1.0


class _ForkLm(LmContract):
    """Prompt token, then one of two continuations, then EOS."""

    def __init__(self, p_first: float = 0.45, p_second: float = 0.55):
        self.words = ["q", "aspirin", "banana"]
        self.eos = 3
        self.vocab_size = 4
        self.p = {1: math.log(p_first), 2: math.log(p_second)}

    def tokenize(self, text):
        return [self.words.index(w) for w in text.split()]

    def detokenize(self, ids):
        return " ".join(self.words[i] for i in ids if i != self.eos)

    def next_logits(self, prefix):
        if prefix and prefix[-1] == 0:
            return LmStep(dict(self.p))
        return LmStep({self.eos: 0.0})


class _TrapLm(LmContract):
    """First token "a" looks best but only finishes badly; "b" finishes well."""

    def __init__(self):
        self.words = ["q", "a", "b"]
        self.eos = 3
        self.vocab_size = 4

    def tokenize(self, text):
        return [self.words.index(w) for w in text.split()]

    def detokenize(self, ids):
        return " ".join(self.words[i] for i in ids if i != self.eos)

    def next_logits(self, prefix):
        if prefix and prefix[-1] == 0:
            return LmStep({1: math.log(0.5), 2: math.log(0.3), self.eos: math.log(0.2)})
        if prefix and prefix[-1] == 1:
            return LmStep({1: math.log(0.99), self.eos: math.log(0.01)})
        return LmStep({self.eos: 0.0})


class TestDecode:
    def test_greedy_degenerate(self):
        rng = random.Random(23)
        for _ in range(20):
            lm = random_ngram_lm(rng)
            cfg = _config(beam_size=1, max_tokens=6, window=7)
            got = decode(lm, "", make_ontology([{"id": "X", "label": "xx"}]),
                         Lexicon(entries={}), None, "", cfg)
            seq: list[int] = []
            for _ in range(6):
                logits = lm.next_logits(seq).logits
                token = max(sorted(logits), key=lambda t: logits[t])
                seq.append(token)
                if token == lm.eos:
                    break
            assert got.text == lm.detokenize([t for t in seq if t != lm.eos])

    def test_matches_vanilla_beam_search(self):
        rng = random.Random(29)
        onto = make_ontology([{"id": "X", "label": "xx"}])
        lex = Lexicon(entries={})
        for _ in range(50):
            lm = random_ngram_lm(rng)
            beam_size = rng.choice([2, 3, 6])
            max_tokens = rng.randint(2, 6)
            cfg = _config(beam_size=beam_size, max_tokens=max_tokens,
                          window=max_tokens + 1)
            got = decode(lm, "", onto, lex, None, "", cfg)
            want = _vanilla_beam_text(lm, [], beam_size, max_tokens)
            assert got.text == want

    def test_steering_flip(self, medical_ontology, medical_lexicon):
        lm = _ForkLm()
        outputs = {}
        for h_bf in (0.0, 3.0):
            cfg = _config(window=1, max_tokens=4, h_bf=h_bf)
            outputs[h_bf] = decode(lm, "q", medical_ontology, medical_lexicon,
                                   "Drug", "unrelated note text", cfg).text
        assert outputs[0.0] == "banana"
        assert outputs[3.0] == "aspirin"

    def test_truncation_flag(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["q"], "q q q q q q q q q q")
        cfg = _config(beam_size=1, max_tokens=3)
        result = decode(lm, "q", medical_ontology, medical_lexicon, None, "", cfg)
        assert result.truncated
        assert result.text == "q q q"

    def test_unknown_base(self, medical_ontology, medical_lexicon):
        lm = ConstantLm(["q"], "q")
        with pytest.raises(UnknownClassError):
            decode(lm, "q", medical_ontology, medical_lexicon, "ghost", "", _config())

    def test_diversity_penalty_separates_groups(self, medical_ontology, medical_lexicon):
        lm = _TrapLm()
        base_cfg = dict(beam_size=2, num_groups=2, window=5, max_tokens=4,
                        h_bf=0.0, p_bf=0.0, s_bf=0.0)
        # Without a penalty the second group duplicates the first and both
        # ride the trap path "a", which never reaches EOS.
        plain = decode(lm, "q", medical_ontology, medical_lexicon, None, "",
                       DecodeConfig(diversity_penalty=0.0, **base_cfg))
        assert plain.truncated and plain.text == "a a a a"
        diverse = decode(lm, "q", medical_ontology, medical_lexicon, None, "",
                         DecodeConfig(diversity_penalty=1.0, **base_cfg))
        assert not diverse.truncated and diverse.text == "b"

    def test_deterministic(self, medical_ontology, medical_lexicon):
        rng = random.Random(31)
        lm = random_ngram_lm(rng)
        cfg = _config(beam_size=4, num_groups=2, diversity_penalty=0.5,
                      window=2, max_tokens=6, h_bf=3, p_bf=10, s_bf=10)
        first = decode(lm, "", medical_ontology, medical_lexicon, "Drug", "w0 w1 w0", cfg)
        second = decode(lm, "", medical_ontology, medical_lexicon, "Drug", "w0 w1 w0", cfg)
        assert first == second


def _vanilla_beam_text(lm, prompt_ids: list[int], beam_size: int, max_tokens: int) -> str:
    """Plain beam search sharing only the documented tie-break contract."""
    beams: list[tuple[list[int], float, bool]] = [(list(prompt_ids), 0.0, False)]
    for _ in range(max_tokens):
        if all(done for _, _, done in beams):
            break
        candidates = []
        for idx, (seq, score, done) in enumerate(beams):
            if done:
                candidates.append((score, idx, -1, seq, True))
                continue
            logits = lm.next_logits(seq).logits
            for token in sorted(logits):
                candidates.append((score + logits[token], idx, token,
                                   seq + [token], token == lm.eos))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        beams = [(seq, score, done) for score, _, _, seq, done in candidates[:beam_size]]
    finished = [(i, b) for i, b in enumerate(beams) if b[2]]
    pool = finished if finished else list(enumerate(beams))
    _, best = max(pool, key=lambda item: (item[1][1], -item[0]))
    return lm.detokenize([t for t in best[0][len(prompt_ids):] if t != lm.eos])
