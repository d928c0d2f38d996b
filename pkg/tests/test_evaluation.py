import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehrqa.corpus import CaseKey, Dataset, RelevanceLabel
from ehrqa.evaluation import (
    EvaluationReport,
    RemoteMetric,
    case_lexical_scores,
    evaluate_submission,
    factuality,
    overall,
    relevance_reference,
    validate_and_truncate,
)
from ehrqa.genclient import HttpConfig
from ehrqa.metrics import bleu, rouge_l, sari
from ehrqa.text import metric_tokens

from oracles import naive_bleu, naive_rouge_l, reference_sari

E, S, N = RelevanceLabel.ESSENTIAL, RelevanceLabel.SUPPLEMENTARY, RelevanceLabel.NOT_RELEVANT


def words(n, tag="w"):
    return " ".join(f"{tag}{i}" for i in range(n))


def test_validate_single_line():
    p = validate_and_truncate("Stable. |1|\n")
    assert p.violations == () and p.render() == "Stable. |1|\n" and p.cited == {1}


def test_validate_missing_bars_is_violation():
    p = validate_and_truncate("Stable. |1|\nNo citation here\nAlso fine. |2,3|")
    assert len(p.violations) == 1 and "line 2" in p.violations[0]
    assert p.cited == {1, 2, 3} and p.word_count() == 3


@pytest.mark.parametrize("raw", ["x |1,|", "x |a|", "x |0|", "x |1| trailing", "x ||"])
def test_validate_malformed_groups(raw):
    assert len(validate_and_truncate(raw).violations) == 1


def test_truncation_40_40_40():
    text = f"{words(40, 'a')} |1|\n{words(40, 'b')} |2|\n{words(40, 'c')} |3|\n"
    p = validate_and_truncate(text)
    assert [len(l.text.split()) for l in p.lines] == [40, 35]
    assert p.lines[1].text == words(35, "b")
    assert p.cited == {1, 2} and p.truncated


def test_exactly_at_limit_not_truncated():
    p = validate_and_truncate(f"{words(75)} |1|\n{words(3)} |2|")
    assert p.word_count() == 75 and p.cited == {1}


answers = st.lists(
    st.tuples(st.integers(0, 60), st.lists(st.integers(1, 9), min_size=1, max_size=3), st.booleans()),
    max_size=6,
).map(lambda ls: "\n".join(f"{words(n)} |{','.join(map(str, ids))}|" if ok else words(n) for n, ids, ok in ls))


@given(answers)
def test_validate_idempotent_and_bounded(text):
    p = validate_and_truncate(text)
    assert p.word_count() <= 75
    again = validate_and_truncate(p.render())
    assert again.lines == p.lines and again.violations == ()


def test_factuality_worked_example():
    key = CaseKey("c", {1: E, 2: E, 3: S, 4: N})
    rep = factuality({"c": validate_and_truncate("x |1|")}, [key])
    assert (rep.strict.micro_p, rep.strict.micro_r) == (1.0, 0.5)
    assert rep.strict.micro_f1 == pytest.approx(2 / 3)
    assert rep.lenient.micro_r == pytest.approx(1 / 3) and rep.lenient.micro_f1 == pytest.approx(0.5)
    assert rep.score == rep.strict.micro_f1


def test_factuality_micro_vs_macro():
    keys = [CaseKey("a", {1: E, 2: N}), CaseKey("b", {1: E, 2: E, 3: E, 4: E})]
    rep = factuality({"a": validate_and_truncate("x |1|"), "b": validate_and_truncate("x |2|")}, keys)
    # a: tp1 fp0 fn0; b: tp1 fp0 fn3 -> pooled R = 2/5
    assert rep.strict.micro_r == pytest.approx(0.4)
    assert rep.strict.macro_r == pytest.approx((1 + 0.25) / 2)


def test_factuality_unanswered_case_counts_fn():
    rep = factuality({}, [CaseKey("a", {1: E})])
    assert rep.strict.micro_f1 == 0.0


def test_rouge_worked_example():
    assert rouge_l("a b c d".split(), "a c d e".split()) == 0.75


def test_bleu_identity_and_disjoint():
    toks = "the stent was placed in the right coronary artery".split()
    assert bleu(toks, [toks]) == pytest.approx(1.0)
    assert bleu(["x", "y"], [toks]) == 0.0


vocab = st.sampled_from("a b c d e f g h . ,".split())
seqs = st.lists(vocab, min_size=1, max_size=25)


@given(seqs, st.lists(seqs, min_size=1, max_size=3))
def test_bleu_matches_oracle(hyp, refs):
    assert abs(bleu(hyp, refs) - naive_bleu(hyp, refs)) <= 1e-9


@given(seqs, seqs)
def test_rouge_matches_oracle(hyp, ref):
    assert abs(rouge_l(hyp, ref) - naive_rouge_l(hyp, ref)) <= 1e-9


@given(seqs, seqs, st.lists(seqs, min_size=1, max_size=3))
def test_sari_matches_oracle(src, hyp, refs):
    v = sari(src, hyp, refs)
    assert 0.0 <= v <= 1.0
    assert abs(v - reference_sari(src, hyp, refs)) <= 1e-6


def test_metric_tokens_strip_citations():
    assert metric_tokens("He IMPROVED, slowly. |1,2|") == ["he", "improved", ",", "slowly", "."]


def gold_answer(dataset, key):
    case = dataset.case(key.case_id)
    return "".join(f"{case.sentence(i).text} |{i}|\n" for i in sorted(key.essential))


def test_gold_exact_submission(mini):
    subs = [(k.case_id, gold_answer(mini, k)) for k in mini.keys]
    rep = evaluate_submission(subs, mini)
    assert rep.factuality.score == 1.0 and rep.violations == 0


def test_relevance_identity_beats_unrelated(mini):
    case = mini.case("1")
    key = CaseKey("1", {2: E})
    same = case_lexical_scores(validate_and_truncate(relevance_reference(case, key) + " |1|"), case, key)
    assert same["bleu"] == pytest.approx(1.0) and same["rouge_l_f"] == pytest.approx(1.0)
    other = case_lexical_scores(validate_and_truncate("zebra quokka |1|"), case, key)
    assert all(other[m] < same[m] for m in other)


def test_empty_answers_score_zero(mini):
    rep = evaluate_submission([(k.case_id, "") for k in mini.keys], mini)
    assert rep.relevance.aggregate == 0.0 and rep.factuality.score == 0.0
    assert rep.overall.overall == 0.0


@pytest.mark.parametrize("r,f,expected", [(0.312, 0.464, 0.388), (0.285, 0.558, 0.4215)])
def test_overall_average(r, f, expected):
    assert overall(r, f).overall == pytest.approx(expected, abs=1e-12)


def test_report_json_shape(mini):
    rep = evaluate_submission([(k.case_id, gold_answer(mini, k)) for k in mini.keys], mini)
    data = json.loads(rep.dumps())
    assert set(data) == {"overall", "relevance", "factuality", "violations"}
    assert set(data["relevance"]) == {"bleu", "rouge_l_f", "sari", "aggregate"}
    assert data["factuality"]["score"] == data["factuality"]["strict"]["micro_f1"]
    assert "Strict Micro-F1" in rep.table()


def test_case_order_invariant(mini):
    subs = [(k.case_id, gold_answer(mini, k).splitlines()[0] + "\n") for k in mini.keys]
    base = evaluate_submission(subs, mini).dumps()
    rng = random.Random(0)
    for _ in range(5):
        shuffled = subs[:]
        rng.shuffle(shuffled)
        ds = Dataset(rng.sample(mini.cases, len(mini.cases)), rng.sample(mini.keys, len(mini.keys)))
        assert evaluate_submission(shuffled, ds).dumps() == base


def test_rejects_unknown_and_duplicate(mini):
    with pytest.raises(ValueError, match="unknown"):
        evaluate_submission([("nope", "x |1|")], mini)
    with pytest.raises(ValueError, match="duplicate"):
        evaluate_submission([("1", "x |1|"), ("1", "y |2|")], mini)
    with pytest.raises(ValueError, match="gold labels"):
        evaluate_submission([], Dataset(mini.cases))


def test_remote_metric_plugs_into_aggregate(json_server, mini):
    def handler(path, body):
        return 200, {"scores": [0.5] * len(body["pairs"])}

    url, calls = json_server(handler)
    subs = [(k.case_id, gold_answer(mini, k)) for k in mini.keys]
    scorer = RemoteMetric("bertscore", HttpConfig(url, retries=0))
    rep = evaluate_submission(subs[:3], mini, {"bertscore": scorer})
    assert calls[0]["body"]["metric"] == "bertscore" and len(calls[0]["body"]["pairs"]) == 3
    # the unanswered fourth case scores 0 on the plugged metric
    assert rep.relevance.plugged["bertscore"] == pytest.approx(0.375)
    r = rep.relevance
    assert r.aggregate == pytest.approx((r.bleu + r.rouge_l_f + r.sari + 0.375) / 4)


def test_remote_metric_malformed_reply(json_server):
    url, _ = json_server(lambda path, body: (200, {"scores": [1.0]}))
    with pytest.raises(ValueError, match="malformed"):
        RemoteMetric("medcon", HttpConfig(url, retries=0))([("a", "b"), ("c", "d")])


def test_report_is_plain_dataclass():
    assert EvaluationReport.__dataclass_fields__.keys() == {"relevance", "factuality", "violations"}
