import json
import logging
from fractions import Fraction

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoproof.corpus import read_manifest
from isoproof.errors import AuthError, ConfigError, ResponseMalformed, TransportError
from isoproof.evaluation.classify import (BANNED_TOKEN, OK, REFUSED_OR_EMPTY, TOO_LONG, classify_message,
                                          classify_record, precheck)
from isoproof.evaluation.endpoint import (ChatEndpoint, EndpointConfig, ScriptedEndpoint, TokenBucket,
                                          dialogue_position, script_key)
from isoproof.evaluation.engine import EvalContext, TrialRecord, clean_generation, evaluate_lemma, run_trial
from isoproof.evaluation.metrics import (FIRST, FIXING, acc_at_k, format_count_pct, percentage,
                                         round_half_up)
from isoproof.evaluation.prompts import (Demonstration, PromptBundle, SamplingParams, assemble_prompt,
                                         instruction, prompt_texts, select_demonstrations)
from isoproof.evaluation.report import build_report, load_report
from isoproof.isolation import bench_dir, load_bench
from isoproof.prover import make_prover
from isoproof.prover.base import Status, VerifyResult
from conftest import FIXTURES, bench_prover_config

# ---------------------------------------------------------------------------
# sampling and prompts


def test_sampling_defaults():
    assert SamplingParams().temperature == 0.0
    assert SamplingParams(k=10).temperature == 0.5
    assert SamplingParams(k=10, temperature=0.2).temperature == 0.2
    assert SamplingParams().top_p == 0.95 and SamplingParams().max_generation_units == 2048
    for bad in (dict(k=0), dict(temperature=-1), dict(top_p=0), dict(max_generation_units=0)):
        with pytest.raises(ConfigError):
            SamplingParams(**bad)


def test_instruction_paragraphs_in_fixed_order():
    texts = prompt_texts()
    text = instruction(["fixing", "similar"])
    assert text == "\n\n".join([texts["base"], texts["similar"], texts["fixing"]])
    assert instruction() == texts["base"]


def demos(n=5, **kw):
    return [Demonstration(f"S.T.d{i}", f'lemma d{i}: "x{i}"', f"by (simp add: f{i})", **kw) for i in range(n)]


def test_prompt_layout():
    msgs = assemble_prompt(PromptBundle("sys", demos(), "", 'lemma t: "y"', "S.T.t"))
    assert len(msgs) == 12
    assert [m["role"] for m in msgs] == ["system"] + ["user", "assistant"] * 5 + ["user"]
    assert msgs[-1]["content"] == 'lemma t: "y"'


def test_prompt_with_blocks():
    ds = demos(blocks="<sim>\nlemma z: \"q\" by simp\n</sim>")
    msgs = assemble_prompt(PromptBundle("sys", ds, "<sim>\nfoo\n</sim>", 'lemma t: "y"', "S.T.t"))
    assert msgs[1]["content"].startswith("<sim>\n") and msgs[1]["content"].endswith('lemma d0: "x0"')
    assert msgs[-1]["content"] == '<sim>\nfoo\n</sim>\n\nlemma t: "y"'


def test_fixing_demonstration_has_four_messages():
    ds = demos(1, failed_proof="by simp", error='Undefined fact: "st_def"')
    msgs = assemble_prompt(PromptBundle("sys", ds, "", 'lemma t: "y"', "S.T.t"))
    assert [m["role"] for m in msgs[1:5]] == ["user", "assistant", "user", "assistant"]
    assert msgs[3]["content"] == '{Undefined fact: "st_def"}'
    assert msgs[4]["content"] == "by (simp add: f0)"


def test_second_round_messages():
    bundle = PromptBundle("sys", demos(), "", 'lemma t: "y"', "S.T.t")
    fix = assemble_prompt(bundle, second_round=("by simp", "Failed to finish proof"))
    assert fix[-2] == {"role": "assistant", "content": "by simp"}
    assert fix[-1] == {"role": "user", "content": "{Failed to finish proof}"}
    again = assemble_prompt(bundle, second_round=("by simp", None))
    assert again[-1]["content"] == prompt_texts()["try_again_request"]
    assert "{" not in again[-1]["content"]


def test_target_cannot_be_its_own_demo():
    with pytest.raises(ValueError):
        PromptBundle("sys", demos(), "", "lemma d0", "S.T.d0")


def test_select_demonstrations():
    pool = {"P1": [f"S.T.l{i:03d}" for i in range(144)], "D": [f"S.U.l{i}" for i in range(20)]}
    d1, rest = select_demonstrations(pool, seed=0)
    assert len(d1["P1"]) == 5 and len(rest["P1"]) == 139
    assert set(d1["P1"]).isdisjoint(rest["P1"])
    assert sorted(d1["P1"] + rest["P1"]) == pool["P1"]
    d2, _ = select_demonstrations(pool, seed=0)
    assert d1 == d2
    d3, _ = select_demonstrations(pool, seed=1)
    assert d3["P1"] != d1["P1"]


def test_select_demonstrations_small_pool_warns(caplog):
    with caplog.at_level(logging.WARNING):
        d, rest = select_demonstrations({"P3": ["a", "b", "c"]}, seed=0)
    assert sorted(d["P3"]) == ["a", "b", "c"] and rest["P3"] == []
    assert "P3" in caplog.text


# ---------------------------------------------------------------------------
# chat endpoint


class NoSleep(list):
    def __call__(self, s):
        self.append(s)


def ok_response(text="by simp", tokens=3):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}],
                                     "usage": {"completion_tokens": tokens}})


def make_chat(handler, monkeypatch, key="sk-test", **kw):
    if key is None:
        monkeypatch.delenv("ISOPROOF_API_KEY", raising=False)
    else:
        monkeypatch.setenv("ISOPROOF_API_KEY", key)
    sleeps = NoSleep()
    ep = ChatEndpoint(EndpointConfig(base_url="http://model.test/v1", model="m", **kw),
                      transport=httpx.MockTransport(handler), sleep=sleeps)
    return ep, sleeps


MSGS = [{"role": "user", "content": 'lemma t: "x"'}]


def test_chat_retries_then_succeeds(monkeypatch):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(429) if len(calls) <= 2 else ok_response()

    ep, sleeps = make_chat(handler, monkeypatch)
    out = ep.complete(MSGS, SamplingParams())
    assert out.text == "by simp" and out.completion_tokens == 3
    assert len(calls) == 3 and sleeps == [1.0, 2.0]
    req = calls[-1]
    assert req.url == "http://model.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert body["messages"] == MSGS
    assert (body["temperature"], body["top_p"], body["max_tokens"]) == (0.0, 0.95, 2048)


def test_chat_missing_credential_fails_before_network(monkeypatch):
    calls = []
    ep, _ = make_chat(lambda r: calls.append(r) or ok_response(), monkeypatch, key=None)
    with pytest.raises(AuthError):
        ep.complete(MSGS, SamplingParams())
    assert calls == []


def test_chat_rejected_credential(monkeypatch):
    ep, _ = make_chat(lambda r: httpx.Response(401), monkeypatch)
    with pytest.raises(AuthError):
        ep.complete(MSGS, SamplingParams())


def test_chat_malformed_and_client_errors(monkeypatch):
    ep, _ = make_chat(lambda r: httpx.Response(200, json={"nope": 1}), monkeypatch)
    with pytest.raises(ResponseMalformed):
        ep.complete(MSGS, SamplingParams())
    ep, _ = make_chat(lambda r: httpx.Response(400, text="bad"), monkeypatch)
    with pytest.raises(TransportError):
        ep.complete(MSGS, SamplingParams())


def test_chat_gives_up(monkeypatch):
    def handler(request):
        raise httpx.ConnectError("down", request=request)

    ep, sleeps = make_chat(handler, monkeypatch, max_attempts=4)
    with pytest.raises(TransportError):
        ep.complete(MSGS, SamplingParams())
    assert sleeps == [1.0, 2.0, 4.0]


def test_credential_not_in_describe(monkeypatch):
    monkeypatch.setenv("ISOPROOF_API_KEY", "sk-secret-value")
    assert "sk-secret-value" not in json.dumps(EndpointConfig().describe())


def test_token_bucket():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)
        now[0] += s

    bucket = TokenBucket(60, capacity=2, clock=lambda: now[0], sleep=sleep)
    assert bucket.acquire() == 0 and bucket.acquire() == 0
    assert bucket.acquire() == pytest.approx(1.0)
    assert TokenBucket(0).acquire() == 0.0


# ---------------------------------------------------------------------------
# scripted endpoint


def test_dialogue_position():
    bundle = PromptBundle("sys", demos(), '<sim>\nlemma other: "q"\n  by simp\n</sim>', 'lemma t: "y"', "S.T.t")
    assert dialogue_position(assemble_prompt(bundle)) == ("t", FIRST)
    assert dialogue_position(assemble_prompt(bundle, ("by simp", "err"))) == ("t", FIXING)
    assert script_key('lemma "x = y"') == 'lemma "x = y"'
    assert script_key("lemma (in foo) bar[simp]: x") == "bar"


def test_scripted_replies():
    ep = ScriptedEndpoint({"t": {"first": ["a", {"text": "b", "tokens": 9}], "fixing": ["c"]},
                           "*": {"first": ["fallback"]}})
    first = assemble_prompt(PromptBundle("sys", [], "", 'lemma t: "y"', "S.T.t"))
    assert ep.complete(first, None).text == "a"
    second = ep.complete(first, None)
    assert (second.text, second.completion_tokens) == ("b", 9)
    assert ep.complete(first, None).text == "b"
    other = assemble_prompt(PromptBundle("sys", [], "", 'lemma u: "y"', "S.T.u"))
    assert ep.complete(other, None).text == "fallback"
    assert ep.complete(assemble_prompt(PromptBundle("sys", [], "", 'lemma u: "y"', "S.T.u"),
                                       ("x", "e")), None).text == ""


# ---------------------------------------------------------------------------
# precheck and classification


@pytest.mark.parametrize("text,status", [
    ("by simp", OK),
    ("apply auto\n  sorry", BANNED_TOKEN),
    ("apply auto\n  OOPS", BANNED_TOKEN),
    ("(* sorry for the mess *)\n  by simp", OK),
    ("by (simp add: sorry_lemma)", OK),
    ("", REFUSED_OR_EMPTY),
    ("   \n", REFUSED_OR_EMPTY),
    ("Sorry, I cannot assist with this request.", REFUSED_OR_EMPTY),
    ("I'm sorry, but as an AI I can't", REFUSED_OR_EMPTY),
    (" ".join(["apply simp"] * 1025), TOO_LONG),
])
def test_precheck(text, status):
    assert precheck(text).status == status


def test_precheck_flags_and_reported_units():
    assert precheck("by simp", reported_units=2049).status == TOO_LONG
    assert precheck("x " * 2048).status == OK
    assert precheck("x " * 2049).status == TOO_LONG
    both = precheck("apply simp sorry " + "x " * 3000)
    assert both.status == BANNED_TOKEN and both.flags == (BANNED_TOKEN, TOO_LONG)


def taxonomy_cases():
    return json.loads((FIXTURES / "taxonomy.json").read_text())["cases"]


@pytest.mark.parametrize("case", taxonomy_cases(), ids=lambda c: c["name"])
def test_taxonomy_fixture(case):
    check = precheck(case["generation"])
    verify = VerifyResult.from_record(case["verify"]) if case["verify"] and check.ok else None
    cls, _ = classify_record(check.status, verify)
    assert cls == case["expected"]


@pytest.mark.parametrize("message,cls", [
    ('Undefined method: "frob"', "undefined"),
    ("Undefined constant: \"foo\"", "undefined"),
    ("Failed to apply initial proof method", "logic"),
    ("Inner syntax error at \"x\"", "other"),
    ("something nobody expected", "other"),
])
def test_classify_message(message, cls):
    assert classify_message(message)[0] == cls


def test_unmatched_pattern_is_reported():
    assert classify_message("weird") == ("other", "unmatched")
    assert classify_record(OK, VerifyResult(Status.TIMEOUT, "Timeout after 1s")) == ("other", "timeout")


# ---------------------------------------------------------------------------
# metrics and reports


@pytest.mark.parametrize("num,den,want", [(58, 139, 41.7), (0, 59, 0.0), (1, 8, 12.5), (1, 3, 33.3), (2, 3, 66.7),
                                          (0, 0, 0.0)])
def test_percentage(num, den, want):
    assert percentage(num, den) == want


def test_round_half_up_not_bankers():
    assert round_half_up(Fraction(1, 8), 2) == 0.13
    assert round_half_up(Fraction(5, 2), 0) == 3.0
    assert format_count_pct(38, 81) == "38(47%)"
    assert format_count_pct(1, 2) == "1(50%)"
    assert format_count_pct(0, 0) == "0(0%)"


def rec(lemma, idx, ok, rnd=FIRST, cat="P1", cls="logic"):
    return TrialRecord(lemma, cat, idx, rnd, {}, "", "", verify=VerifyResult(Status.SUCCESS if ok else Status.FAILURE),
                       error_class=None if ok else cls)


def test_acc_at_k_counts_only_first_k_trials():
    records = {"a": [rec("a", 0, False), rec("a", 1, True)], "b": [rec("b", 0, True)], "c": [rec("c", 0, False)]}
    assert acc_at_k(records, 1) == {"all": 33.3}
    assert acc_at_k(records, 2) == {"all": 66.7}


def test_acc_counts_fixing_round_of_counted_trial():
    records = {"a": [rec("a", 0, False), rec("a", 0, True, FIXING)]}
    assert acc_at_k(records, 1) == {"all": 100.0}


def test_acc_published_arithmetic():
    records = {f"l{i}": [rec(f"l{i}", 0, i < 58)] for i in range(139)}
    assert acc_at_k(records, 1) == {"all": 41.7}
    records = {f"l{i}": [rec(f"l{i}", 0, False)] for i in range(59)}
    assert acc_at_k(records, 1) == {"all": 0.0}


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=1, max_size=6), min_size=1, max_size=15))
def test_acc_monotone_in_k(outcomes):
    records = {f"l{i}": [rec(f"l{i}", j, ok) for j, ok in enumerate(o)] for i, o in enumerate(outcomes)}
    accs = [acc_at_k(records, k)["all"] for k in range(1, 7)]
    assert accs == sorted(accs)


def test_report_tables(tmp_path):
    records = [rec("a", 0, True), rec("b", 0, False, cls="undefined"), rec("b", 1, True),
               rec("c", 0, False, cls="other"), rec("c", 0, False, FIXING, cls="logic"), rec("c", 1, False, cls="undefined"),
               rec("d", 0, False, cat="D", cls="logic")]
    r = build_report(records, 2, config={"augmentations": ["fixing"], "seed": 0})
    p1 = r.row("P1")
    assert p1.lemmas == 3
    assert p1.solved == {"ACC#1": 1, "ACC#2": 2}
    assert p1.acc == {"ACC#1": 33.3, "ACC#2": 66.7}
    # error class of c comes from its last counted attempt (trial 1)
    assert p1.errors == {"undefined": 1, "logic": 0, "other": 0}
    assert r.row("D").errors == {"undefined": 0, "logic": 1, "other": 0}
    text = r.render_text()
    assert text.splitlines()[0].split() == ["Category", "Lemmas", "ACC#1", "ACC#2", "Undefined", "Logic", "Other"]
    assert "1(100%)" in text and "augmentations: fixing" in text
    (tmp_path / "report.json").write_text(r.dumps())
    again = load_report(tmp_path / "report.json")
    assert again.dumps() == r.dumps()
    # at k=1 lemma b fails on trial 0 and lemma c fails through its fixing round
    assert build_report(records, 1).row("P1").errors == {"undefined": 1, "logic": 1, "other": 0}


# ---------------------------------------------------------------------------
# trials against real benches


@pytest.fixture(scope="module")
def prover_for(workspace):
    loaded = read_manifest(workspace / "manifest.jsonl")
    return lambda **kw: make_prover(bench_prover_config(workspace, loaded.root, **kw))


def first_msgs(lem):
    return assemble_prompt(PromptBundle("sys", [], "", lem.statement, lem.id))


@pytest.mark.parametrize("reply,verified,status", [
    ("GT", True, OK),
    ("apply auto\n  sorry", False, BANNED_TOKEN),
    ("oops", False, BANNED_TOKEN),
    ("apply simp\n" + " ".join(["apply (simp)"] * 1100), False, TOO_LONG),
    ("Sorry, I cannot assist with this request.", False, REFUSED_OR_EMPTY),
])
def test_run_trial_rules(workspace, bench_lemmas, prover_for, reply, verified, status):
    lem = bench_lemmas[0]
    bench = load_bench(bench_dir(workspace, lem))
    text = lem.proof_text if reply == "GT" else reply
    ep = ScriptedEndpoint({"*": {"first": [text]}})
    r = run_trial(bench, lem, first_msgs(lem), ep, prover_for(), SamplingParams(), 0, FIRST)
    assert (r.verified, r.precheck) == (verified, status)
    if status != OK:
        assert r.verify is None and r.error_class == "other"


def test_groundtruth_plus_sorry_never_counts(workspace, bench_lemmas, prover_for):
    lem = next(l for l in bench_lemmas if l.proof_text.rstrip().endswith("done"))
    bench = load_bench(bench_dir(workspace, lem))
    cheat = lem.proof_text.rstrip()[:-len("done")] + "sorry"
    ep = ScriptedEndpoint({"*": {"first": [cheat]}})
    recs = evaluate_lemma(bench, lem, 1, None, prover_for(), ep, EvalContext("sys", {}, SamplingParams()))
    assert acc_at_k({lem.id: recs}, 1) == {"all": 0.0}


def test_timeout_is_a_failure(workspace, bench_lemmas, prover_for):
    lem = bench_lemmas[1]
    bench = load_bench(bench_dir(workspace, lem))
    ep = ScriptedEndpoint({"*": {"first": ["by (mock_sleep 30)"]}})
    r = run_trial(bench, lem, first_msgs(lem), ep, prover_for(timeout_seconds=1), SamplingParams(), 0, FIRST)
    assert r.verify.status is Status.TIMEOUT
    assert not r.verified and (r.error_class, r.error_pattern) == ("other", "timeout")
    assert r.verify.elapsed_seconds < 3


def test_endpoint_error_becomes_empty_output(workspace, bench_lemmas, prover_for):
    class Down:
        def complete(self, messages, sampling):
            raise TransportError("down")

    lem = bench_lemmas[0]
    r = run_trial(load_bench(bench_dir(workspace, lem)), lem, first_msgs(lem), Down(), prover_for(),
                  SamplingParams(), 0, FIRST)
    assert r.precheck == REFUSED_OR_EMPTY and r.error_pattern == "endpoint_error"


def test_fixing_round_feeds_error_back(workspace, bench_lemmas, prover_for):
    lem = bench_lemmas[2]
    bench = load_bench(bench_dir(workspace, lem))
    seen = []

    class Recording(ScriptedEndpoint):
        def complete(self, messages, sampling):
            seen.append(messages)
            return super().complete(messages, sampling)

    ep = Recording({"*": {"first": ["by (simp add: ghost_fact_def)"], "fixing": [lem.proof_text]}})
    ctx = EvalContext("sys", {}, SamplingParams(), frozenset({"fixing"}))
    recs = evaluate_lemma(bench, lem, 1, None, prover_for(), ep, ctx)
    assert [(r.round, r.verified) for r in recs] == [(FIRST, False), (FIXING, True)]
    assert recs[0].error_class == "undefined"
    last_user = seen[1][-1]["content"]
    assert last_user.startswith('{Undefined fact: "ghost_fact_def"') and last_user.endswith("}")

    ctx = EvalContext("sys", {}, SamplingParams(), frozenset({"try_again"}))
    seen.clear()
    ep.calls.clear()
    recs = evaluate_lemma(bench, lem, 1, None, prover_for(), ep, ctx)
    assert recs[-1].verified
    assert "Undefined fact" not in seen[1][-1]["content"]


def test_short_circuit_and_k(workspace, bench_lemmas, prover_for):
    lem = bench_lemmas[0]
    bench = load_bench(bench_dir(workspace, lem))
    ep = ScriptedEndpoint({"*": {"first": ["by simp_nope", lem.proof_text]}})
    recs = evaluate_lemma(bench, lem, 4, None, prover_for(), ep, EvalContext("sys", {}, SamplingParams(k=4)))
    assert [r.trial_index for r in recs] == [0, 1, 2, 3]
    ep.calls.clear()
    recs = evaluate_lemma(bench, lem, 4, None, prover_for(), ep,
                          EvalContext("sys", {}, SamplingParams(k=4), short_circuit=True))
    assert [r.trial_index for r in recs] == [0, 1]


def test_clean_generation():
    assert clean_generation("```isabelle\nby simp\n```") == "by simp"
    assert clean_generation("Here:\n```\napply auto\ndone\n```\nthanks") == "apply auto\ndone"
    assert clean_generation("\nby simp\n") == "by simp"


def test_trial_record_round_trip():
    r = rec("a", 0, False)
    assert TrialRecord.from_record({"record": "trial", **r.to_record()}) == r
