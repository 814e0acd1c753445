import itertools
from pathlib import Path

import pytest

from pxtopics.classify import (
    BackendConfig,
    ClassificationFailure,
    PromptTemplate,
    build_prompt,
    classify_comment,
    classify_corpus,
    load_keyword_table,
    load_shot_pool,
    load_template,
    parse_response,
    render_labels,
    rule_backend_classify,
)
from pxtopics.corpus import Comment, LabelVector, canonical_topics, topic_names
from pxtopics.errors import (
    BackendUnavailable,
    EmptyResponse,
    ParseFailed,
    TemplatePlaceholderMissing,
    UnknownLabel,
    UnredactedText,
)

DATA = Path(__file__).parent / "data"
TOPICS = canonical_topics()
SHOTS = load_shot_pool(DATA / "shots.jsonl")


def ok_response(payload='["Positive Feedback"]'):
    return 200, {"choices": [{"message": {"content": payload}}]}


def remote_config(**kwargs):
    defaults = dict(
        kind="remote_llm",
        endpoint="https://llm.invalid/v1/chat/completions",
        model="test-model",
        max_retries=3,
        backoff_base_s=0.0,
    )
    defaults.update(kwargs)
    return BackendConfig(**defaults)


class TestBuildPrompt:
    def test_zero_shot_has_all_topics_once_and_no_examples(self):
        prompt = build_prompt(PromptTemplate(), TOPICS, [], "the visit went fine")
        for name in topic_names():
            assert prompt.count(name) == 1
        assert prompt.count("\nTopics: [") == 0

    def test_three_shots_in_pool_order(self):
        prompt = build_prompt(PromptTemplate(), TOPICS, SHOTS[:3], "the visit went fine")
        assert prompt.count("\nTopics: [") == 3
        positions = [prompt.index(shot.text) for shot in SHOTS[:3]]
        assert positions == sorted(positions)

    def test_positive_feedback_definition_present(self):
        prompt = build_prompt(PromptTemplate(), TOPICS, [], "x")
        assert "Comments expressing satisfaction or compliments" in prompt

    def test_deterministic(self):
        args = (PromptTemplate(), TOPICS, SHOTS[:2], "same comment")
        assert build_prompt(*args) == build_prompt(*args)

    def test_comment_is_last_content_before_instruction(self):
        prompt = build_prompt(PromptTemplate(), TOPICS, SHOTS[:1], "my target comment")
        assert prompt.index("my target comment") > prompt.index(SHOTS[0].text)

    def test_chain_of_thought_appends_directive(self):
        plain = build_prompt(PromptTemplate(), TOPICS, [], "x")
        cot = build_prompt(PromptTemplate(style="chain_of_thought"), TOPICS, [], "x")
        assert cot.startswith(plain)
        assert "step by step" in cot

    def test_missing_placeholder_rejected(self):
        template = PromptTemplate(topic_block_format="- topic goes here")
        with pytest.raises(TemplatePlaceholderMissing):
            build_prompt(template, TOPICS, [], "x")

    def test_template_file_roundtrip(self, tmp_path):
        template = load_template()
        prompt = build_prompt(template, TOPICS, SHOTS[:1], "hello")
        assert "hello" in prompt
        bad = tmp_path / "t.txt"
        bad.write_text("preamble {{TOPICS}} only", encoding="utf-8")
        with pytest.raises(TemplatePlaceholderMissing):
            load_template(bad)


class TestParseResponse:
    def test_strict_single(self):
        assert parse_response('["Positive Feedback"]', TOPICS) == LabelVector.from_indices([0])

    def test_repair_case_insensitive(self):
        vec = parse_response("Positive Feedback, noisy environment", TOPICS)
        assert vec == LabelVector.from_indices([0, 1])

    def test_unknown_label(self):
        with pytest.raises(UnknownLabel):
            parse_response('["Unknown Topic"]', TOPICS)

    def test_empty_response(self):
        with pytest.raises(EmptyResponse):
            parse_response("   ", TOPICS)

    def test_empty_list_is_all_zero(self):
        assert parse_response("[]", TOPICS) == LabelVector.zeros()

    def test_cot_takes_final_bracketed_list(self):
        raw = (
            "The patient mentions noise [loudly] and compliments the team.\n"
            'So: ["Positive Feedback", "Noisy Environment"]'
        )
        assert parse_response(raw, TOPICS) == LabelVector.from_indices([0, 1])

    def test_single_quotes_fall_to_repair_path(self):
        assert parse_response("['Positive Feedback']", TOPICS) == LabelVector.from_indices([0])

    def test_duplicates_collapse(self):
        vec = parse_response("Miscellaneous, miscellaneous", TOPICS)
        assert vec == LabelVector.from_indices([3])

    def test_roundtrip_all_1024_vectors(self):
        for mask in range(1024):
            vec = LabelVector.from_indices(i for i in range(10) if mask & (1 << i))
            assert parse_response(render_labels(vec), TOPICS) == vec


class TestRuleBackend:
    def test_single_keyword(self):
        assert rule_backend_classify("everything was great", {"great": 0}) == LabelVector.from_indices([0])

    def test_two_keywords(self):
        vec = rule_backend_classify("room was noisy and food was cold", {"noisy": 1, "food": 6})
        assert vec == LabelVector.from_indices([1, 6])

    def test_no_match(self):
        assert rule_backend_classify("xyzzy", {"great": 0}) == LabelVector.zeros()

    def test_bundled_table_food_example(self):
        table = load_keyword_table()
        config = BackendConfig(kind="rule_based", keyword_table=table)
        out = classify_comment(config, PromptTemplate(), Comment("c1", "the food was cold"))
        assert out.labels[6]
        assert out.attempts == 1


class TestClassifyComment:
    def test_remote_stub_success(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        calls = []

        def transport(url, payload, timeout, headers):
            calls.append(payload)
            return ok_response()

        out = classify_comment(
            remote_config(), PromptTemplate(), Comment("c1", "nice"), transport=transport
        )
        assert out.labels == LabelVector.from_indices([0])
        assert out.attempts == 1
        assert out.raw_response == '["Positive Feedback"]'
        assert calls[0]["model"] == "test-model"
        assert calls[0]["temperature"] == 0.0

    def test_retries_then_succeeds(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        attempts = itertools.count()

        def transport(url, payload, timeout, headers):
            if next(attempts) < 2:
                return 503, {}
            return ok_response()

        out = classify_comment(
            remote_config(max_retries=3),
            PromptTemplate(),
            Comment("c1", "nice"),
            transport=transport,
        )
        assert out.attempts == 3

    def test_backend_unavailable_after_exhaustion(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        with pytest.raises(BackendUnavailable):
            classify_comment(
                remote_config(max_retries=1),
                PromptTemplate(),
                Comment("c1", "nice"),
                transport=lambda *a: (500, {}),
            )

    def test_parse_failed_after_exhaustion(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        with pytest.raises(ParseFailed):
            classify_comment(
                remote_config(max_retries=1),
                PromptTemplate(),
                Comment("c1", "nice"),
                transport=lambda *a: ok_response('["Bogus Topic"]'),
            )

    def test_unknown_label_retry_can_recover(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        responses = iter([ok_response('["Bogus Topic"]'), ok_response()])

        def transport(*args):
            return next(responses)

        out = classify_comment(
            remote_config(max_retries=2),
            PromptTemplate(),
            Comment("c1", "nice"),
            transport=transport,
        )
        assert out.attempts == 2

    def test_refuses_unredacted_text(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        sent = []

        def transport(*args):
            sent.append(args)
            return ok_response()

        with pytest.raises(UnredactedText):
            classify_comment(
                remote_config(),
                PromptTemplate(),
                Comment("c1", "call me 555-123-4567"),
                transport=transport,
            )
        assert sent == []

    def test_missing_api_key(self, monkeypatch):
        monkeypatch.delenv("PXTOPICS_API_KEY", raising=False)
        with pytest.raises(BackendUnavailable, match="PXTOPICS_API_KEY"):
            classify_comment(
                remote_config(), PromptTemplate(), Comment("c1", "nice"), transport=lambda *a: ok_response()
            )

    def test_exponential_backoff_delays(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        delays = []

        def transport(*args):
            return ok_response() if len(delays) >= 2 else (502, {})

        out = classify_comment(
            remote_config(max_retries=3, backoff_base_s=0.5),
            PromptTemplate(),
            Comment("c1", "nice"),
            transport=transport,
            sleep=delays.append,
        )
        assert out.attempts == 3
        assert delays == [0.5, 1.0]


class TestClassifyCorpus:
    COMMENTS = [Comment(f"c{i}", text) for i, text in enumerate(["great stay", "noisy room", "xyzzy"] * 7)][:20]

    def rule(self):
        return BackendConfig(kind="rule_based", keyword_table={"great": 0, "noisy": 1, "room": 7})

    def test_order_preserved_and_stable(self):
        first = classify_corpus(self.rule(), PromptTemplate(), self.COMMENTS)
        second = classify_corpus(self.rule(), PromptTemplate(), self.COMMENTS)
        assert [o.comment_id for o in first.outputs] == [c.id for c in self.COMMENTS]
        assert first == second
        assert first.failures == ()

    def test_matches_per_comment_results(self):
        corpus_run = classify_corpus(self.rule(), PromptTemplate(), self.COMMENTS)
        singles = [classify_comment(self.rule(), PromptTemplate(), c) for c in self.COMMENTS]
        assert list(corpus_run.outputs) == singles

    def test_partial_failure_recorded(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        comments = [Comment(f"c{i}", "fine") for i in range(20)]
        comments[7] = Comment("c7", "always failing")

        def transport(url, payload, timeout, headers):
            if "always failing" in payload["messages"][0]["content"]:
                return 500, {}
            return ok_response()

        result = classify_corpus(
            remote_config(max_retries=1), PromptTemplate(), comments, transport=transport
        )
        assert len(result.outputs) == 19
        assert len(result.failures) == 1
        assert result.failures[0].comment_id == "c7"

    def test_empty_corpus(self):
        result = classify_corpus(self.rule(), PromptTemplate(), [])
        assert result.outputs == () and result.failures == ()

    def test_rate_limit_spacing_requested(self, monkeypatch):
        monkeypatch.setenv("PXTOPICS_API_KEY", "k")
        sleeps = []
        config = remote_config(min_request_interval_ms=40, max_retries=0)
        classify_corpus(
            config,
            PromptTemplate(),
            [Comment(f"c{i}", "fine") for i in range(3)],
            transport=lambda *a: ok_response(),
            sleep=sleeps.append,
        )
        assert len([s for s in sleeps if s > 0]) >= 2


class TestShotPool:
    def test_pool_loaded_in_order(self):
        assert len(SHOTS) == 5
        assert SHOTS[0].labels == LabelVector.from_indices([0])

    def test_phi_in_shot_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"text": "call Dr. Smith at 555-123-4567", "labels": ["Positive Feedback"]}\n',
            encoding="utf-8",
        )
        with pytest.raises(UnredactedText):
            load_shot_pool(path)

    def test_k_shots_bounded_by_pool(self):
        with pytest.raises(ValueError):
            BackendConfig(kind="remote_llm", k_shots=9, shot_pool=SHOTS)
