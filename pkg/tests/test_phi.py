import json
import unicodedata
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pxtopics.corpus import Comment
from pxtopics.phi import (
    PhiCategory,
    PhiConfig,
    detect_all,
    reconstruct_original,
    redact,
    redaction_report,
    scan_category,
)

DATA = Path(__file__).parent / "data"

CONFIG = PhiConfig(
    name_gazetteer=frozenset({"Jane Porter", "Bob Kowalski"}),
    custom_terms=frozenset({"Riverbend Medical Center", "St Hubert Hospital"}),
)


def categories(spans):
    return [s.category for s in spans]


def texts(spans):
    return [s.matched_text for s in spans]


class TestScanCategory:
    def test_ssn(self):
        spans = scan_category("SSN 123-45-6789", PhiCategory.IdNumber)
        assert texts(spans) == ["123-45-6789"]

    def test_long_digit_run_with_trigger(self):
        spans = scan_category("my MRN is 98765432 thanks", PhiCategory.IdNumber)
        assert texts(spans) == ["98765432"]

    def test_long_digit_run_without_trigger_ignored(self):
        assert scan_category("waited 98765432 minutes", PhiCategory.IdNumber) == []

    def test_email(self):
        spans = scan_category("Email me at jane.doe@example.com", PhiCategory.Email)
        assert texts(spans) == ["jane.doe@example.com"]

    def test_honorific_name(self):
        spans = scan_category("Dr. Smith was great", PhiCategory.Name)
        assert texts(spans) == ["Smith"]

    def test_two_dates(self):
        spans = scan_category(
            "discharged on 01/02/2023 and again March 3, 2023", PhiCategory.Date
        )
        assert texts(spans) == ["01/02/2023", "March 3, 2023"]

    def test_year_alone_not_redacted(self):
        assert scan_category("stayed in 2023", PhiCategory.Date) == []

    @pytest.mark.parametrize(
        "number",
        ["555-123-4567", "(555) 123-4567", "555.123.4567", "+1 555 123 4567", "5551234567"],
    )
    def test_phone_forms(self, number):
        spans = scan_category(f"call {number} now", PhiCategory.Phone)
        assert texts(spans) == [number]

    def test_nine_digit_run_is_not_a_phone(self):
        assert scan_category("call 555123456 now", PhiCategory.Phone) == []

    def test_url_forms(self):
        spans = scan_category("see https://example.org/a?b=1 or www.example.org.", PhiCategory.Url)
        assert texts(spans) == ["https://example.org/a?b=1", "www.example.org"]

    def test_address(self):
        spans = scan_category("I live at 12 Oak Hill Road, Apt 4B", PhiCategory.Address)
        assert texts(spans) == ["12 Oak Hill Road, Apt 4B"]

    def test_dr_suffix_needs_house_number(self):
        spans = scan_category("sent to 1600 Rosewood Dr", PhiCategory.Address)
        assert texts(spans) == ["1600 Rosewood Dr"]
        assert scan_category("Dr turned up late", PhiCategory.Address) == []

    def test_gazetteer_name(self):
        spans = scan_category("jane porter helped me", PhiCategory.Name, CONFIG)
        assert texts(spans) == ["jane porter"]

    def test_custom_terms(self):
        spans = scan_category("moved from Riverbend Medical Center", PhiCategory.CustomTerm, CONFIG)
        assert texts(spans) == ["Riverbend Medical Center"]

    def test_no_match_returns_empty(self):
        assert scan_category("the food was cold", PhiCategory.Email) == []


class TestDetectAll:
    def test_sorted_by_start(self):
        spans = detect_all("email a@b.co then call 555-123-4567")
        assert categories(spans) == [PhiCategory.Email, PhiCategory.Phone]
        assert spans[0].start < spans[1].start

    def test_empty_text(self):
        assert detect_all("") == []

    def test_priority_id_beats_phone(self):
        # a ten-digit run next to an ID trigger is one ID span, not a phone
        spans = detect_all("MRN 5551234567 on file")
        assert categories(spans) == [PhiCategory.IdNumber]

    def test_priority_date_beats_address_on_overlap(self):
        # "2023" belongs to the date; the address candidate loses the overlap
        spans = detect_all("note March 3, 2023 Main St")
        assert PhiCategory.Date in categories(spans)
        assert all(s.category != PhiCategory.Address for s in spans)

    def test_url_swallows_embedded_email(self):
        spans = detect_all("visit https://example.com/u/jane.doe@example.com now")
        assert categories(spans) == [PhiCategory.Url]

    def test_spans_non_overlapping(self):
        spans = detect_all("Dr. Smith at 12 Oak Hill Road called 555-123-4567", CONFIG)
        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.start

    def test_matched_text_equals_slice(self):
        text = "Dr. Smith called 555-123-4567 on 01/02/2023"
        for span in detect_all(text):
            assert text[span.start:span.end] == span.matched_text

    def test_disabled_category_skipped(self):
        config = PhiConfig(disabled=frozenset({PhiCategory.Phone}))
        assert detect_all("call 555-123-4567", config) == []


class TestRedact:
    def test_title_preserved(self):
        result = redact("Dr. Smith called 555-123-4567")
        assert result.redacted_text == "Dr. [NAME] called [PHONE]"

    def test_empty_text(self):
        result = redact("")
        assert result.redacted_text == ""
        assert result.spans == ()

    def test_counts_sum_to_span_count(self):
        result = redact("a@b.co and c@d.co and 555-123-4567")
        assert sum(result.placeholder_counts.values()) == len(result.spans)
        assert result.placeholder_counts[PhiCategory.Email] == 2

    def test_idempotent(self):
        text = "Mrs. Jones, 12 Oak Hill Road, 555.123.4567, jane@example.org, www.x.org"
        once = redact(text, CONFIG).redacted_text
        assert redact(once, CONFIG).redacted_text == once

    def test_rescan_of_redacted_is_empty(self):
        text = "SSN 123-45-6789, Dr. Smith, 01/02/23, https://a.io/x, 44 Elm St"
        assert detect_all(redact(text, CONFIG).redacted_text, CONFIG) == []

    def test_reconstruction(self):
        text = "Dr. Smith called 555-123-4567 about [PHONE] on March 3, 2023"
        result = redact(text)
        assert reconstruct_original(result) == text


ADVERSARIAL = [
    json.loads(line)
    for line in (DATA / "phi_adversarial.jsonl").read_text(encoding="utf-8").splitlines()
    if line.strip()
]


class TestAdversarialCorpus:
    def test_corpus_is_large_enough(self):
        assert len(ADVERSARIAL) >= 50

    @pytest.mark.parametrize("case", ADVERSARIAL, ids=lambda c: c["id"])
    def test_expected_categories_detected(self, case):
        spans = detect_all(case["text"], CONFIG)
        found = {s.category.value for s in spans}
        assert found == set(case["expect"]), case["text"]

    @pytest.mark.parametrize("case", ADVERSARIAL, ids=lambda c: c["id"])
    def test_redaction_is_safe_and_idempotent(self, case):
        result = redact(case["text"], CONFIG)
        assert detect_all(result.redacted_text, CONFIG) == []
        assert redact(result.redacted_text, CONFIG).redacted_text == result.redacted_text

    @pytest.mark.parametrize("case", ADVERSARIAL, ids=lambda c: c["id"])
    def test_reconstruction_roundtrip(self, case):
        # offsets refer to NFC-normalized text, so reconstruction does too
        result = redact(case["text"], CONFIG)
        assert reconstruct_original(result) == unicodedata.normalize("NFC", case["text"])


_FRAGMENTS = list("abcdefgz ABCDR.@-/()0123456789[]") + [
    "Dr. ",
    "555-123-4567",
    "a@b.co",
    "May 5",
    "MRN 1234567",
    "[PHONE]",
    "12 Elm St",
]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from(_FRAGMENTS), max_size=12).map("".join))
def test_redaction_properties_on_generated_text(text):
    result = redact(text, CONFIG)
    assert detect_all(result.redacted_text, CONFIG) == []
    assert redact(result.redacted_text, CONFIG).redacted_text == result.redacted_text
    for a, b in zip(result.spans, result.spans[1:]):
        assert a.end <= b.start


class TestReport:
    def make_corpus(self):
        comments = [Comment(id=f"c{i}", text="all fine") for i in range(8)]
        comments.append(Comment(id="c8", text="call 555-123-4567"))
        comments.append(Comment(id="c9", text="phone (555) 123-4567 please"))
        return comments

    def test_category_totals(self):
        report = redaction_report(self.make_corpus(), PhiConfig(sample_size=5, seed=3))
        assert report.category_counts["Phone"] == 2
        assert report.comments_with_phi == 2
        assert report.phi_fraction == pytest.approx(0.2)

    def test_sample_deterministic(self):
        first = redaction_report(self.make_corpus(), PhiConfig(sample_size=5, seed=11))
        second = redaction_report(self.make_corpus(), PhiConfig(sample_size=5, seed=11))
        assert first.sample == second.sample
        assert len(first.sample) == 5

    def test_clean_corpus_fraction_zero(self):
        comments = [Comment(id="a", text="nice stay"), Comment(id="b", text="ok")]
        report = redaction_report(comments, PhiConfig(sample_size=1, seed=0))
        assert report.phi_fraction == 0.0
