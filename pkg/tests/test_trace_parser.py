import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trrgr.errors import (
    InvalidBoxGeometry,
    MalformedAnswerJson,
    MalformedToolCall,
    MultipleOccurrences,
    NoParsableBox,
    StrayAnswerContent,
)
from trrgr.geometry import Box
from trrgr.trace_parser import (
    Defect,
    ParsedTrajectory,
    extract_tag,
    parse_answer,
    parse_piter_output,
    parse_tool_action,
    render_trajectory,
    validate_trajectory,
)

CORPUS = [json.loads(line) for line in (Path(__file__).parent / "golden" / "format_corpus.jsonl").open()]
VALID = CORPUS[0]


class TestExtractTag:
    def test_direct(self):
        assert extract_tag("<think>abc</think>", "think") == "abc"

    def test_missing(self):
        assert extract_tag("no tags here", "rethink") is None

    def test_duplicate(self):
        with pytest.raises(MultipleOccurrences):
            extract_tag("<think>a</think><think>b</think>", "think")

    def test_unclosed_is_absent(self):
        assert extract_tag("<think>abc", "think") is None

    def test_think_does_not_match_rethink(self):
        assert extract_tag("<rethink>x</rethink>", "think") is None
        assert extract_tag("<think>a</think><rethink>b</rethink>", "think") == "a"

    def test_inner_text_kept_verbatim(self):
        assert extract_tag("  <answer>\n {} \n</answer> ", "answer") == "\n {} \n"


class TestParseAnswer:
    def test_schema(self):
        assert parse_answer('{"bbox_2d": [10, 20, 110, 220]}') == Box(10, 20, 110, 220)

    def test_floats_and_whitespace(self):
        assert parse_answer(' \n{"bbox_2d": [1.5, 2, 3.25, 4]}\n') == Box(1.5, 2, 3.25, 4)

    def test_extra_keys_allowed(self):
        assert parse_answer('{"bbox_2d": [1, 2, 3, 4], "label": "cup"}') == Box(1, 2, 3, 4)

    @pytest.mark.parametrize(
        "text",
        [
            '{"bbox": [1,2,3,4]}',
            '{"bbox_2d": [1,2,3]}',
            '{"bbox_2d": [1,2,3,4,5]}',
            '{"bbox_2d": [1,2,"3",4]}',
            '{"bbox_2d": [1,2,null,4]}',
            '{"bbox_2d": [1,2,true,4]}',
            '{"bbox_2d": [1,2,NaN,4]}',
            '{"bbox_2d": "1,2,3,4"}',
            "[1,2,3,4]",
            "not json",
            "",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(MalformedAnswerJson):
            parse_answer(text)

    def test_inverted(self):
        with pytest.raises(InvalidBoxGeometry):
            parse_answer('{"bbox_2d": [50, 20, 10, 220]}')

    def test_stray_content_is_a_malformed_subtype(self):
        with pytest.raises(StrayAnswerContent):
            parse_answer('Final: {"bbox_2d": [1, 2, 3, 4]}')
        assert issubclass(StrayAnswerContent, MalformedAnswerJson)


class TestParseToolAction:
    def test_phrase(self):
        text = '<think>…</think><tool_call>{"name":"ground","arguments":{"phrase":"red cup"}}</tool_call>'
        assert parse_tool_action(text) == "red cup"

    def test_absent(self):
        assert parse_tool_action("<think>…</think>") is None

    @pytest.mark.parametrize(
        "text",
        [
            "<tool_call>{broken",
            "<tool_call>{broken</tool_call>",
            '<tool_call>{"name":"detect","arguments":{"phrase":"x"}}</tool_call>',
            '<tool_call>{"name":"ground","arguments":{}}</tool_call>',
            '<tool_call>{"name":"ground","arguments":{"phrase":"  "}}</tool_call>',
            '<tool_call>{"name":"ground","arguments":{"phrase":"a"}}</tool_call>' * 2,
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(MalformedToolCall):
            parse_tool_action(text)


class TestValidateTrajectory:
    def test_valid_fixture(self):
        p = validate_trajectory(VALID["turn1"], VALID["turn2"])
        assert p.format_valid and p.defects == ()
        assert p.answer_box == Box(34, 50, 210, 388)
        assert p.tool_action == "man holding a red umbrella"
        assert p.think.startswith("The expression")

    def test_missing_rethink_close(self):
        p = validate_trajectory(VALID["turn1"], VALID["turn2"].replace("</rethink>", ""))
        assert not p.format_valid
        assert p.defects == (Defect.MISSING_RETHINK,)

    def test_answer_before_rethink(self):
        case = next(c for c in CORPUS if c["name"] == "answer_before_rethink")
        assert validate_trajectory(case["turn1"], case["turn2"]).defects == (Defect.TAG_ORDER_VIOLATION,)

    @pytest.mark.parametrize("case", CORPUS, ids=[c["name"] for c in CORPUS])
    def test_corpus_defects(self, case):
        p = validate_trajectory(case["turn1"], case["turn2"])
        assert [d.value for d in p.defects] == case["defects"]
        assert p.format_valid == (not case["defects"])

    def test_whitespace_around_tags_tolerated(self):
        p = validate_trajectory("\n  " + VALID["turn1"] + "  \n", "\n\n" + VALID["turn2"] + "\n")
        assert p.format_valid

    def test_text_between_blocks_tolerated(self):
        t2 = VALID["turn2"].replace("\n<answer>", "\nSo the final answer is:\n<answer>")
        assert validate_trajectory(VALID["turn1"], t2).format_valid

    def test_tool_call_problems_are_not_format_defects(self):
        t1 = VALID["turn1"].split("\n")[0]
        p = validate_trajectory(t1, VALID["turn2"])
        assert p.format_valid and p.tool_action is None
        p = validate_trajectory(t1 + "<tool_call>{oops", VALID["turn2"])
        assert p.format_valid and p.tool_action is None

    def test_several_defects_are_all_reported(self):
        p = validate_trajectory("nothing", "")
        assert p.defects == (Defect.MISSING_THINK, Defect.MISSING_RETHINK, Defect.MISSING_ANSWER)

    def test_format_valid_is_conjunction_of_parts(self):
        # the verdict should be exactly: one think, one rethink, one answer, order, parseable box
        for case in CORPUS:
            t1, t2 = case["turn1"], case["turn2"]
            try:
                parts_ok = (
                    extract_tag(t1, "think") is not None
                    and extract_tag(t2, "rethink") is not None
                    and extract_tag(t2, "answer") is not None
                    and t2.index("</rethink>") < t2.index("<answer>")
                )
                parts_ok = parts_ok and parse_answer(extract_tag(t2, "answer")) is not None
            except (MultipleOccurrences, MalformedAnswerJson, InvalidBoxGeometry):
                parts_ok = False
            assert validate_trajectory(t1, t2).format_valid == parts_ok, case["name"]


cot_text = st.text(
    alphabet=st.characters(blacklist_characters="<>", blacklist_categories=("Cs",)), max_size=60
)
phrases = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=30).filter(
    lambda s: s.strip() != ""
)
coords = st.one_of(st.integers(0, 4000), st.floats(0, 4000, allow_nan=False))


@given(cot_text, st.none() | phrases, cot_text, st.lists(coords, min_size=4, max_size=4))
def test_render_round_trip(think, action, rethink, c):
    box = Box(min(c[0], c[2]), min(c[1], c[3]), max(c[0], c[2]), max(c[1], c[3]))
    traj = ParsedTrajectory(think, action, rethink, box, True, ())
    again = validate_trajectory(*render_trajectory(traj))
    assert again == traj


class TestParsePiterOutput:
    def test_bare_object(self):
        assert parse_piter_output('{"bbox_2d": [0, 0, 50, 50]}') == Box(0, 0, 50, 50)

    def test_code_fence(self):
        assert parse_piter_output('```json\n{"bbox_2d": [1,2,3,4]}\n```') == Box(1, 2, 3, 4)

    def test_prose(self):
        with pytest.raises(NoParsableBox):
            parse_piter_output("I cannot find it.")

    def test_leading_prose_and_list_wrapper(self):
        text = 'Here it is:\n```json\n[{"bbox_2d": [5, 6, 7, 8], "label": "dog"}]\n```'
        assert parse_piter_output(text) == Box(5, 6, 7, 8)

    def test_first_usable_object_wins(self):
        text = '{"note": 1} {"bbox_2d": [9, 8, 1, 2]} {"bbox_2d": [1, 2, 3, 4]} {"bbox_2d": [0, 0, 1, 1]}'
        assert parse_piter_output(text) == Box(1, 2, 3, 4)

    def test_null_box_is_unparsable(self):
        with pytest.raises(NoParsableBox):
            parse_piter_output('{"bbox_2d": null}')

    def test_bytes_input(self):
        assert parse_piter_output(b'\xff{"bbox_2d": [1,2,3,4]}') == Box(1, 2, 3, 4)

    @settings(max_examples=300)
    @given(st.binary(max_size=400))
    def test_never_crashes_on_bytes(self, data):
        try:
            parse_piter_output(data)
        except NoParsableBox:
            pass

    @given(st.text(max_size=300))
    def test_never_crashes_on_text(self, text):
        try:
            parse_piter_output(text)
        except NoParsableBox:
            pass

    def test_deep_nesting(self):
        with pytest.raises(NoParsableBox):
            parse_piter_output("{" * 5000 + '"a":' + "[" * 100000)
