import itertools

import pytest

from dialact.errors import ParseError, UnknownActError, ValidationError
from dialact.model import (
    CORE_ACTS,
    default_model_text,
    dump_model,
    keywords_for,
    load_model,
    validate_act,
)

from conftest import ABL, AKZ, BEST, VERAB, VOR

MINI = """\
[acts]
{acts}
[machine]
initial s0
final s1
s0 BEGRUESSUNG s1
"""


def mini(extra_acts="", machine_extra="", tail=""):
    acts = "\n".join(f"{a} phase" for a in CORE_ACTS) + extra_acts
    return MINI.format(acts=acts) + machine_extra + tail


def test_default_model_has_core_acts_and_three_phases(inventory, machine):
    assert set(CORE_ACTS) <= set(inventory.acts)
    assert len(inventory) == 9
    assert list(machine.phases) == ["introduction", "negotiation", "closing"]
    assert machine.initial == "S0"
    assert machine.final == {"S9"}


def test_empty_inventory_rejected():
    with pytest.raises(ValidationError, match="inventory empty"):
        load_model("[acts]\n[machine]\ninitial s0\nfinal s0\n")


def test_nondeterministic_machine_rejected():
    text = mini(machine_extra="s1 VORSCHLAG s2\ns1 VORSCHLAG s3\n")
    with pytest.raises(ValidationError, match="nondeterministic"):
        load_model(text)


def test_unknown_act_in_transition_rejected():
    with pytest.raises(ValidationError, match="unknown act in transition"):
        load_model(mini(machine_extra="s1 FROBNICATE s2\n"))


def test_unreachable_final_rejected():
    text = MINI.replace("s0 BEGRUESSUNG s1", "s2 BEGRUESSUNG s1").format(
        acts="\n".join(f"{a} phase" for a in CORE_ACTS)
    )
    with pytest.raises(ValidationError, match="reachable"):
        load_model(text)


def test_missing_core_act_rejected():
    text = mini().replace("VORSCHLAG phase\n", "")
    with pytest.raises(ValidationError, match="VORSCHLAG"):
        load_model(text)


@pytest.mark.parametrize(
    "text, line",
    [
        ("[acts]\nBEGRUESSUNG phase\n[bogus]\n", 3),
        ("[machine]\ninitial s0\n[acts]\n", 3),
        ("[acts]\nBEGRUESSUNG wobble\n[machine]\n", 2),
        ("stray\n[acts]\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as err:
        load_model(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_clarify_open_needs_counterpart():
    with pytest.raises(ParseError, match="counterpart"):
        load_model(mini(extra_acts="\nKLAER_AUF clarify-open"))
    with pytest.raises(ValidationError, match="KLAER_ZU"):
        load_model(mini(extra_acts="\nKLAER_AUF clarify-open KLAER_ZU"))
    inv, _ = load_model(mini(extra_acts="\nKLAER_AUF clarify-open KLAER_ZU\nKLAER_ZU clarify-close"))
    assert inv.counterparts == {"KLAER_AUF": "KLAER_ZU"}


def test_validate_act(inventory):
    assert validate_act(inventory, VOR)
    assert not validate_act(inventory, "FROBNICATE")
    inv, _ = load_model(mini())
    assert validate_act(inv, "BEGRUESSUNG")


def test_keywords_read_back_from_model_file(inventory):
    # oracle: the ABLEHNUNG line of the shipped file, split by hand
    line = next(l for l in default_model_text().splitlines() if l.startswith(f"{ABL}:"))
    expected = [w.strip() for w in line.split(":", 1)[1].split(",")]
    assert keywords_for(inventory, ABL) == expected
    assert expected[0] == "leider"


def test_keywords_absent_section_and_unknown_act(inventory):
    inv, _ = load_model(mini())
    assert keywords_for(inv, VOR) == []
    with pytest.raises(UnknownActError):
        keywords_for(inventory, "FROBNICATE")


def test_round_trip_default(model):
    inv, machine = model
    inv2, machine2 = load_model(dump_model(inv, machine))
    assert inv2 == inv
    assert machine2 == machine
    assert dump_model(inv2, machine2) == dump_model(inv, machine)


def test_round_trip_with_extensions():
    text = mini(
        extra_acts="\nKLAER_AUF clarify-open KLAER_ZU\nKLAER_ZU clarify-close\nUEBERLEGEN anywhere",
        tail="[anywhere]\nUEBERLEGEN\n[keywords]\nVORSCHLAG: a, b\n",
    )
    inv, machine = load_model(text)
    assert load_model(dump_model(inv, machine)) == (inv, machine)
    assert "UEBERLEGEN" in machine.anywhere


def test_default_machine_is_deterministic(machine):
    # exhaustive pairwise scan of the transition list
    for t1, t2 in itertools.combinations(machine.transitions, 2):
        assert t1[:2] != t2[:2] or t1 == t2


def test_default_machine_accepts_fixture_corpora(machine, tiny, excerpt):
    for corpus in (tiny, excerpt):
        for d in corpus.dialogues:
            assert machine.accepts(d.acts) or d.id == "EX"
    # the excerpt stops mid-negotiation: every prefix is admitted, no final state
    state = machine.initial
    for act in excerpt.dialogue("EX").acts:
        state = machine.next_state(state, act)
        assert state is not None


def test_farewell_after_acceptance_needs_confirmation(machine):
    assert machine.next_state("S6", VERAB) is None
    assert machine.next_state("S6", BEST) == "S8"
    assert machine.next_state("S3", AKZ) == "S6"
