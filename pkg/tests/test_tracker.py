import random

import pytest

from dialact import tracker
from dialact.errors import UnknownActError
from dialact.model import CORE_ACTS, load_model
from dialact.tracker import TrackerEvent

from conftest import ABL, AKZ, BEG, BEST, D1, D2, EX, INIT, VERAB, VOR

CLARIFY_MODEL = (
    "[acts]\n"
    + "".join(f"{a} phase\n" for a in CORE_ACTS)
    + "KLAER_AUF clarify-open KLAER_ZU\nKLAER_ZU clarify-close\nUEBERLEGEN anywhere\n"
    "[machine]\ninitial S0\nfinal S2\nS0 BEGRUESSUNG S1\nS1 VORSCHLAG S1\nS1 VERABSCHIEDUNG S2\n"
    "S5 VORSCHLAG S1\nS6 VORSCHLAG S2\nS7 ABLEHNUNG S1\nS8 ABLEHNUNG S2\n"
)


@pytest.fixture
def clar():
    return load_model(CLARIFY_MODEL)


def test_start(model):
    inventory, machine = model
    st = tracker.start(machine, inventory)
    assert st.current == "S0" and st.depth == 0 and st.history == () and st.event_log == ()
    assert not tracker.is_complete(st)


def test_initial_final_machine_complete_immediately():
    text = "[acts]\n" + "".join(f"{a} phase\n" for a in CORE_ACTS) + "[machine]\ninitial S\nfinal S\n"
    inv, m = load_model(text)
    assert tracker.is_complete(tracker.start(m, inv))


def test_excerpt_accepted_without_failure(machine, inventory):
    st = tracker.run(machine, inventory, EX)
    assert [e.kind for e in st.event_log] == ["accepted"] * 6
    assert tracker.inconsistencies(st) == 0


def test_fixture_dialogues_complete(machine, inventory):
    for seq in (D1, D2):
        st = tracker.run(machine, inventory, seq)
        assert tracker.is_complete(st) and tracker.inconsistencies(st) == 0


def test_mid_negotiation_farewell(machine, inventory, tiny_predictor):
    st = tracker.run(machine, inventory, [BEG, INIT, VOR])
    st2, ev = tracker.step(st, VERAB, tiny_predictor)
    kinds = [e.kind for e in st2.event_log[len(st.event_log):]]
    assert kinds == ["inconsistency", "fallback-applied"]
    # S9 is the only state with an incoming VERABSCHIEDUNG transition
    assert ev.to_state == "S9" and st2.current == "S9"
    assert machine.states_entered_by(VERAB) == ("S9",)


def test_unknown_act_leaves_state(machine, inventory):
    st = tracker.start(machine, inventory)
    with pytest.raises(UnknownActError):
        tracker.step(st, "FROBNICATE")
    assert st.history == ()


def test_nested_clarification_restores_state(clar):
    inv, m = clar
    st = tracker.run(m, inv, ["BEGRUESSUNG", "VORSCHLAG"])
    saved = st.current
    for act in ["KLAER_AUF", "VORSCHLAG", "KLAER_AUF", "KLAER_ZU", "KLAER_ZU"]:
        st, _ = tracker.step(st, act)
        assert st.depth == st.clarification_stack.__len__()
    assert st.depth == 0 and st.current == saved
    kinds = [e.kind for e in st.event_log]
    assert kinds.count("clarification-opened") == 2 and kinds.count("clarification-closed") == 2


def test_close_on_empty_stack_is_inconsistency(clar):
    inv, m = clar
    st = tracker.run(m, inv, ["BEGRUESSUNG", "KLAER_ZU"])
    assert tracker.inconsistencies(st) == 1 and st.depth == 0


def test_final_with_open_clarification_not_complete(clar):
    inv, m = clar
    st = tracker.run(m, inv, ["BEGRUESSUNG", "VERABSCHIEDUNG", "KLAER_AUF"])
    assert st.current == "S2"
    assert not tracker.is_complete(st)


def test_anywhere_act_keeps_state(clar):
    inv, m = clar
    st = tracker.run(m, inv, ["BEGRUESSUNG"])
    st2, ev = tracker.step(st, "UEBERLEGEN")
    assert ev.kind == "anywhere-accepted" and st2.current == st.current
    assert st2.history[-1] == "UEBERLEGEN"


def test_fallback_rules(clar, inventory):
    inv, m = clar
    st = tracker.run(m, inv, ["BEGRUESSUNG"])
    # single candidate regardless of predictor
    assert tracker.fallback(st, "BEGRUESSUNG") == "S1"
    # no candidate: stay
    assert tracker.fallback(st, "AKZEPTANZ") == "S1"
    # several candidates without predictor: stay
    st0 = tracker.start(m, inv)
    assert m.states_entered_by("VORSCHLAG") == ("S1", "S2")
    assert tracker.fallback(st0, "VORSCHLAG") == "S0"


def test_fallback_scores_outgoing_mass(clar):
    from dialact.predictor import InterpolationWeights, Predictor, count_sequences

    inv, m = clar
    st = tracker.start(m, inv)
    # S1 leaves on VORSCHLAG/VERABSCHIEDUNG, S2 has no outgoing labels
    tables = count_sequences(inv.acts, [["VORSCHLAG", "VORSCHLAG", "VERABSCHIEDUNG"]])
    pred = Predictor(tables, InterpolationWeights(1, 0, 0))
    assert tracker.fallback(st, "VORSCHLAG", pred) == "S1"
    # tie (both zero mass) goes to the earliest-defined candidate
    tables = count_sequences(inv.acts, [["ABLEHNUNG"]])
    pred = Predictor(tables, InterpolationWeights(1, 0, 0))
    assert tracker.fallback(st, "ABLEHNUNG", pred) == "S1"


def test_totality_and_event_discipline(machine, inventory, tiny_predictor):
    rng = random.Random(7)
    terminal = {"accepted", "anywhere-accepted", "clarification-opened", "clarification-closed", "fallback-applied"}
    for _ in range(300):
        seq = [rng.choice(inventory.acts) for _ in range(rng.randint(0, 20))]
        st = tracker.start(machine, inventory)
        for act in seq:
            before = len(st.event_log)
            st, ev = tracker.step(st, act, tiny_predictor)
            new = st.event_log[before:]
            assert ev.kind in terminal and new[-1] == ev
            assert len(new) == (2 if new[0].kind == "inconsistency" else 1)
            if len(new) == 2:
                assert new[1].kind == "fallback-applied"
            assert st.current in machine.states


def test_replay_determinism(machine, inventory, tiny_predictor):
    seq = [BEG, VOR, AKZ, VERAB, INIT, ABL, BEST]
    a = tracker.run(machine, inventory, seq, tiny_predictor)
    b = tracker.run(machine, inventory, seq, tiny_predictor)
    assert a.event_log == b.event_log


def test_conformant_walks_have_no_inconsistency(machine, inventory):
    rng = random.Random(11)
    for _ in range(200):
        state, seq = machine.initial, []
        for _ in range(rng.randint(0, 25)):
            options = machine.outgoing_labels(state)
            if not options:
                break
            act = rng.choice(options)
            seq.append(act)
            state = machine.next_state(state, act)
        assert tracker.inconsistencies(tracker.run(machine, inventory, seq)) == 0


def test_event_log_round_trip(machine, inventory):
    st = tracker.run(machine, inventory, [BEG, VOR, INIT])
    text = tracker.format_log(st.event_log)
    assert tracker.parse_log(text) == list(st.event_log)
    assert text.splitlines()[0] == "accepted\tBEGRUESSUNG\tS0\tS1"
    assert TrackerEvent.parse("inconsistency\tX\tA\tA").is_inconsistent
