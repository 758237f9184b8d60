"""Protocol state machine: transitions, dosing gates, rejection semantics."""

import dataclasses
from decimal import Decimal

import pytest

from cprflow import engine
from cprflow.clock import Duration, VirtualTimeSource
from cprflow.engine import (
    Command,
    CommandKind as C,
    DosingConfig,
    EventKind as E,
    Phase,
    adrenaline_due,
    amiodarone_due,
    elapsed,
    enabled_commands,
    new_session,
)
from support import Driver, drive_to_asystole, drive_to_vfvt


def kinds(events):
    return [e.kind for e in events]


# --- session start ------------------------------------------------------------


def test_new_session_initial_state():
    d = Driver()
    assert d.state.phase is Phase.ANALYSIS
    assert d.state.defib_count == 0
    assert d.state.adrenaline_doses == ()
    assert d.state.amiodarone_doses == ()


def test_new_session_emits_started_then_analysis():
    d = Driver()
    assert [(e.seq, e.kind) for e in d.events] == [
        (1, E.SESSION_STARTED),
        (2, E.ANALYSIS_OPENED),
    ]
    assert all(e.at.monotonic_nanos == 0 for e in d.events)


def test_fresh_session_enables_analyze_and_compression():
    d = Driver()
    assert C.ANALYZE_RHYTHM in d.enabled()
    assert C.START_COMPRESSION in d.enabled()


# --- navigation ----------------------------------------------------------------


def test_analyze_rhythm_opens_selection():
    d = Driver()
    out = d.do(C.ANALYZE_RHYTHM, at_s=2)
    assert d.state.phase is Phase.RHYTHM_SELECTION
    assert kinds(out) == [E.RHYTHM_SELECTION_OPENED]


def test_select_vfvt_and_return():
    d = Driver()
    d.do(C.ANALYZE_RHYTHM, at_s=2)
    out = d.do(C.SELECT_VF_VT, at_s=4)
    assert d.state.phase is Phase.VF_VT
    assert out[0].kind is E.RHYTHM_SELECTED
    assert out[0].payload["rhythm"] == "vf_vt"
    out = d.do(C.RETURN_TO_ANALYSIS, at_s=6)
    assert d.state.phase is Phase.ANALYSIS
    assert kinds(out) == [E.ANALYSIS_OPENED]


def test_end_session_only_from_rhythm_selection():
    d = Driver()
    assert d.do(C.END_SESSION, at_s=1)[0].kind is E.COMMAND_REJECTED
    d.do(C.ANALYZE_RHYTHM, at_s=2)
    out = d.do(C.END_SESSION, at_s=4)
    assert kinds(out) == [E.SESSION_ENDED]
    assert d.state.phase is Phase.ENDED


def test_ended_phase_enables_nothing_and_rejects_terminal():
    d = Driver()
    d.do(C.ANALYZE_RHYTHM, at_s=2)
    d.do(C.END_SESSION, at_s=4)
    assert d.enabled() == set()
    out = d.do(C.ADD_NOTE, at_s=6, text="too late")
    assert out[0].kind is E.COMMAND_REJECTED
    assert out[0].payload["reason"] == "terminal-phase"
    assert d.state.notes == ()


def test_idle_state_enables_only_start():
    state = engine.initial_state(DosingConfig())
    now = VirtualTimeSource().now()
    assert enabled_commands(state, now) == frozenset({C.START_SESSION})


# --- defibrillation and amiodarone ----------------------------------------------


def test_third_defibrillation_announces_both_drugs():
    d = Driver()
    drive_to_vfvt(d, defibs=2)
    out = d.do(C.DEFIBRILLATE, at_s=10)
    assert d.state.defib_count == 3
    assert kinds(out) == [E.DEFIBRILLATION_DELIVERED, E.ADRENALINE_DUE, E.AMIODARONE_DUE]
    assert out[0].payload["ordinal"] == 3


def test_defibrillate_only_in_vfvt():
    d = Driver()
    assert d.do(C.DEFIBRILLATE, at_s=1)[0].kind is E.COMMAND_REJECTED
    drive_to_asystole(d)
    assert d.do(C.DEFIBRILLATE, at_s=2)[0].kind is E.COMMAND_REJECTED


def test_amiodarone_due_at_odd_counts_from_three():
    d = Driver()
    drive_to_vfvt(d)
    expectations = {1: False, 2: False, 3: True, 4: False, 5: True, 6: False, 7: True}
    for count in range(1, 8):
        d.do(C.DEFIBRILLATE, at_s=count * 5)
        assert amiodarone_due(d.state) is expectations[count], f"count {count}"
        if expectations[count]:
            d.do(C.ADMINISTER_AMIODARONE, at_s=count * 5 + 1)
            assert not amiodarone_due(d.state)


def test_amiodarone_not_due_when_skipped_until_next_odd_count():
    # skipping the dose at count 3 leaves it unavailable at the even count
    d = Driver()
    drive_to_vfvt(d, defibs=3)
    d.do(C.DEFIBRILLATE, at_s=20)
    assert d.state.defib_count == 4
    assert not amiodarone_due(d.state)
    assert C.ADMINISTER_AMIODARONE not in d.enabled()
    d.do(C.DEFIBRILLATE, at_s=25)
    assert amiodarone_due(d.state)


def test_amiodarone_doses_first_300_then_150():
    d = Driver()
    drive_to_vfvt(d, defibs=3)
    first = d.do(C.ADMINISTER_AMIODARONE, at_s=10)
    d.do(C.DEFIBRILLATE, at_s=15)
    d.do(C.DEFIBRILLATE, at_s=20)
    second = d.do(C.ADMINISTER_AMIODARONE, at_s=25)
    assert first[0].payload["mg"] == Decimal(300)
    assert second[0].payload["mg"] == Decimal(150)
    assert [dose.defib_count_at_dose for dose in d.state.amiodarone_doses] == [3, 5]


def test_amiodarone_due_zero_defibs_false():
    d = Driver()
    assert not amiodarone_due(d.state)


# --- adrenaline timing -----------------------------------------------------------


def test_adrenaline_due_when_never_dosed():
    d = Driver()
    assert adrenaline_due(d.state, d.now)


def test_adrenaline_interval_boundary_inclusive():
    d = Driver()
    drive_to_asystole(d)
    d.do(C.ADMINISTER_ADRENALINE, at_s=10)
    d.goto(249)
    assert not adrenaline_due(d.state, d.now)  # 239 s after the dose
    d.goto(250)
    assert adrenaline_due(d.state, d.now)  # exactly 240 s


def test_adrenaline_tracking_is_global_across_rhythm_changes():
    d = Driver()
    drive_to_vfvt(d, defibs=3)
    d.do(C.ADMINISTER_ADRENALINE, at_s=270)
    d.do(C.RETURN_TO_ANALYSIS, at_s=280)
    d.do(C.ANALYZE_RHYTHM, at_s=282)
    d.do(C.SELECT_ASYSTOLE_PEA, at_s=284)
    d.goto(400)
    assert not adrenaline_due(d.state, d.now)  # 130 s since the VF/VT dose
    d.goto(510)
    assert adrenaline_due(d.state, d.now)


def test_early_repeat_dose_rejected_without_side_effects():
    d = Driver()
    drive_to_asystole(d)
    d.do(C.ADMINISTER_ADRENALINE, at_s=10)
    before = d.state
    out = d.do(C.ADMINISTER_ADRENALINE, at_s=110)  # 100 s later
    assert out[0].kind is E.COMMAND_REJECTED
    assert out[0].payload["reason"] == "not-enabled"
    assert d.state == dataclasses.replace(
        before, event_seq=before.event_seq + 1, last_event_at=out[0].at
    )


def test_vfvt_adrenaline_needs_three_defibs_even_when_never_dosed():
    d = Driver()
    drive_to_vfvt(d, defibs=1)
    assert adrenaline_due(d.state, d.now)  # spacing alone is satisfied
    assert C.ADMINISTER_ADRENALINE not in d.enabled()
    out = d.do(C.ADMINISTER_ADRENALINE, at_s=30)
    assert out[0].kind is E.COMMAND_REJECTED


def test_asystole_has_no_defib_gate_on_adrenaline():
    d = Driver()
    drive_to_asystole(d)
    out = d.do(C.ADMINISTER_ADRENALINE, at_s=5)
    assert kinds(out) == [E.ADRENALINE_GIVEN]
    assert out[0].payload["mg"] == Decimal(1)


# --- due reminders are edge-triggered --------------------------------------------


def test_due_reminder_not_repeated_while_condition_holds():
    d = Driver()
    drive_to_vfvt(d, defibs=3)
    due_events = [e for e in d.events if e.kind is E.ADRENALINE_DUE]
    assert len(due_events) == 1
    for s in range(1, 30):
        d.do(C.TICK, at_s=20 + s)
    due_events = [e for e in d.events if e.kind is E.ADRENALINE_DUE]
    assert len(due_events) == 1


def test_due_reminder_reannounced_after_phase_reentry():
    d = Driver()
    drive_to_vfvt(d, defibs=3)
    d.do(C.RETURN_TO_ANALYSIS, at_s=30)
    d.do(C.ANALYZE_RHYTHM, at_s=32)
    out = d.do(C.SELECT_VF_VT, at_s=34)
    assert kinds(out) == [E.RHYTHM_SELECTED, E.ADRENALINE_DUE, E.AMIODARONE_DUE]


def test_due_reminder_fires_on_tick_when_interval_elapses():
    d = Driver()
    drive_to_asystole(d)
    d.do(C.ADMINISTER_ADRENALINE, at_s=10)
    assert d.tick_until(249) == []
    out = d.do(C.TICK, at_s=250)
    assert kinds(out) == [E.ADRENALINE_DUE]


def test_entering_asystole_announces_when_due():
    d = Driver()
    d.do(C.ANALYZE_RHYTHM, at_s=2)
    out = d.do(C.SELECT_ASYSTOLE_PEA, at_s=4)
    assert kinds(out) == [E.RHYTHM_SELECTED, E.ADRENALINE_DUE]


def test_dose_clears_reminder_and_later_interval_reannounces():
    d = Driver()
    drive_to_asystole(d)
    d.do(C.ADMINISTER_ADRENALINE, at_s=6)
    d.tick_until(245)
    first = d.do(C.TICK, at_s=246)
    assert kinds(first) == [E.ADRENALINE_DUE]
    d.do(C.ADMINISTER_ADRENALINE, at_s=248)
    d.tick_until(487)
    second = d.do(C.TICK, at_s=488)
    assert kinds(second) == [E.ADRENALINE_DUE]


# --- compression countdown through the engine -------------------------------------


def test_compression_lockout_until_finished():
    d = Driver()
    d.do(C.START_COMPRESSION, at_s=2)
    assert C.START_COMPRESSION not in d.enabled()
    out = d.do(C.START_COMPRESSION, at_s=10)
    assert out[0].kind is E.COMMAND_REJECTED
    d.tick_until(122)
    assert d.state.active_countdown is None
    assert C.START_COMPRESSION in d.enabled()


def test_compression_finish_does_not_change_phase():
    d = Driver()
    drive_to_vfvt(d)
    d.do(C.START_COMPRESSION, at_s=10)
    events = d.tick_until(130)
    assert E.COMPRESSION_FINISHED in kinds(events)
    assert d.state.phase is Phase.VF_VT


def test_compression_events_appear_in_order():
    d = Driver()
    d.do(C.START_COMPRESSION, at_s=0)
    events = d.tick_until(120)
    seq = [e.kind for e in events]
    assert seq[0] is E.COMPRESSION_WARNING
    assert seq.count(E.COMPRESSION_BLINK) == 11
    assert seq[-1] is E.COMPRESSION_FINISHED
    marks = [e.payload["second_mark"] for e in events if e.kind is E.COMPRESSION_BLINK]
    assert marks == list(range(10, -1, -1))


def test_countdown_survives_navigation():
    d = Driver()
    d.do(C.START_COMPRESSION, at_s=2)
    d.do(C.ANALYZE_RHYTHM, at_s=5)
    d.do(C.SELECT_VF_VT, at_s=8)
    events = d.tick_until(125)
    assert E.COMPRESSION_FINISHED in kinds(events)


# --- timestamps and rejection bookkeeping ------------------------------------------


def test_non_monotonic_command_rejected_with_clamped_stamp():
    d = Driver()
    d.do(C.ANALYZE_RHYTHM, at_s=10)
    stale = Command(C.SELECT_VF_VT, at=VirtualTimeSource(wall_epoch=d.state.session_start.wall_time).now())
    state, out = engine.apply(d.state, stale)
    assert out[0].kind is E.COMMAND_REJECTED
    assert out[0].payload["reason"] == "non-monotonic-time"
    assert out[0].at.monotonic_nanos == 10 * 10**9  # stamped at the log head
    assert out[0].payload["command_monotonic_ns"] == 0
    assert state.phase is Phase.RHYTHM_SELECTION


def test_rejection_delta_is_only_the_event():
    d = Driver()
    before = d.state
    out = d.do(C.DEFIBRILLATE, at_s=3)
    assert out[0].kind is E.COMMAND_REJECTED
    assert d.state == dataclasses.replace(
        before, event_seq=before.event_seq + 1, last_event_at=out[0].at
    )


def test_event_seq_gapless_and_time_monotone_through_walkthrough():
    d = Driver()
    drive_to_vfvt(d, defibs=3)
    d.do(C.ADMINISTER_ADRENALINE, at_s=10)
    d.do(C.ADMINISTER_AMIODARONE, at_s=12)
    d.do(C.START_COMPRESSION, at_s=14)
    d.tick_until(140)
    seqs = [e.seq for e in d.events]
    assert seqs == list(range(1, len(seqs) + 1))
    stamps = [e.at.monotonic_nanos for e in d.events]
    assert stamps == sorted(stamps)


def test_same_instant_commands_allowed():
    d = Driver()
    d.do(C.ANALYZE_RHYTHM, at_s=5)
    out = d.do(C.SELECT_VF_VT, at_s=5)
    assert out[0].kind is E.RHYTHM_SELECTED


# --- elapsed -----------------------------------------------------------------------


def test_elapsed_at_origin_is_zero():
    d = Driver()
    assert elapsed(d.state, d.now) == Duration(0)


def test_elapsed_after_750s():
    d = Driver()
    d.goto(750)
    assert elapsed(d.state, d.now) == Duration.from_seconds(750)


def test_elapsed_rejects_times_before_start():
    src = VirtualTimeSource()
    early = src.now()
    src.advance(Duration.from_seconds(5))
    state, _ = new_session(DosingConfig(), src.now())
    with pytest.raises(ValueError):
        elapsed(state, early)


# --- notes -------------------------------------------------------------------------


def test_notes_allowed_in_every_active_phase():
    d = Driver()
    d.do(C.ADD_NOTE, at_s=1, text="in analysis")
    d.do(C.ANALYZE_RHYTHM, at_s=2)
    d.do(C.ADD_NOTE, at_s=3, text="in selection")
    d.do(C.SELECT_ASYSTOLE_PEA, at_s=4)
    d.do(C.ADD_NOTE, at_s=5, text="in asystole")
    assert [n.text for n in d.state.notes] == ["in analysis", "in selection", "in asystole"]


# --- enablement oracle ---------------------------------------------------------------


def _expected_enabled(state, now):
    """Independent straight-line restatement of the per-phase button rules."""
    due_adr = state.last_adrenaline_at is None or (
        now.monotonic_nanos - state.last_adrenaline_at.monotonic_nanos
        >= state.config.adrenaline_interval.nanos
    )
    due_ami = (
        state.defib_count >= 3
        and state.defib_count % 2 == 1
        and state.last_amiodarone_defib_count != state.defib_count
    )
    free = state.active_countdown is None
    table = {
        Phase.IDLE: {C.START_SESSION},
        Phase.ENDED: set(),
        Phase.ANALYSIS: {C.ANALYZE_RHYTHM, C.ADD_NOTE, C.TICK} | ({C.START_COMPRESSION} if free else set()),
        Phase.RHYTHM_SELECTION: {C.SELECT_ASYSTOLE_PEA, C.SELECT_VF_VT, C.END_SESSION, C.ADD_NOTE, C.TICK},
        Phase.ASYSTOLE_PEA: {C.RETURN_TO_ANALYSIS, C.ADD_NOTE, C.TICK}
        | ({C.START_COMPRESSION} if free else set())
        | ({C.ADMINISTER_ADRENALINE} if due_adr else set()),
        Phase.VF_VT: {C.DEFIBRILLATE, C.RETURN_TO_ANALYSIS, C.ADD_NOTE, C.TICK}
        | ({C.START_COMPRESSION} if free else set())
        | ({C.ADMINISTER_ADRENALINE} if due_adr and state.defib_count >= state.config.vfvt_adrenaline_min_defibs else set())
        | ({C.ADMINISTER_AMIODARONE} if due_ami else set()),
    }
    return frozenset(table[state.phase])


def test_enabled_sets_match_oracle_over_small_state_space():
    # enumerate reachable (phase, defib count, dosing) combinations
    for defibs in range(0, 6):
        for dose_adr in (False, True):
            for dose_ami in (False, True):
                for compress in (False, True):
                    d = Driver()
                    drive_to_vfvt(d, defibs=defibs)
                    t = 10 + defibs * 5
                    if dose_adr and C.ADMINISTER_ADRENALINE in d.enabled():
                        d.do(C.ADMINISTER_ADRENALINE, at_s=t)
                    if dose_ami and C.ADMINISTER_AMIODARONE in d.enabled():
                        d.do(C.ADMINISTER_AMIODARONE, at_s=t + 2)
                    if compress:
                        d.do(C.START_COMPRESSION, at_s=t + 4)
                    for probe_s in (t + 5, t + 300):
                        d.goto(probe_s)
                        assert enabled_commands(d.state, d.now) == _expected_enabled(d.state, d.now)
                    d.do(C.RETURN_TO_ANALYSIS)
                    assert enabled_commands(d.state, d.now) == _expected_enabled(d.state, d.now)


# --- replay determinism ----------------------------------------------------------------


def test_folding_commands_twice_is_bit_identical():
    from support import fold, random_walk

    config, commands = random_walk(seed=7, max_commands=120)
    state_a, events_a = fold(config, commands)
    state_b, events_b = fold(config, commands)
    assert state_a == state_b
    assert events_a == events_b
