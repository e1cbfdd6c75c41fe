"""Live-session core: command handling, the choice window, scoreboards,
and log replay.  Sessions here are driven by explicit step commands."""

import base64

import numpy as np
import pytest

from mzsim.packets import ConfigurationError
from mzsim.service import PROTOCOL_VERSION, Session, replay_log
from mzsim.scenarios import builtin_scenario


def _session(scenario="me", theory="ct", mode="always-split", seed=0, cadence=10.0):
    return Session(scenario, theory=theory, mode=mode, seed=seed, cadence=cadence)


def _ok(s, **cmd):
    resp = s.apply_command(cmd)
    assert resp["ok"], resp
    return resp


def _rejected(s, **cmd):
    resp = s.apply_command(cmd)
    assert not resp["ok"], resp
    return resp["error"]


def test_session_validation():
    with pytest.raises(ConfigurationError):
        Session("be", theory="zz")
    with pytest.raises(ConfigurationError):
        Session("be", cadence=0.0)
    with pytest.raises(ConfigurationError):
        Session("nope")


def test_initial_state():
    s = _session()
    ev = s.state_event()
    assert ev["v"] == PROTOCOL_VERSION
    assert ev["phase"] == "idle"
    assert ev["clock"] == 0.0
    assert ev["packets"] == [] and ev["density"] is None
    by_id = {e["id"]: e for e in ev["elements"]}
    assert by_id["B2"]["present"] is False  # open layout
    assert by_id["B2"]["toggleable"] is True
    assert by_id["M1"]["toggleable"] is False


def test_run_lifecycle_and_detection():
    s = _session(seed=3)
    r = _ok(s, type="start_run")
    assert r["run_index"] == 0
    assert s.phase == "running" and s.clock == 0.0
    _ok(s, type="step", dt=1000.0)
    assert s.clock == 1000.0
    ev = s.state_event()
    assert len(ev["packets"]) == 1  # still before the first splitter
    assert ev["packets"][0]["weight"] == pytest.approx(1.0)
    _ok(s, type="step", dt=7100.0)
    assert s.phase == "detected"
    assert s.clock == pytest.approx(8000.0, abs=1e-6)
    assert sum(s.scoreboard.values()) == 1
    events = s.heartbeat()
    kinds = [e["type"] for e in events]
    assert kinds == ["run_started", "detection", "state"]
    det = events[1]
    assert det["v"] == PROTOCOL_VERSION
    assert det["run_index"] == 0
    assert det["ensemble"] in (1, 2, 3, 4)
    assert s.phase == "idle"  # heartbeat resolved the transient phase
    r = _ok(s, type="start_run")
    assert r["run_index"] == 1


def test_step_requires_active_run():
    s = _session()
    assert "cannot step" in _rejected(s, type="step", dt=100.0)
    _ok(s, type="start_run")
    assert "dt" in _rejected(s, type="step", dt=-5.0)
    _ok(s, type="pause")
    assert "cannot step" in _rejected(s, type="step", dt=100.0)


def test_pause_resume_set_rate():
    s = _session()
    assert "cannot pause" in _rejected(s, type="pause")
    _ok(s, type="start_run")
    _ok(s, type="pause")
    assert s.phase == "paused"
    assert "cannot resume" not in _ok(s, type="resume")
    assert _ok(s, type="set_rate", rate=120.0)["rate"] == 120.0
    assert "rate" in _rejected(s, type="set_rate", rate=0.0)
    assert "unknown command" in _rejected(s, type="warp")


def test_density_snapshot_shape():
    s = _session(seed=1)
    _ok(s, type="start_run")
    _ok(s, type="step", dt=3000.0)
    d = s.state_event()["density"]
    assert d["nx"] == 64 and d["ny"] == 64
    raw = np.frombuffer(base64.b64decode(d["data"]), dtype=np.uint8)
    assert raw.size == 64 * 64
    assert raw.max() == 255  # normalized to the current frame
    assert d["max"] > 0.0


def test_idle_toggles_stage_for_next_run():
    s = _session("be")  # closed layout, B2 present
    r = _ok(s, type="remove", element="B2")
    assert r["staged"] is True and r["effective_time"] is None
    assert s.toggle_state["B2"] is False
    _ok(s, type="start_run")
    # the staged removal shaped this run from t = 0
    assert not any(
        "B2" in dict(seg.packet.lineage) for seg in s._record.segments
    )
    assert "not toggleable" in _rejected(s, type="remove", element="M1")


def test_mid_run_edit_quantizes_up_to_cadence():
    s = _session()  # me: B2 absent
    _ok(s, type="start_run")
    _ok(s, type="step", dt=4998.3)
    r = _ok(s, type="insert", element="B2")
    assert r["effective_time"] == 5000.0
    # the run was rebuilt as a delayed-insertion layout: interference is
    # back, so the bright detector takes everything
    probs = dict(s._record.collapse_events[0].probabilities)
    assert max(probs.values()) == pytest.approx(1.0, abs=1e-12)


def test_mid_run_edit_on_exact_grid_point():
    s = _session()
    _ok(s, type="start_run")
    _ok(s, type="step", dt=4000.0)
    r = _ok(s, type="insert", element="B2")
    assert r["effective_time"] == 4000.0


def test_duplicate_toggle_is_a_noop():
    s = _session()
    _ok(s, type="start_run")
    _ok(s, type="step", dt=1000.0)
    r = _ok(s, type="remove", element="B2")  # already absent
    assert r.get("noop") is True
    assert all(e["type"] != "remove" for e in s.command_log)


def test_choice_window_rejects_late_edits():
    s = _session()
    _ok(s, type="start_run")
    _ok(s, type="step", dt=5995.0)
    # branches hit the recombiner position at ~6000; the edit would land
    # exactly when they are there
    assert "choice window" in _rejected(s, type="insert", element="B2")
    _ok(s, type="step", dt=5.0)
    assert "choice window" in _rejected(s, type="insert", element="B2")
    # once they are safely past, the edit is allowed again
    _ok(s, type="step", dt=300.0)
    r = _ok(s, type="insert", element="B2")
    assert r["effective_time"] == 6300.0
    # rejected commands leave no trace in the log
    assert sum(e["type"] == "insert" for e in s.command_log) == 1


def test_edits_after_detection_are_rejected():
    s = _session()
    _ok(s, type="start_run")
    _ok(s, type="step", dt=9000.0)
    assert s.phase == "detected"
    assert "already detected" in _rejected(s, type="insert", element="B2")


def test_delayed_choice_insertions_restore_exclusions():
    # operator script: launch on the open layout, insert the recombiner at
    # 5000 every run; only the closed-layout ensembles ever fire
    s = _session(seed=11)
    for _ in range(8):
        _ok(s, type="start_run")
        _ok(s, type="step", dt=5000.0)
        _ok(s, type="insert", element="B2")
        _ok(s, type="step", dt=4000.0)
        assert s.phase == "detected"
        s.heartbeat()
        _ok(s, type="remove", element="B2")  # re-stage the open layout
    assert sum(s.scoreboard.values()) == 8
    assert set(s.scoreboard) <= {("S1", "D1"), ("S2", "D2")}


def test_reset_scoreboard():
    s = _session(seed=2)
    _ok(s, type="start_run")
    _ok(s, type="step", dt=9000.0)
    s.heartbeat()
    assert s.scoreboard
    _ok(s, type="reset_scoreboard")
    assert s.scoreboard == {}


def test_two_boundary_sessions_fix_choices_at_launch():
    s = _session(theory="st", mode="collapse", scenario="ce", seed=5)
    _ok(s, type="start_run")
    _ok(s, type="step", dt=2000.0)
    err = _rejected(s, type="remove", element="B2")
    assert "fixed at launch" in err
    ev = s.state_event()
    legs = {p["leg"] for p in ev["packets"]}
    assert legs == {"forward", "backward"}
    _ok(s, type="step", dt=7000.0)
    assert s.phase == "detected"
    assert sum(s.scoreboard.values()) == 1


def test_advanced_sessions_run_the_reversed_layout():
    s = _session(theory="at", scenario="me", seed=4)
    outcomes = set()
    for _ in range(12):
        _ok(s, type="start_run")
        _ok(s, type="step", dt=9000.0)
        s.heartbeat()
    outcomes = set(s.scoreboard)
    # forward-convention scoreboard keys even though the wave ran backward
    assert all(src in ("S1", "S2") and det in ("D1", "D2") for src, det in outcomes)
    assert len(outcomes) >= 3  # open layout spreads over the ensembles
    assert sum(s.scoreboard.values()) == 12


def test_replay_log_reproduces_session():
    s = _session(seed=11)
    for _ in range(5):
        _ok(s, type="start_run")
        _ok(s, type="step", dt=5000.0)
        _ok(s, type="insert", element="B2")
        _ok(s, type="step", dt=4000.0)
        s.heartbeat()
        _ok(s, type="remove", element="B2")
    replayed = replay_log("me", "ct", "always-split", 11, s.command_log)
    assert replayed.scoreboard == s.scoreboard
    assert replayed.run_counter == s.run_counter
    assert replayed.toggle_state == s.toggle_state
    assert replayed.command_log == s.command_log


def test_replay_log_rejects_inconsistent_history():
    s = _session(seed=11)
    _ok(s, type="start_run")
    _ok(s, type="step", dt=5000.0)
    _ok(s, type="insert", element="B2")
    log = [dict(e) for e in s.command_log]
    # claim the insert happened inside the choice window
    log[2]["clock"] = 5996.0
    with pytest.raises(ConfigurationError):
        replay_log("me", "ct", "always-split", 11, log)
