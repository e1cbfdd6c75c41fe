"""Frame rendering: panel times, formats, byte stability, and the mass
layout of the standard run under each theory."""

import json

import numpy as np
import pytest

from mzsim.engines import run_at, run_ct, run_st
from mzsim.packets import ConfigurationError, GridSpec
from mzsim.render import (
    DEFAULT_GRID,
    csv_bytes,
    default_panel_times,
    packet_to_json,
    pgm_bytes,
    record_to_json,
    render_frames,
    save_frames,
    stats_to_csv,
    stats_to_text,
)
from mzsim.harness import run_ensemble
from mzsim.rng import run_stream
from mzsim.scenarios import builtin_scenario

SMALL = GridSpec(-1000.0, 1800.0, -1000.0, 1800.0, nx=128, ny=128)


def _boxmass(frame, x0, x1, y0, y1):
    spec = frame.spec
    x, y = spec.axes()
    mx = (x >= x0) & (x <= x1)
    my = (y >= y0) & (y <= y1)
    return float(frame.values[np.ix_(my, mx)].sum()) * spec.dx * spec.dy


def _ct_record(seed=0):
    return run_ct(builtin_scenario("be"), rng=run_stream(seed, 0), source_id="S1")


def test_default_panel_times():
    assert default_panel_times(8000.0) == (
        1990.0,
        3000.0,
        5000.0,
        6010.0,
        7990.0,
        8010.0,
    )


def test_default_times_clamped_for_bounded_theories():
    assert render_frames(_ct_record(), spec=SMALL).times[-1] == 8010.0
    at_rec = run_at(builtin_scenario("be"), rng=run_stream(0, 0), detector_id="D1")
    assert render_frames(at_rec, spec=SMALL).times[-1] == 8000.0
    st_rec = run_st(builtin_scenario("be"), "S1", "D1")
    assert render_frames(st_rec, spec=SMALL).times[-1] == 8000.0
    with pytest.raises(ConfigurationError):
        render_frames(st_rec, times=(8100.0,), spec=SMALL)


def test_retarded_panel_masses():
    seq = render_frames(_ct_record(), times=(1990.0, 3000.0, 7990.0, 8010.0))
    assert seq.record_theory == "ct" and seq.scenario_name == "be"
    f = dict(zip(seq.times, seq.frames))
    # before the first splitter: one blob just short of it
    assert f[1990.0].mass() == pytest.approx(1.0, abs=1e-6)
    assert _boxmass(f[1990.0], -300, 300, -300, 300) == pytest.approx(1.0, abs=1e-4)
    # mid-arm: half the mass on each arm
    up = _boxmass(f[3000.0], -300, 300, 100, 700)
    low = _boxmass(f[3000.0], 100, 700, -300, 300)
    assert up == pytest.approx(0.5, abs=0.01)
    assert low == pytest.approx(0.5, abs=0.01)
    # after the recombiner everything heads to the bright detector; the
    # route to the dark one carries nothing
    bright = _boxmass(f[7990.0], 1100, 1800, 500, 1100)
    dark_rel = _boxmass(f[7990.0], 600, 1000, 1100, 1800) / f[7990.0].mass()
    assert bright / f[7990.0].mass() > 0.99
    assert dark_rel < 1e-9
    # past detection: a tight collapsed spot at the bright detector
    late = f[8010.0]
    assert late.mass() == pytest.approx(1.0, abs=1e-5)
    assert _boxmass(late, 1550, 1650, 750, 850) > 0.999


def test_advanced_panels_use_forward_clock():
    rec = run_at(builtin_scenario("be"), rng=run_stream(0, 0), detector_id="D1")
    seq = render_frames(rec, times=(1990.0, 8000.0))
    f = dict(zip(seq.times, seq.frames))
    # early forward time shows the backward wave near the first splitter,
    # mirroring the retarded picture
    assert _boxmass(f[1990.0], -300, 300, -300, 300) == pytest.approx(1.0, abs=1e-3)
    # at the boundary the wave sits on its emitting detector
    end = f[8000.0]
    x, y = end.spec.axes()
    iy, ix = np.unravel_index(np.argmax(end.values), end.values.shape)
    assert x[ix] == pytest.approx(1600.0, abs=2.0 * end.spec.dx)
    assert y[iy] == pytest.approx(800.0, abs=2.0 * end.spec.dy)


def test_two_boundary_product_lights_both_arms():
    rec = run_st(builtin_scenario("be"), "S1", "D1")
    seq = render_frames(rec, times=(4000.0,))
    frame = seq.frames[0]
    up = _boxmass(frame, -300, 300, 500, 1100)
    low = _boxmass(frame, 500, 1100, -300, 300)
    assert up > 0.1 and low > 0.1
    assert up == pytest.approx(low, rel=1e-9)  # symmetric layout


def test_two_boundary_gated_pair_renders_empty():
    rec = run_st(builtin_scenario("be"), "S1", "D2")
    seq = render_frames(rec, spec=SMALL)
    assert seq.global_max == 0.0
    assert all(f.mass() == 0.0 for f in seq.frames)
    raw = pgm_bytes(seq.frames[0], seq.global_max)
    body = raw.split(b"65535\n", 1)[1]
    assert set(body) == {0}


def test_rendering_is_byte_stable():
    a = render_frames(_ct_record(seed=3), spec=SMALL)
    b = render_frames(_ct_record(seed=3), spec=SMALL)
    assert a.times == b.times
    for fa, fb in zip(a.frames, b.frames):
        assert pgm_bytes(fa, a.global_max) == pgm_bytes(fb, b.global_max)
        assert csv_bytes(fa) == csv_bytes(fb)


def test_pgm_format():
    seq = render_frames(_ct_record(), times=(3000.0,), spec=SMALL)
    raw = pgm_bytes(seq.frames[0], seq.global_max)
    header, body = raw.split(b"65535\n", 1)
    assert header == b"P5\n128 128\n"
    assert len(body) == 128 * 128 * 2
    pixels = np.frombuffer(body, dtype=">u2")
    assert int(pixels.max()) == 65535  # the global peak maps to full scale


def test_csv_format_roundtrip():
    seq = render_frames(_ct_record(), times=(3000.0,), spec=SMALL)
    frame = seq.frames[0]
    text = csv_bytes(frame).decode("ascii")
    lines = text.strip().split("\n")
    assert lines[0].startswith("# nx=128 ny=128 x_min=-1000.0")
    assert "time=3000.0" in lines[0]
    assert lines[1] == "# row-major, first row at y_max"
    rows = lines[2:]
    assert len(rows) == 128
    parsed = np.array([[float(v) for v in row.split(",")] for row in rows])
    assert np.array_equal(parsed, frame.values)  # %.17g is lossless


def test_save_frames(tmp_path):
    seq = render_frames(_ct_record(), times=(1990.0, 8010.0), spec=SMALL)
    written = save_frames(seq, str(tmp_path))
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [
        "frame000.csv",
        "frame000.pgm",
        "frame001.csv",
        "frame001.pgm",
        "frame_meta.json",
    ]
    assert len(written) == 5
    meta = json.loads((tmp_path / "frame_meta.json").read_text())
    assert meta["theory"] == "ct"
    assert meta["times"] == [1990.0, 8010.0]
    assert meta["grid"]["nx"] == 128
    assert meta["global_max"] == seq.global_max


def test_record_to_json_shapes():
    ct = record_to_json(_ct_record())
    assert ct["theory"] == "ct"
    assert ct["source"] == "S1" and ct["detector"] == "D1"
    assert len(ct["collapse_events"]) == 1
    assert ct["collapse_events"][0]["kind"] == "detection"
    assert ct["collapse_events"][0]["probabilities"]["D1"] == pytest.approx(1.0)
    assert ct["segments"][-1]["to"] is None  # collapsed state never expires
    assert "weight" not in ct

    st = record_to_json(run_st(builtin_scenario("ce"), "S1", "D2", mode="collapse"))
    assert st["weight"] == pytest.approx(0.5)
    assert st["forced_leg"] == "forward"
    assert st["forced_arm"] == "lower"
    assert st["backward_segments"]
    assert st["collapse_events"] == []
    json.dumps(st)  # everything is serializable


def test_packet_to_json():
    p = _ct_record().segments[0].packet
    d = packet_to_json(p)
    assert d["origin"] == [-800.0, 0.0]
    assert d["amplitude"] == [1.0, 0.0]
    assert d["lineage"] == [["S1", "emit"]]


def test_stats_serializers():
    stats = run_ensemble(builtin_scenario("be"), "ct", n=50, seed=0)
    csv = stats_to_csv(stats)
    lines = csv.strip().split("\n")
    assert lines[0] == "index,source,detector,count,probability,expected"
    assert len(lines) == 5
    text = stats_to_text(stats)
    assert "scenario be" in text
    assert "consistent" in text
    assert "ensemble 1 (S1,D1)" in text
