import struct
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sfwm import io
from sfwm.cli import main
from sfwm.correlator import PAIRS, g2_matrix
from sfwm.emission import DETECTORS, TimeTagStream, simulate_run
from sfwm.model import desk_config, format_config

HDR = io._HEADER.size
REC0 = HDR + io._BLOCK.size


def write_cfg(path, **kw):
    path.write_text(format_config(desk_config(**kw)))
    return str(path)


def streams_from(trials_per_det, trial_ticks=1000, tick=100e-12):
    return {d: TimeTagStream.from_trials(d, [np.asarray(t, np.int64) for t in trials_per_det[i]],
                                         tick, trial_ticks)
            for i, d in enumerate(DETECTORS)}


trial_tags = st.lists(st.integers(0, 1000), max_size=30, unique=True).map(sorted)


@st.composite
def tag_sets(draw):
    n = draw(st.integers(0, 6))
    return [[draw(trial_tags) for _ in range(n)] for _ in DETECTORS]


class TestTagFile:
    @given(tag_sets())
    @settings(max_examples=100)
    def test_round_trip(self, trials):
        s = streams_from(trials)
        back = io.decode_tags(io.encode_tags(s))
        assert all(back[d].equals(s[d]) for d in DETECTORS)

    def test_layout(self):
        s = streams_from([[[3, 7]], [[]], [[1]], [[2**40]]], trial_ticks=2**41)
        data = io.encode_tags(s)
        assert data[:4] == b"SFWM"
        assert struct.unpack_from("<HIBIQ", data, 4) == (1, 100, 4, 1, 2**41)
        assert struct.unpack_from("<II", data, HDR) == (0, 4)
        rec = np.frombuffer(data[HDR + 8:], dtype=[("d", "u1"), ("t", "<u8")])
        assert rec["d"].tolist() == [0, 0, 2, 3] and rec["t"].tolist() == [3, 7, 1, 2**40]
        assert len(data) == HDR + 8 + 4 * 9

    def test_simulated_round_trip(self, tmp_path):
        s = simulate_run(desk_config(n_trials=5), threads=1)
        io.write_tags(tmp_path / "x.tags", s)
        back = io.read_tags(tmp_path / "x.tags")
        assert all(back[d].equals(s[d]) for d in DETECTORS)

    def corrupt(self, data, pos, value):
        b = bytearray(data)
        b[pos:pos + len(value)] = value
        return bytes(b)

    @pytest.fixture
    def blob(self):
        return io.encode_tags(streams_from([[[1, 5]], [[2]], [[]], [[9]]], trial_ticks=100))

    def test_bad_magic(self, blob):
        with pytest.raises(io.MalformedFileError) as err:
            io.decode_tags(self.corrupt(blob, 0, b"XFWM"))
        assert err.value.offset == 0

    def test_bad_version(self, blob):
        with pytest.raises(io.MalformedFileError) as err:
            io.decode_tags(self.corrupt(blob, 4, struct.pack("<H", 9)))
        assert err.value.offset == 4

    def test_bad_detector(self, blob):
        with pytest.raises(io.MalformedFileError) as err:
            io.decode_tags(self.corrupt(blob, REC0 + 2 * 9, b"\x07"))
        assert err.value.offset == REC0 + 2 * 9

    def test_out_of_order(self, blob):
        with pytest.raises(io.MalformedFileError) as err:
            io.decode_tags(self.corrupt(blob, REC0 + 1, struct.pack("<Q", 6)))
        assert err.value.offset == REC0 + 9

    def test_outside_window(self, blob):
        with pytest.raises(io.MalformedFileError) as err:
            io.decode_tags(self.corrupt(blob, REC0 + 3 * 9 + 1, struct.pack("<Q", 101)))
        assert err.value.offset == REC0 + 3 * 9

    def test_truncated(self, blob):
        with pytest.raises(io.MalformedFileError) as err:
            io.decode_tags(blob[:-5])
        assert err.value.offset == REC0 + 3 * 9
        with pytest.raises(io.MalformedFileError):
            io.decode_tags(blob[:10])
        with pytest.raises(io.MalformedFileError):
            io.decode_tags(blob + b"\x00")


class TestCsv:
    def test_curve_round_trip(self, tmp_path):
        curves = g2_matrix(simulate_run(desk_config(n_trials=10), threads=1))
        for name, c in curves.items():
            path = tmp_path / io.curve_filename(name)
            io.write_curve(path, c)
            back = io.read_curve(path)
            assert back.pair == name
            assert_allclose(back.bin_edges, c.bin_edges, atol=0)
            assert_allclose(back.values, c.values, rtol=1e-15)
            assert_allclose(back.raw_counts, c.raw_counts, atol=0)
            assert_allclose(back.sigma, c.sigma, equal_nan=True)
            assert (back.singles_i, back.singles_j, back.live_time) == \
                (c.singles_i, c.singles_j, c.live_time)

    def test_curve_columns(self, tmp_path):
        c = g2_matrix(simulate_run(desk_config(n_trials=2), threads=1))["2a1a"]
        io.write_curve(tmp_path / "g.csv", c)
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0].startswith("# pair=2a1a bin_ns=0.4 max_delay_ns=20.0")
        assert lines[1] == "delay_ns,g2,counts,sigma"
        assert len(lines) == 102
        assert lines[2].split(",")[0] == "-19.8"

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            io.read_curve(tmp_path / "x.csv")


class TestCli:
    def run(self, capsys, *argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    def test_simulate_summary_and_determinism(self, tmp_path, capsys, monkeypatch):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=30)
        monkeypatch.setenv("SFWM_THREADS", "1")
        code, out, err = self.run(capsys, "simulate", cfg, tmp_path / "a.tags", "--seed", 7)
        assert code == 0 and err == ""
        assert "singles 1a:" in out and "coincidence rate (20 ns window):" in out
        monkeypatch.setenv("SFWM_THREADS", "4")
        self.run(capsys, "simulate", cfg, tmp_path / "b.tags", "--seed", 7)
        self.run(capsys, "simulate", cfg, tmp_path / "c.tags", "--seed", 8)
        a, b, c = ((tmp_path / f"{x}.tags").read_bytes() for x in "abc")
        assert a == b and a != c

    def test_filters_reduce_rate(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=100)

        def rate(arm):
            _, out, _ = self.run(capsys, "simulate", cfg, tmp_path / "x.tags", "--filters", arm)
            line = [ln for ln in out.splitlines() if ln.startswith("coincidence")][0]
            return float(line.split(":")[1].split()[0])

        assert rate("resonant-1") < rate("none") / 5

    def test_config_error(self, tmp_path, capsys):
        (tmp_path / "bad.cfg").write_text("detuning = 50\npair_rate = -3 kHz\n")
        code, out, err = self.run(capsys, "simulate", tmp_path / "bad.cfg", tmp_path / "x.tags")
        assert code == 2 and out == "" and "pair_rate" in err
        code, _, err = self.run(capsys, "simulate", tmp_path / "bad.cfg", tmp_path / "x.tags",
                                "--seed", -1)
        assert code == 2

    def test_io_errors(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=2)
        assert self.run(capsys, "simulate", tmp_path / "missing.cfg", tmp_path / "x")[0] == 3
        assert self.run(capsys, "simulate", cfg, tmp_path / "no" / "dir" / "x.tags")[0] == 3
        assert self.run(capsys, "correlate", tmp_path / "missing.tags", tmp_path / "o")[0] == 3
        assert self.run(capsys, "analyze", tmp_path / "empty_dir")[0] == 3

    def test_correlate_shape_and_verify(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=4)
        self.run(capsys, "simulate", cfg, tmp_path / "x.tags")
        code, out, _ = self.run(capsys, "correlate", tmp_path / "x.tags", tmp_path / "curves",
                                "--verify")
        assert code == 0 and out.count(": ok") == 6
        for name, _, _ in PAIRS:
            rows = (tmp_path / "curves" / f"g_{name}.csv").read_text().splitlines()
            assert len(rows) == 2 + 100
        code, _, _ = self.run(capsys, "correlate", tmp_path / "x.tags", tmp_path / "c2",
                              "--bin-ns", 1, "--max-delay-ns", 10)
        assert len((tmp_path / "c2" / "g_2a1a.csv").read_text().splitlines()) == 2 + 20
        assert self.run(capsys, "correlate", tmp_path / "x.tags", tmp_path / "c3",
                        "--bin-ns", 0.45)[0] == 2

    def test_empty_trials(self, tmp_path, capsys):
        io.write_tags(tmp_path / "e.tags", streams_from([[[], []]] * 4, trial_ticks=500_000))
        code, _, _ = self.run(capsys, "correlate", tmp_path / "e.tags", tmp_path / "curves")
        assert code == 0
        c = io.read_curve(tmp_path / "curves" / "g_1b1a.csv")
        assert not c.values.any() and np.all(np.isnan(c.sigma))
        code, out, err = self.run(capsys, "analyze", tmp_path / "curves", "--mode", "cs")
        assert code == 4 and out == "" and "zero-delay" in err
        assert self.run(capsys, "analyze", tmp_path / "curves", "--mode", "spectrum")[0] == 4

    def test_malformed(self, tmp_path, capsys):
        (tmp_path / "m.tags").write_bytes(b"SFWM" + bytes(30))
        code, out, err = self.run(capsys, "correlate", tmp_path / "m.tags", tmp_path / "o")
        assert code == 2 and "byte offset" in err

    def test_analyze_modes(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=300)
        self.run(capsys, "simulate", cfg, tmp_path / "x.tags", "--filters", "resonant-1")
        self.run(capsys, "correlate", tmp_path / "x.tags", tmp_path / "curves")
        code, out, _ = self.run(capsys, "analyze", tmp_path / "curves", "--mode", "cs")
        assert code == 0 and out.startswith("Rbar_max = ") and "CS violated: " in out
        header = (tmp_path / "curves" / "r_curve.csv").read_text().splitlines()[1]
        assert header == "delay_ns,r1,r2,rbar,sigma"
        code, out, _ = self.run(capsys, "analyze", tmp_path / "curves", "--mode", "ordering")
        assert out.strip() in ("positive-delay", "negative-delay", "symmetric")
        code, out, _ = self.run(capsys, "analyze", tmp_path / "curves", "--mode", "spectrum",
                                "--output", tmp_path / "spec")
        assert code == 0
        for f in (1, 2):
            lines = (tmp_path / "spec" / f"spectrum_field{f}.csv").read_text().splitlines()
            assert lines[1] == "freq_hz,magnitude" and len(lines) == 102

    def test_classical_run_not_violated(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=200, pair_rate=0)
        self.run(capsys, "simulate", cfg, tmp_path / "x.tags")
        self.run(capsys, "correlate", tmp_path / "x.tags", tmp_path / "curves")
        _, out, _ = self.run(capsys, "analyze", tmp_path / "curves", "--mode", "cs")
        assert out.strip().endswith("CS violated: no")

    def test_sweep(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", n_trials=20, rayleigh_rate=5e7, pair_rate=2e7)
        code, out, _ = self.run(capsys, "sweep", cfg, "--deltas", "40", "--output", tmp_path / "one.csv")
        rows = (tmp_path / "one.csv").read_text().splitlines()
        assert code == 0 and len(rows) == 2
        assert rows[0] == "delta_over_gamma,alpha,rbar_max,sigma,filtered,arm,status"
        for name in ("a", "b"):
            self.run(capsys, "sweep", cfg, "--deltas", "30gamma, 60", "--both-arms",
                     "--output", tmp_path / f"{name}.csv")
        a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
        assert a == b and len(a.splitlines()) == 5
        code, _, _ = self.run(capsys, "sweep", cfg, "--deltas", "-5", "--output", tmp_path / "f.csv")
        assert code == 1 and "failed" in (tmp_path / "f.csv").read_text()
        code, _, _ = self.run(capsys, "sweep", cfg, "--deltas", "40,-5", "--output", tmp_path / "p.csv")
        assert code == 0
        assert self.run(capsys, "sweep", cfg, "--deltas", "fast", "--output", tmp_path / "q.csv")[0] == 2


def test_pipeline_bytes_across_threads(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", n_trials=40)
    digests = []
    for threads in ("1", "4"):
        d = tmp_path / threads
        d.mkdir()
        env = {"SFWM_THREADS": threads}
        for argv in (["simulate", cfg, d / "x.tags"], ["correlate", d / "x.tags", d],
                     ["analyze", d, "--mode", "cs"]):
            r = subprocess.run([sys.executable, "-m", "sfwm.cli", *map(str, argv)],
                               capture_output=True, text=True, env={**_base_env(), **env})
            assert r.returncode == 0, r.stderr
        digests.append([(d / f).read_bytes() for f in ["x.tags", "r_curve.csv"]
                        + [f"g_{p[0]}.csv" for p in PAIRS]])
    assert digests[0] == digests[1]


def _base_env():
    import os
    return {k: v for k, v in os.environ.items() if k != "SFWM_THREADS"}
