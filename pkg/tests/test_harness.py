"""Link simulator, delay and overhead arithmetic, experiment runners and the CLI."""

import json
import math
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from thp_hybrid.channel import make_channel_set
from thp_hybrid.config import SystemConfig
from thp_hybrid.harness.algorithms import ALGORITHMS, random_order, run_algorithm
from thp_hybrid.harness.checks import run_checks
from thp_hybrid.harness.cli import main
from thp_hybrid.harness.experiments import (PRESETS, RESULT_FIELDS, delay_sweep, make_spec, robust_vs_nonrobust,
                                            run_preset)
from thp_hybrid.harness.link import binomial_ci, modulo_awgn_ser, simulate_ser
from thp_hybrid.harness.overhead import delay_ratio, feedback_overhead, tts_delay
from thp_hybrid.objective import TransceiverState
from thp_hybrid.thp import QamConstellation
from thp_hybrid.tosca import Timeline

PAPER = SystemConfig.paper()


def scalar_link(sigma, nonlinear=True, W=1.0, P=1.0):
    one = np.ones((1, 1), complex)
    state = TransceiverState(P=[P * one], F=[one], T=one, W=W * one, U=one, L=np.ones((1, 1)), nonlinear=nonlinear)
    cs = make_channel_set([one], [np.zeros((1, 1))], [sigma], [0.0])
    return state, cs


def qfunc(x):
    return 0.5 * math.erfc(x / math.sqrt(2))


class TestLink:
    def test_modulo_chain_matches_folded_gaussian(self):
        state, cs = scalar_link(0.25)
        est = simulate_ser(state, cs, 16, 100_000, 1)
        ref = modulo_awgn_ser(16, 0.25**2)
        assert abs(est.ser - ref) <= 3 * est.ci

    def test_linear_chain_matches_qam_formula(self):
        state, cs = scalar_link(0.25, nonlinear=False)
        est = simulate_ser(state, cs, 16, 100_000, 2)
        qam = QamConstellation(16)
        p = 2 * (1 - 1 / 4) * qfunc(qam.d / (0.25 / math.sqrt(2)))
        assert abs(est.ser - (1 - (1 - p) ** 2)) <= 3 * est.ci

    def test_folded_formula_limits(self):
        assert modulo_awgn_ser(16, 0.0) == 0.0
        assert modulo_awgn_ser(16, 1e3) == pytest.approx(15 / 16, abs=1e-3)

    def test_zero_precoder_random_guess(self):
        state, cs = scalar_link(1.0, W=0.0, P=100.0)
        est = simulate_ser(state, cs, 16, 50_000, 3)
        assert abs(est.ser - 15 / 16) <= 3 * max(est.ci, 1e-3)

    def test_noiseless_fully_digital_is_error_free(self):
        from thp_hybrid.baselines import fd_solve
        from thp_hybrid.channel import sample_channel
        cfg = SystemConfig.desk(100.0, sigma_e=0.0)
        _, cs = sample_channel(cfg, 0)
        state, _ = fd_solve(cfg, cs)
        assert simulate_ser(state, cs, 16, 20_000, 0).errors == 0

    def test_ci_scaling(self):
        assert binomial_ci(0.1, 2000) == pytest.approx(binomial_ci(0.1, 1000) / math.sqrt(2))

    def test_counts_every_stream(self):
        state, cs = scalar_link(0.5)
        est = simulate_ser(state, cs, 16, 1234, 0)
        assert est.symbols == 1234

    def test_seeded(self):
        state, cs = scalar_link(0.5)
        assert simulate_ser(state, cs, 16, 5000, 9) == simulate_ser(state, cs, 16, 5000, 9)

    def test_rejects_empty(self):
        state, cs = scalar_link(0.5)
        with pytest.raises(ValueError):
            simulate_ser(state, cs, 16, 0, 0)


class TestOverhead:
    def test_paper_delay(self):
        assert delay_ratio(PAPER) == 16
        assert tts_delay(1e-3, PAPER) == pytest.approx(0.0625e-3, rel=1e-15)

    def test_fully_digital_ratio_one(self):
        assert delay_ratio(SystemConfig().fully_digital()) == 1

    def test_ratio_linear_in_antennas(self):
        a = delay_ratio(SystemConfig(N_s=16))
        b = delay_ratio(SystemConfig(N_s=32))
        assert b == 2 * a and isinstance(a, Fraction)

    def test_paper_counts(self):
        tl = Timeline(T_f=1000, T_s=10)
        assert feedback_overhead(tl, PAPER, "single") == 10_240_000
        assert feedback_overhead(tl, PAPER, "two-timescale") == 1_024_000 + 576_000

    def test_single_slot_frames_equal(self):
        tl = Timeline(T_f=37, T_s=1)
        assert feedback_overhead(tl, PAPER, "two-timescale") == feedback_overhead(tl, PAPER, "single")

    @pytest.mark.parametrize("T_s", [2, 5, 50])
    def test_two_timescale_cheaper(self, T_s):
        tl = Timeline(T_f=10, T_s=T_s)
        assert feedback_overhead(tl, SystemConfig(), "two-timescale") < feedback_overhead(tl, SystemConfig(), "single")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            feedback_overhead(Timeline(), PAPER, "both")


class TestAlgorithms:
    def test_registry(self):
        assert {"fd", "nl-joint", "nl-separate", "l-joint", "l-separate", "zf"} <= set(ALGORITHMS)
        with pytest.raises(ValueError):
            run_algorithm("magic", SystemConfig(), None, 0)

    def test_random_order_reproducible(self):
        cfg = SystemConfig(M=4, N_d=2, R_d=1, R_s=4)
        np.testing.assert_array_equal(random_order(cfg, 3), random_order(cfg, 3))
        assert sorted(int(np.argmax(r)) for r in random_order(cfg, 3)) == [0, 1, 2, 3]


def tiny(preset, **kw):
    base = dict(seeds=(0, 1), symbols=2000, snr_db=(10.0,))
    base.update(kw)
    return make_spec(preset, **base)


class TestExperiments:
    def test_byte_identical_reruns(self, tmp_path):
        for name in ("a", "b"):
            run_preset(tiny("desk", algos=("nl-joint", "zf"), out=str(tmp_path / name)))
        for f in ("results.csv", "run.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        header = (tmp_path / "a" / "results.csv").read_text().splitlines()[0]
        assert header == ",".join(RESULT_FIELDS)

    def test_convergence_preset_trace(self, tmp_path):
        run_preset(tiny("fig3", seeds=(0,), snr_db=(20.0,), out=str(tmp_path)))
        lines = (tmp_path / "trace_snr20_seed0.csv").read_text().splitlines()
        assert all(line.split(",")[2] == "1" for line in lines[1:])

    def test_overhead_preset(self):
        rep = run_preset(make_spec("fig7"))
        rows = {(r[0], r[2]): r for r in rep.tables["overhead"][1]}
        assert rows[("paper", 10)][3:5] == [10_240_000, 1_600_000]

    def test_error_free_csi_makes_robustness_moot(self):
        rep = robust_vs_nonrobust(tiny("robust", system={"sigma_e": 0.0}))
        np.testing.assert_array_equal(rep.paired("nl-joint"), rep.paired("nl-joint-nonrobust"))
        np.testing.assert_array_equal(rep.paired("nl-joint", "ser"), rep.paired("nl-joint-nonrobust", "ser"))

    def test_static_process_flat_in_delay(self):
        spec = tiny("fig9", seeds=(0,), f_d=0.0, train_frames=3, eval_points=1, delays_ms=(0.0, 3.0))
        rep = delay_sweep(spec)
        for algo in ("nl-joint", "tts"):
            assert rep.paired(algo, "ser", delay_ms=0.0) == rep.paired(algo, "ser", delay_ms=3.0)
            assert rep.paired(algo, "mse", delay_ms=0.0) == rep.paired(algo, "mse", delay_ms=3.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            make_spec("nope")
        with pytest.raises(ValueError):
            make_spec("desk", algos=("unknown",))
        with pytest.raises(ValueError):
            make_spec("desk", symbols=10)

    def test_every_preset_resolves(self):
        for name in PRESETS:
            assert make_spec(name).preset == name
        assert make_spec("paper").system.M == 4


class TestCli:
    def test_check_passes(self, capsys):
        assert main(["check"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") >= 9

    def test_checks_report_failures(self):
        lines = []
        assert run_checks(lines.append) == 0
        assert all(line.startswith("PASS") for line in lines)

    def test_run_overhead(self, tmp_path, capsys):
        assert main(["run", "--preset", "fig7", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "overhead.csv").read_text()
        assert "10240000" in text and "1600000" in text

    def test_run_with_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seeds": 1, "symbols": 1000, "snr_db": [10], "algos": ["zf"],
                                   "system": {"M": 2, "N_s": 8}}))
        assert main(["run", "--preset", "desk", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        meta = json.loads((tmp_path / "o" / "run.json").read_text())
        assert meta["config"]["N_s"] == 8
        assert "zf" in capsys.readouterr().out

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"colour": "blue"}))
        with pytest.raises(SystemExit):
            main(["run", "--config", str(cfg)])

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "thp_hybrid", "run", "--preset", "fig7"],
                              capture_output=True, text=True, check=False)
        assert proc.returncode == 0 and "overhead" in proc.stdout
