"""Benchmark harness: method parsing, paired statistics, determinism,
output formats."""

import numpy as np
import pytest
from numpy.random import SeedSequence, default_rng

from gd4mimo.bench import (
    BenchConfig,
    compute_ser,
    emit_plotdata,
    paired_significant,
    parse_method,
    per_instance_errors,
    read_plotdata,
    run_benchmark,
)


class TestParseMethod:
    def test_plain_methods(self):
        assert parse_method("babai") == ("babai", None)
        assert parse_method("warm") == ("warm", None)
        assert parse_method("brute") == ("brute", None)

    def test_parameterized_methods(self):
        assert parse_method("kbest:10") == ("kbest", 10)
        assert parse_method("cold:1") == ("cold", 1)

    def test_rejections(self):
        for bad in ("babai:3", "kbest", "cold", "cold:0", "unknown", "kbest:"):
            with pytest.raises(ValueError):
                parse_method(bad)


class TestComputeSer:
    def test_counts_mismatches(self):
        assert compute_ser(np.array([1, 2, 3, 4]), np.array([1, 2, 4, 4])) == 0.25
        assert compute_ser(np.array([1]), np.array([1])) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compute_ser(np.array([1, 2]), np.array([1]))


class TestPairedSignificance:
    def test_identical_errors_not_significant(self):
        e = np.array([1.0, 0.0, 2.0, 1.0])
        d, half = paired_significant(e, e)
        assert d == 0.0 and half == 0.0

    def test_constant_improvement_detected(self):
        rng = default_rng(SeedSequence([150]))
        b = rng.integers(1, 5, size=400).astype(float)
        a = b - 1.0
        d, half = paired_significant(a, b)
        assert d == -1.0
        assert half == 0.0
        assert d + half < 0.0

    def test_noise_is_not_significant(self):
        rng = default_rng(SeedSequence([151]))
        a = rng.poisson(1.0, size=500).astype(float)
        b = rng.poisson(1.0, size=500).astype(float)
        d, half = paired_significant(a, b)
        assert d + half >= 0.0 or -d + half >= 0.0  # cannot win both directions

    def test_halfwidth_shrinks_with_n(self):
        rng = default_rng(SeedSequence([152]))
        base = rng.normal(size=10000)
        _, h1 = paired_significant(base[:100], np.zeros(100))
        _, h2 = paired_significant(base, np.zeros(10000))
        assert h2 < h1


class TestBenchConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            BenchConfig(n_tx=2, n_rx=2, k=2, snr_list_db=(10.0,), n_instances=0,
                        methods=("babai",))
        with pytest.raises(ValueError):
            BenchConfig(n_tx=2, n_rx=2, k=2, snr_list_db=(10.0,), n_instances=5,
                        methods=())
        with pytest.raises(ValueError, match="brute"):
            BenchConfig(n_tx=16, n_rx=16, k=2, snr_list_db=(10.0,), n_instances=5,
                        methods=("brute",))

    def test_net_method_requires_checkpoint(self):
        cfg = BenchConfig(
            n_tx=2, n_rx=2, k=2, snr_list_db=(10.0,), n_instances=5,
            methods=("cold:2",),
        )
        with pytest.raises(ValueError, match="checkpoint"):
            run_benchmark(cfg)


class TestRunBenchmark:
    def lattice_cfg(self, out=None, timing=True, methods=("babai", "kbest:4")):
        return BenchConfig(
            n_tx=2, n_rx=2, k=2, snr_list_db=(8.0, 16.0), n_instances=40,
            methods=methods, seed=4, output_path=out, include_timing=timing,
        )

    def test_records_well_formed(self):
        records = run_benchmark(self.lattice_cfg())
        assert len(records) == 4
        for r in records:
            assert 0.0 <= r.ser <= 1.0
            assert r.ser_ci95_halfwidth >= 0.0
            assert r.n_instances == 40
            assert r.mean_runtime_s is not None and r.mean_runtime_s >= 0.0

    def test_ser_decreases_with_snr(self):
        records = run_benchmark(self.lattice_cfg())
        babai = {r.snr_db: r.ser for r in records if r.method == "babai"}
        assert babai[16.0] <= babai[8.0]

    def test_csv_byte_identical_without_timing(self, tmp_path):
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        run_benchmark(self.lattice_cfg(out=str(p1), timing=False))
        run_benchmark(self.lattice_cfg(out=str(p2), timing=False))
        b1 = p1.read_bytes()
        assert b1 == p2.read_bytes()
        assert b1.startswith(b"method,snr_db,ser,")

    def test_per_instance_errors_agree_with_ser(self):
        cfg = self.lattice_cfg()
        errs = per_instance_errors(cfg)
        records = run_benchmark(cfg)
        n_symbols = 2 * cfg.n_tx
        for r in records:
            snr_idx = cfg.snr_list_db.index(r.snr_db)
            total = errs[r.method][snr_idx].sum()
            assert r.ser == pytest.approx(total / (cfg.n_instances * n_symbols))

    def test_paired_streams_share_instances(self):
        # brute residual <= babai residual on every paired instance implies
        # brute never makes more symbol errors on average... not per-instance;
        # instead check the instance streams are method-independent by
        # comparing the identical babai columns of two configs whose method
        # lists differ
        cfg_a = self.lattice_cfg(methods=("babai",))
        cfg_b = self.lattice_cfg(methods=("kbest:2", "babai"))
        ea = per_instance_errors(cfg_a)["babai"]
        eb = per_instance_errors(cfg_b)["babai"]
        np.testing.assert_array_equal(ea, eb)


class TestPlotData:
    def test_round_trip(self, tmp_path):
        records = run_benchmark(
            BenchConfig(
                n_tx=2, n_rx=2, k=2, snr_list_db=(8.0, 14.0), n_instances=25,
                methods=("babai", "kbest:3"), seed=6,
            )
        )
        path = str(tmp_path / "plot.csv")
        emit_plotdata(records, path)
        methods, cell = read_plotdata(path)
        assert methods == ["babai", "kbest:3"]
        for r in records:
            assert cell[(r.method, r.snr_db)] == pytest.approx(r.ser, rel=1e-15)

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_plotdata([], str(tmp_path / "x.csv"))
