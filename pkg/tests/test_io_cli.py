import csv
import json
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from flexparafac2 import io
from flexparafac2.cli import main
from flexparafac2.synth import SynthSpec, gen_dataset
from flexparafac2.tensor import RaggedTensor


def _random_tensor(rng):
    n, K = rng.integers(1, 6), rng.integers(1, 5)
    scale = 10.0 ** rng.uniform(-300, 300)
    return RaggedTensor([rng.normal(size=(n, rng.integers(1, 6))) * scale for _ in range(K)])


class TestTensorFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(50):
            t = _random_tensor(rng)
            io.write_tensor(t, tmp_path / f"t{i}.p2rt")
            assert io.read_tensor(tmp_path / f"t{i}.p2rt").equals(t)

    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
                      elements=st.floats(allow_nan=False, allow_infinity=False)))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_any_finite_values(self, M):
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "x.p2rt")
            io.write_tensor(RaggedTensor([M]), p)
            back = io.read_tensor(p)[0]
        assert np.array_equal(back.view(np.uint64), M.view(np.uint64))

    def test_layout(self, tmp_path):
        t = RaggedTensor([np.array([[1.0, 0.5]]), np.array([[0.1]])])
        io.write_tensor(t, tmp_path / "a.p2rt")
        raw = (tmp_path / "a.p2rt").read_bytes()
        assert raw == b"P2RT 1\n1 2\n2 1\n1.0 0.5\n0.1\n"

    def test_refuses_overwrite(self, tmp_path):
        t = RaggedTensor([np.ones((1, 1))])
        io.write_tensor(t, tmp_path / "a.p2rt")
        with pytest.raises(io.RefusedOverwrite):
            io.write_tensor(t, tmp_path / "a.p2rt")
        io.write_tensor(t, tmp_path / "a.p2rt", force=True)

    @pytest.mark.parametrize("text, line", [
        ("P2RT 2\n1 1\n1\n0\n", 1),
        ("P2RT 1\n1 x\n1\n0\n", 2),
        ("P2RT 1\n1 2\n1\n0\n", 3),
        ("P2RT 1\n2 1\n2\n1 2\n3\n", 5),
        ("P2RT 1\n1 1\n1\nabc\n", 4),
        ("P2RT 1\n1 1\n1\n1\n2\n", 5),
        ("P2RT 1\n2 1\n1\n1\n", 5),
        ("P2RT 1\n1 1\n1\nnan\n", None),
    ])
    def test_parse_errors_carry_line(self, tmp_path, text, line):
        p = tmp_path / "bad.p2rt"
        p.write_text(text)
        with pytest.raises(io.ParseError) as info:
            io.read_tensor(p)
        assert info.value.line == line

    def test_truth_round_trip(self, tmp_path):
        _, truth = gen_dataset(SynthSpec(n=4, m=5, K=3, rank=2, sigma=1e-3, seed=7))
        p = tmp_path / "x.truth"
        io.write_truth(truth, p)
        back = io.read_truth(p)
        assert np.array_equal(back.A, truth.A) and np.array_equal(back.C, truth.C)
        assert all(np.array_equal(a, b) for a, b in zip(back.B, truth.B))
        assert back.sigma == truth.sigma and back.seed == truth.seed

    def test_truth_missing_section(self, tmp_path):
        p = tmp_path / "x.truth"
        p.write_text("P2RT-TRUTH 1\nA 1 1\n1.0\nsigma\n0.0\nseed\n0\n")
        with pytest.raises(io.ParseError):
            io.read_truth(p)

    def test_matrix_csv_round_trip(self, tmp_path):
        M = np.random.default_rng(1).normal(size=(3, 4))
        io.write_matrix_csv(M, tmp_path / "m.csv")
        assert np.array_equal(io.read_matrix_csv(tmp_path / "m.csv"), M)
        assert b"\r" not in (tmp_path / "m.csv").read_bytes()


def _simulate(tmp_path, *extra):
    data = tmp_path / "d.p2rt"
    args = ["simulate", str(data), "--n", "8", "--m", "10", "--K", "5", "--rank", "2",
            "--sigma", "1e-3", "--seed", "3", *extra]
    assert main(args) == 0
    return data


def _decompose(data, out, *extra):
    return main(["decompose", str(data), "--out-dir", str(out), "--rank", "2",
                 "--max-iter", "60", "--inits", "2", "--seed", "1", *extra])


class TestSimulate:
    def test_matches_in_memory_generation(self, tmp_path):
        data = _simulate(tmp_path)
        t, truth = gen_dataset(SynthSpec(n=8, m=10, K=5, rank=2, sigma=1e-3, seed=3))
        assert io.read_tensor(data).equals(t)
        assert np.array_equal(io.read_truth(io.truth_path(data)).A, truth.A)

    def test_refuses_overwrite(self, tmp_path):
        _simulate(tmp_path)
        assert main(["simulate", str(tmp_path / "d.p2rt")]) == 2
        _simulate(tmp_path, "--force")

    def test_m_below_rank_rejected_before_writing(self, tmp_path):
        out = tmp_path / "x.p2rt"
        assert main(["simulate", str(out), "--m", "2", "--rank", "3"]) == 2
        assert not out.exists()

    def test_bad_flag_is_invalid(self, tmp_path):
        assert main(["simulate", str(tmp_path / "x"), "--n", "0"]) == 2
        assert main(["nonsense"]) == 2


class TestDecompose:
    def test_outputs_and_determinism(self, tmp_path):
        data = _simulate(tmp_path)
        assert _decompose(data, tmp_path / "o1") == 0
        assert _decompose(data, tmp_path / "o2") == 0
        names = sorted(p.name for p in (tmp_path / "o1").iterdir())
        for k in range(1, 6):
            assert f"B_{k}.csv" in names and f"P_{k}.csv" in names
        for name in names:
            if name.endswith(".csv"):
                assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
        meta = json.loads((tmp_path / "o1" / "run.json").read_text())
        assert meta["termination"] in ("Converged", "MaxIter")
        assert "relative_B_error" in meta and meta["config"]["rank"] == 2
        with open(tmp_path / "o1" / "report.csv") as fh:
            header = next(csv.reader(fh))
        assert header[:2] == ["iteration", "objective"] and "mu_5" in header
        A = io.read_matrix_csv(tmp_path / "o1" / "A.csv")
        assert A.shape == (8, 2) and np.all(A >= 0)

    def test_classic_solver(self, tmp_path):
        data = _simulate(tmp_path)
        assert _decompose(data, tmp_path / "o", "--solver", "classic") == 0
        P = io.read_matrix_csv(tmp_path / "o" / "P_1.csv")
        np.testing.assert_allclose(P.T @ P, np.eye(2), atol=1e-10)

    def test_refuses_overwrite(self, tmp_path):
        data = _simulate(tmp_path)
        assert _decompose(data, tmp_path / "o") == 0
        assert _decompose(data, tmp_path / "o") == 2
        assert _decompose(data, tmp_path / "o", "--force") == 0

    def test_rank_above_width(self, tmp_path):
        data = _simulate(tmp_path)
        assert main(["decompose", str(data), "--out-dir", str(tmp_path / "o"),
                     "--rank", "11"]) == 2

    def test_parse_error_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.p2rt"
        p.write_text("P2RT 1\n1 1\n1\noops\n")
        assert main(["decompose", str(p), "--out-dir", str(tmp_path / "o"), "--rank", "1"]) == 2
        assert ":4:" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["decompose", str(tmp_path / "none"), "--out-dir", str(tmp_path / "o"),
                     "--rank", "1"]) == 2

    def test_bad_config(self, tmp_path):
        data = _simulate(tmp_path)
        assert _decompose(data, tmp_path / "o", "--mu-growth", "0.5") == 2

    def test_hand_written_file(self, tmp_path):
        p = tmp_path / "user.p2rt"
        p.write_text("P2RT 1\n3 2\n2 3\n1 0\n0.5 2\n0 1\n\n2 0 1\n1 1 0\n0 3 1\n")
        assert main(["decompose", str(p), "--out-dir", str(tmp_path / "o"), "--rank", "2",
                     "--max-iter", "50"]) == 0
        assert not (tmp_path / "user.p2rt.truth").exists()


class TestBenchmark:
    def test_rows_and_summary(self, tmp_path):
        out = tmp_path / "bench.csv"
        assert main(["benchmark", str(out), "--sigmas", "1e-2", "--replicates", "2",
                     "--n", "6", "--m", "7", "--K", "4", "--rank", "2", "--inits", "2",
                     "--max-iter", "30", "--jobs", "1"]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert {r["solver"] for r in rows} == {"classic", "flexible"}
        with open(tmp_path / "bench.summary.csv") as fh:
            summary = list(csv.DictReader(fh))
        assert len(summary) == 4
        for s in summary:
            assert float(s["q20"]) <= float(s["median"]) <= float(s["q80"])
        assert main(["benchmark", str(out), "--sigmas", "1e-2", "--replicates", "1"]) == 2

    def test_invalid_grid(self, tmp_path):
        assert main(["benchmark", str(tmp_path / "b.csv"), "--sigmas", "-1"]) == 2
        assert main(["benchmark", str(tmp_path / "b.csv"), "--solvers", "magic"]) == 2
