"""Test the tidybalance command line: outputs and exit codes."""

import json
import tempfile
from pathlib import Path

from pydantic import ValidationError

from scripts.tidybalance import (
    EXIT_INFEASIBLE,
    EXIT_PARSE,
    EXIT_VALIDATION,
    build_parser,
    main,
    simulation_config,
)

TESTDATA = Path(__file__).parent / "testdata"
TOY = str(TESTDATA / "toy_covariates.csv")


def test_approx_table1_csv(capsys):
    """Test the approximation table as CSV."""
    assert main(["approx", "--table1", "--out-format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "delta,g,m,p_dim,p_bal_J10_r1,p_bal_J20_r2"
    assert len(lines) == 9


def test_approx_single_query(capsys):
    """Test one approximation query: n = m = 100, delta .2, J = 10, r = 1."""
    argv = ["approx", "--n", "100", "--m", "100", "--delta", "0.2", "--j", "10", "--r", "1"]
    assert main(argv + ["--out-format", "json"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert round(result["p_balanced"], 3) == 0.518

    assert main(["approx", "--n", "100"]) == EXIT_VALIDATION
    assert "--m" in capsys.readouterr().err


def test_approx_single_query_csv(capsys):
    """Test that one approximation query is written as a header and a single CSV row."""
    argv = ["approx", "--n", "10", "--m", "10", "--delta", "0.3", "--j", "10", "--r", "1"]
    assert main(argv + ["--out-format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[0] == "n,m,delta,j_dims,r_max,p_dim,p_balanced"
    values = dict(zip(lines[0].split(","), lines[1].split(","), strict=True))
    assert values["n"] == "10" and values["r_max"] == "1"
    assert abs(float(values["p_dim"]) - 0.502) < 0.001


def test_assess_toy_json(capsys):
    """Test exact assessments of the two kinds of toy splits."""
    argv = ["assess", TOY, str(TESTDATA / "toy_split_unequal.csv"), "--mode", "enumerate", "--out-format", "json"]
    assert main(argv) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["p"] == 2 / 3
    assert report["p_star"] == 2 / 3
    assert report["reference_size"] == 12

    argv[2] = str(TESTDATA / "toy_split_equal.csv")
    assert main(argv) == 0
    assert json.loads(capsys.readouterr().out)["p"] == 1.0


def test_assess_text_and_adhoc(capsys):
    """Test the text report with an ad-hoc cutoff."""
    argv = ["assess", TOY, str(TESTDATA / "toy_split_unequal.csv"), "--mode", "enumerate", "--adhoc", "0.5:0"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "p = 0.667" in out
    assert "p* = 66.7%" in out
    assert "not balanced" in out


def test_exit_codes(capsys):
    """Test parse, validation and infeasibility exit codes."""
    split = str(TESTDATA / "toy_split_unequal.csv")
    assert main(["assess", str(TESTDATA / "malformed_covariates.csv"), split]) == EXIT_PARSE
    assert "line 3" in capsys.readouterr().err

    assert main(["assess", str(TESTDATA / "constant_covariates.csv"), split]) == EXIT_VALIDATION
    assert "flat" in capsys.readouterr().err

    with tempfile.TemporaryDirectory() as temp_dir:
        out = str(Path(temp_dir) / "ref.npz")
        argv = ["reference", TOY, "--m-size", "3", "--n-size", "2", "--out", out]
        assert main(argv) == EXIT_INFEASIBLE


def test_reference_cache_reuse(capsys):
    """Test that assessing against a cached reference matches building it in place."""
    split = str(TESTDATA / "toy_split_unequal.csv")
    with tempfile.TemporaryDirectory() as temp_dir:
        cache = str(Path(temp_dir) / "ref.npz")
        argv = ["reference", TOY, "--m-size", "1", "--n-size", "1", "--mode", "enumerate", "--out", cache]
        assert main(argv) == 0
        assert cache in capsys.readouterr().out

        assert main(["assess", TOY, split, "--reference", cache, "--out-format", "json"]) == 0
        cached = capsys.readouterr().out
        assert main(["assess", TOY, split, "--mode", "enumerate", "--out-format", "json"]) == 0
        direct = capsys.readouterr().out
        assert cached == direct

        other = str(TESTDATA / "toy_covariates_other.csv")
        assert main(["assess", other, split, "--reference", cache]) == EXIT_VALIDATION
        assert "different population" in capsys.readouterr().err


def test_dump_random_p(capsys):
    """Test that the reference pseudo p-values are written on request."""
    with tempfile.TemporaryDirectory() as temp_dir:
        dump = Path(temp_dir) / "random_p.csv"
        split = str(TESTDATA / "toy_split_unequal.csv")
        assert main(["assess", TOY, split, "--mode", "enumerate", "--dump-random-p", str(dump)]) == 0
        lines = dump.read_text().splitlines()
    assert lines[0] == "p"
    assert len(lines) == 13


def read_outputs(out_dir: Path) -> dict[str, str]:
    return {path.name: path.read_text() for path in sorted(out_dir.iterdir())}


def test_simulate_is_reproducible():
    """Test that reruns and thread counts give byte-identical simulation outputs."""
    config = str(TESTDATA / "small_simulation.toml")
    with tempfile.TemporaryDirectory() as temp_dir:
        runs = []
        for name, extra in [("a", []), ("b", []), ("c", ["--threads", "2"])]:
            out_dir = Path(temp_dir) / name
            assert main(["simulate", config, "--out-dir", str(out_dir), "--quiet"] + extra) == 0
            runs.append(read_outputs(out_dir))
    assert runs[0] == runs[1] == runs[2]
    assert len(runs[0]["results.csv"].splitlines()) == 1 + 4 * 6


def test_simulate_single_design(capsys):
    """Test a one-design config: a single result row."""
    with tempfile.TemporaryDirectory() as temp_dir:
        out_dir = Path(temp_dir) / "out"
        assert main(["simulate", str(TESTDATA / "single_design.toml"), "--out-dir", str(out_dir)]) == 0
        printed = capsys.readouterr().out
        results = (out_dir / "results.csv").read_text().splitlines()
    assert "results.csv" in printed
    assert len(results) == 2


def test_simulate_threads_override():
    """Test that --threads overrides the config's thread count, including back down to one."""
    config = str(TESTDATA / "threaded_simulation.toml")
    parser = build_parser()
    assert simulation_config(parser.parse_args(["simulate", config])).threads == 4
    assert simulation_config(parser.parse_args(["simulate", config, "--threads", "1"])).threads == 1
    overridden = simulation_config(parser.parse_args(["simulate", config, "--seed", "3", "--iterations", "2"]))
    assert (overridden.seed, overridden.iterations, overridden.threads) == (3, 2, 4)
    assert parser.parse_args(["assess", TOY, TOY]).threads == 1

    try:
        simulation_config(parser.parse_args(["simulate", config, "--threads", "0"]))
    except ValidationError:
        pass
    else:
        raise AssertionError("Expected a non-positive thread count to be refused")
