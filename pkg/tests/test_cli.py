"""
Tests for the generate / fit / eval command line.
"""
import csv
import json

import pytest

from cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, UsageError, build_parser, fit_config, main, parse_set
from errors import InvalidConfigError


@pytest.fixture(autouse=True)
def one_worker(monkeypatch):
    monkeypatch.setenv("HSMM_NPB_THREADS", "1")


def generate(out, spec="poisson-hsmm", seed=7, T=50, sequences=2):
    return main(["generate", "--spec", spec, "--seed", str(seed), "--out", str(out),
                 "--sequences", str(sequences), "--T", str(T)])


class TestGenerate:
    """Test the generate command."""

    def test_writes_bundle(self, temp_dir):
        assert generate(temp_dir / "data") == EXIT_OK
        for name in ("data.csv", "truth.csv", "meta.json"):
            assert (temp_dir / "data" / name).exists()
        meta = json.loads((temp_dir / "data" / "meta.json").read_text())
        assert meta["lengths"] == [50, 50]

    def test_reruns_are_byte_identical(self, temp_dir):
        generate(temp_dir / "a", spec="morse-synth")
        generate(temp_dir / "b", spec="morse-synth")
        for name in ("data.csv", "truth.csv", "meta.json"):
            assert (temp_dir / "a" / name).read_bytes() == (temp_dir / "b" / name).read_bytes()

    def test_unknown_spec(self, temp_dir, capsys):
        assert generate(temp_dir / "x", spec="speech") == EXIT_USAGE
        assert "unknown experiment" in capsys.readouterr().err


class TestUsage:
    """Test argument and configuration errors."""

    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_missing_required(self):
        assert main(["generate", "--seed", "1"]) == EXIT_USAGE

    def test_bad_type(self):
        assert main(["fit", "--chains", "many"]) == EXIT_USAGE

    def test_fit_needs_dataset(self, temp_dir):
        assert main(["fit", "--out", str(temp_dir)]) == EXIT_USAGE

    def test_fit_bad_model(self, tiny_dataset, temp_dir):
        assert main(["fit", "--dataset", str(tiny_dataset), "--out", str(temp_dir / "run"),
                     "--model", "hdp-hmm-forward"]) == EXIT_USAGE

    def test_fit_missing_dataset_is_runtime(self, temp_dir):
        assert main(["fit", "--dataset", str(temp_dir / "absent"), "--out", str(temp_dir / "run")]) == EXIT_RUNTIME

    def test_eval_without_traces(self, temp_dir):
        assert main(["eval", "--traces", str(temp_dir / "absent")]) == EXIT_RUNTIME

    def test_set_needs_key_value(self, tiny_dataset, temp_dir):
        assert main(["fit", "--dataset", str(tiny_dataset), "--out", str(temp_dir / "run"),
                     "--set", "sampler.L"]) == EXIT_USAGE

    def test_set_unknown_key(self, tiny_dataset, temp_dir, capsys):
        assert main(["fit", "--dataset", str(tiny_dataset), "--out", str(temp_dir / "run"),
                     "--set", "sampler.depth=3"]) == EXIT_USAGE
        assert "sampler.depth" in capsys.readouterr().err

    def test_niw_dof_checked_against_data(self, tiny_dataset, temp_dir, capsys):
        """2-D frames need dof > 1; the run stops before any chain starts."""
        run = temp_dir / "run"
        assert main(["fit", "--dataset", str(tiny_dataset), "--out", str(run),
                     "--set", "observation.niw.dof=0.5"]) == EXIT_USAGE
        assert "observation.niw.dof" in capsys.readouterr().err
        assert not run.exists()

    def test_parser_fields(self):
        args = build_parser().parse_args(["fit", "--L", "12", "--dmax", "40", "--verbose"])
        assert args.L == 12 and args.dmax == 40 and args.verbose


class TestFitAndEval:
    """Run the pipeline end to end on a tiny dataset."""

    def test_fit_then_eval(self, tiny_dataset, temp_dir, capsys):
        run = temp_dir / "run"
        code = main(["fit", "--dataset", str(tiny_dataset), "--out", str(run), "--chains", "2",
                     "--iterations", "3", "--L", "4", "--seed", "11"])
        assert code == EXIT_OK
        config = json.loads((run / "config.json").read_text())
        assert config["chains"] == 2 and config["sampler"]["L"] == 4
        assert len(list((run / "traces").glob("chain_*.jsonl"))) == 2

        assert main(["eval", "--traces", str(run), "--truth", str(tiny_dataset)]) == EXIT_OK
        with open(run / "summary.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert [int(r["iteration"]) for r in rows] == [1, 2, 3]
        assert all(int(r["chains"]) == 2 for r in rows)
        with open(run / "used_states.csv", newline="") as f:
            hist = list(csv.DictReader(f))
        assert sum(int(r["chains"]) for r in hist) == 2
        durations = json.loads((run / "durations.json").read_text())
        assert set(durations["families"]) == {"poisson"}
        out = capsys.readouterr().out
        assert "final Hamming" in out

    def test_config_file_and_eval_out(self, tiny_dataset, temp_dir):
        cfg = temp_dir / "run.json"
        cfg.write_text(json.dumps({"model": "hdp-hmm-equivalent", "chains": 1, "iterations": 2,
                                   "sampler": {"L": 3}}))
        run = temp_dir / "run"
        assert main(["fit", "--config", str(cfg), "--dataset", str(tiny_dataset), "--out", str(run)]) == EXIT_OK
        report = temp_dir / "report"
        assert main(["eval", "--traces", str(run / "traces"), "--out", str(report)]) == EXIT_OK
        assert (report / "summary.csv").exists() and (report / "used_states.csv").exists()
        durations = json.loads((report / "durations.json").read_text())
        assert set(durations["families"]) == {"geometric"}

    def test_fit_without_truth(self, temp_dir, capsys):
        generate(temp_dir / "data", T=40, sequences=1)
        (temp_dir / "data" / "truth.csv").unlink()
        run = temp_dir / "run"
        assert main(["fit", "--dataset", str(temp_dir / "data"), "--out", str(run),
                     "--chains", "1", "--iterations", "2", "--L", "3"]) == EXIT_OK
        assert "no truth.csv" in capsys.readouterr().out
        assert main(["eval", "--traces", str(run)]) == EXIT_OK
        assert not (run / "summary.csv").exists()
        assert (run / "used_states.csv").exists()


def fit_args(*extra):
    return build_parser().parse_args(["fit", "--dataset", "data", "--out", "run", *extra])


class TestOverrides:
    """Test flag and --set overrides of the fit settings."""

    def test_flags_reach_config(self):
        config = fit_config(fit_args("--gamma", "2.5", "--alpha", "4", "--init", "blocks",
                                     "--init-segment-length", "7", "--no-censoring",
                                     "--used-state-threshold", "0.05"))
        sampler = config.sampler
        assert (sampler.gamma, sampler.alpha, sampler.init) == (2.5, 4.0, "blocks")
        assert sampler.init_segment_length == 7 and not sampler.censoring
        assert config.used_state_threshold == 0.05

    def test_defaults_kept_without_flags(self):
        config = fit_config(fit_args())
        assert config.sampler.censoring and config.sampler.init == "kmeans"

    def test_set_values(self):
        config = fit_config(fit_args("--set", "duration.family=negbin", "--set", "duration.r_support=[1, 2]",
                                     "--set", "observation.niw.dof=6", "--set", "sampler.d_max=null",
                                     "--set", "observation.niw.mean=[0.5, 1]"))
        assert config.duration.family == "negbin" and config.duration.r_support == [1, 2]
        assert config.observation.niw.dof == 6.0 and config.observation.niw.mean == [0.5, 1.0]
        assert config.sampler.d_max is None

    def test_flags_win_over_set(self):
        assert fit_config(fit_args("--set", "sampler.L=5", "--L", "8")).sampler.L == 8

    def test_set_wins_over_config_file(self, temp_dir):
        cfg = temp_dir / "run.json"
        cfg.write_text(json.dumps({"sampler": {"gamma": 3.0}}))
        config = fit_config(fit_args("--config", str(cfg), "--set", "sampler.gamma=4"))
        assert config.sampler.gamma == 4.0

    def test_set_into_scalar(self):
        with pytest.raises(InvalidConfigError):
            fit_config(fit_args("--set", "seed.low=1"))

    def test_parse_set(self):
        assert parse_set(["a.b=1", "c=text", "d={\"x\": true}"]) == {"a.b": 1, "c": "text", "d": {"x": True}}
        with pytest.raises(UsageError):
            parse_set(["=3"])
