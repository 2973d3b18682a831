import json

import pytest

from todsim.cli import main


def run_cli(*argv):
    return main(list(argv))


class TestEvalInteractive:
    def test_toy_rule_agenda_all_success(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        code = run_cli("eval-interactive", "--corpus", "toy", "--system", "rule",
                       "--simulator", "agenda", "--seed", "7", "--out", str(out))
        assert code == 0
        printed = capsys.readouterr().out
        assert "inform           100.00" in printed
        assert "success          100.00" in printed
        assert "bleu             N/A" in printed
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "session_id,inform,success,turns,termination,sent_score,sess_score"
        assert len(rows) == 41

    def test_same_seed_byte_identical_any_workers(self, tmp_path):
        paths = [tmp_path / f"r{i}.csv" for i in range(3)]
        for path, workers in zip(paths, ("1", "4", "8")):
            code = run_cli("eval-interactive", "--corpus", "toy", "--seed", "11",
                           "--workers", workers, "--out", str(path))
            assert code == 0
        blobs = [p.read_bytes() for p in paths]
        assert blobs[0] == blobs[1] == blobs[2]

    def test_save_sessions_round_trips(self, tmp_path):
        log = tmp_path / "sessions.jsonl"
        code = run_cli("eval-interactive", "--corpus", "toy", "--seed", "3",
                       "--save-sessions", str(log))
        assert code == 0
        from todsim.corpus import load_sessions

        assert len(load_sessions(log)) == 40

    def test_random_system_low_success(self, capsys):
        code = run_cli("eval-interactive", "--corpus", "toy", "--system", "random",
                       "--seed", "5", "--goals", "50")
        assert code == 0
        printed = capsys.readouterr().out
        success = float(next(l for l in printed.splitlines()
                             if l.startswith("success")).split()[-1])
        assert success < 50.0


class TestEvalTraditional:
    def test_oracle_playback_bleu_100(self, tmp_path, capsys):
        code = run_cli("eval-traditional", "--corpus", "toy", "--system", "oracle",
                       "--seed", "1")
        assert code == 0
        printed = capsys.readouterr().out
        assert "bleu             100.00" in printed

    def test_scored_report(self, tmp_path, capsys):
        lm = tmp_path / "lm.json"
        clf = tmp_path / "clf.json"
        assert run_cli("train-lm", "--corpus", "toy", "--out", str(lm)) == 0
        assert run_cli("train-session-scorer", "--corpus", "toy", "--seed", "3",
                       "--out", str(clf)) == 0
        out = tmp_path / "report.csv"
        code = run_cli("eval-traditional", "--corpus", "toy", "--system", "rule",
                       "--lm", str(lm), "--classifier", str(clf),
                       "--out", str(out))
        assert code == 0
        header, first = out.read_text().splitlines()[:2]
        cells = first.split(",")
        assert cells[5] not in ("", "NA")
        assert cells[6] not in ("", "NA")


class TestTrainRl:
    def test_short_run_writes_artifacts(self, tmp_path, capsys):
        sim = tmp_path / "sim.json"
        sys_p = tmp_path / "sys.json"
        log = tmp_path / "log.csv"
        code = run_cli("train-rl", "--corpus", "toy", "--epochs", "1",
                       "--episodes-per-phase", "4", "--goals-per-epoch", "4",
                       "--seed", "0", "--out-simulator", str(sim),
                       "--out-system", str(sys_p), "--log", str(log))
        assert code == 0
        assert json.loads(sim.read_text())["format"] == "todsim-policy"
        assert json.loads(sys_p.read_text())["role"] == "system"
        lines = log.read_text().strip().splitlines()
        assert lines[0] == "epoch,phase,success_rate,mean_reward,mean_sent,mean_sess"
        assert len(lines) == 3


class TestScoreCorpus:
    def test_scores_existing_session_log(self, tmp_path, capsys):
        log = tmp_path / "sessions.jsonl"
        lm = tmp_path / "lm.json"
        clf = tmp_path / "clf.json"
        assert run_cli("eval-interactive", "--corpus", "toy", "--seed", "3",
                       "--save-sessions", str(log)) == 0
        assert run_cli("train-lm", "--corpus", "toy", "--out", str(lm)) == 0
        assert run_cli("train-session-scorer", "--corpus", "toy", "--seed", "3",
                       "--out", str(clf)) == 0
        out = tmp_path / "scored.csv"
        code = run_cli("score-corpus", "--sessions", str(log), "--lm", str(lm),
                       "--classifier", str(clf), "--out", str(out))
        assert code == 0
        printed = capsys.readouterr().out
        assert "mean sent-score" in printed
        assert len(out.read_text().strip().splitlines()) == 41

    def test_requires_some_scorer(self, tmp_path, capsys):
        log = tmp_path / "sessions.jsonl"
        assert run_cli("eval-interactive", "--corpus", "toy", "--seed", "3",
                       "--save-sessions", str(log)) == 0
        assert run_cli("score-corpus", "--sessions", str(log)) == 1


class TestReport:
    def test_renders_table_and_plot(self, tmp_path, capsys):
        csv = tmp_path / "r.csv"
        assert run_cli("eval-interactive", "--corpus", "toy", "--seed", "2",
                       "--out", str(csv)) == 0
        plot = tmp_path / "hist.svg"
        table = tmp_path / "table.txt"
        code = run_cli("report", "--in", str(csv), "--out-plot", str(plot),
                       "--out-table", str(table))
        assert code == 0
        assert plot.read_text().startswith("<svg")
        assert "sessions" in table.read_text()

    def test_empty_csv_nonzero_exit(self, tmp_path, capsys):
        csv = tmp_path / "empty.csv"
        csv.write_text("session_id,inform,success,turns,termination,"
                       "sent_score,sess_score\n")
        code = run_cli("report", "--in", str(csv))
        assert code == 1
        assert "empty report" in capsys.readouterr().err

    def test_missing_file_nonzero_exit(self, tmp_path, capsys):
        assert run_cli("report", "--in", str(tmp_path / "nope.csv")) == 1


class TestExternalAgents:
    def test_external_system_over_cli(self, tmp_path, capsys):
        import sys

        endpoint = f"cmd:{sys.executable} -m todsim.protocol_stub --role system --behavior echo"
        code = run_cli("eval-interactive", "--corpus", "toy", "--seed", "1",
                       "--goals", "3", "--system", f"external:{endpoint}",
                       "--workers", "1")
        assert code == 0


class TestConfigFile:
    def test_config_file_matches_flag_run(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 21, "workers": 4,
                                   "system": "rule", "simulator": "agenda"}))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli("eval-interactive", "--config", str(cfg),
                       "--out", str(a)) == 0
        assert run_cli("eval-interactive", "--seed", "21", "--workers", "4",
                       "--system", "rule", "--simulator", "agenda",
                       "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_explicit_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": 21, "goals": 3}))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_cli("eval-interactive", "--config", str(cfg), "--seed", "5",
                       "--out", str(a)) == 0
        assert run_cli("eval-interactive", "--seed", "5", "--goals", "3",
                       "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"turbo": True}))
        assert run_cli("eval-interactive", "--config", str(cfg)) == 1
        assert "turbo" in capsys.readouterr().err

    def test_wrong_type_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"seed": "twelve"}))
        assert run_cli("eval-interactive", "--config", str(cfg)) == 1
        assert "seed" in capsys.readouterr().err

    def test_key_for_wrong_command_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"epochs": 3}))
        assert run_cli("eval-interactive", "--config", str(cfg)) == 1
