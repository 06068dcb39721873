import subprocess
import sys

import pytest

from fmit.cli import COMMANDS, build_parser, main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["gen-data", "--seed", "7", "--out", str(out), "--types", "PER,LOC",
                 "--train-size", "20", "--dev-size", "6", "--test-size", "6"]) == 0
    return out


def test_gen_data_is_reproducible(tmp_path, data_dir, capsys):
    main(["gen-data", "--seed", "7", "--out", str(tmp_path), "--types", "PER,LOC",
          "--train-size", "20", "--dev-size", "6", "--test-size", "6"])
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "stats.txt"):
        assert (tmp_path / name).read_bytes() == (data_dir / name).read_bytes()
    assert "Num of Samples" in capsys.readouterr().out


def test_train_eval_decode(tmp_path, data_dir, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[train]\nepochs = 2\nd = 8\nheads = 2\nlayers = 1\nlr = 1e-3\n")
    ckpt = tmp_path / "m.ckpt"
    assert main(["train", "--config", str(cfg), "--data", str(data_dir), "--out", str(ckpt), "--seed", "1"]) == 0
    log = (tmp_path / "m.ckpt.log.tsv").read_text().splitlines()
    assert len(log) == 2 and all(len(line.split("\t")) == 5 for line in log)
    capsys.readouterr()
    kv = tmp_path / "m.kv"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data_dir), "--split", "dev", "--out", str(kv)]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split() == ["type", "P", "R", "F1", "support"]
    assert "overall.f1=" in kv.read_text()
    assert main(["decode", "--ckpt", str(ckpt), "--input", str(data_dir / "test.jsonl"),
                 "--out", str(tmp_path / "pred.jsonl")]) == 0
    assert len((tmp_path / "pred.jsonl").read_text().splitlines()) == 6


def test_flags_override_config(tmp_path, data_dir):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[train]\nepochs = 3\nd = 8\nheads = 2\nlayers = 1\n")
    log = tmp_path / "log.tsv"
    assert main(["train", "--config", str(cfg), "--epochs", "1", "--data", str(data_dir),
                 "--out", str(tmp_path / "m"), "--log", str(log)]) == 0
    assert len(log.read_text().splitlines()) == 1


def test_same_seed_same_checkpoint(tmp_path, data_dir):
    args = ["--data", str(data_dir), "--epochs", "1", "--d", "8", "--heads", "2", "--layers", "1", "--seed", "4"]
    main(["train", "--out", str(tmp_path / "a")] + args)
    main(["train", "--out", str(tmp_path / "b")] + args)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_inspect_lattice(data_dir, capsys):
    assert main(["inspect-lattice", "--input", str(data_dir / "dev.jsonl"), "--index", "1", "--distances"]) == 0
    out = capsys.readouterr().out
    assert "[CLS]" in out and "VISUAL" in out and "hh\tht\tth\ttt" in out


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--d", "16", "--layers", "1", "--max-entries", "4"]) == 0
    out = capsys.readouterr().out
    assert "main.W_r" in out and out.strip().splitlines()[-1].endswith("ok")
    assert main(["gradcheck", "--d", "8", "--heads", "2", "--max-entries", "2", "--tolerance", "0"]) == 3


def test_exit_codes(tmp_path, data_dir, capsys):
    assert main([]) == 1
    assert main(["train", "--data", str(data_dir)]) == 1
    assert main(["eval", "--bogus"]) == 1
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "m")]) == 2
    (tmp_path / "bad.jsonl").write_text('{"tokens": ["a"], "labels": ["I-PER"]}\n')
    assert main(["inspect-lattice", "--input", str(tmp_path / "bad.jsonl")]) == 2
    assert main(["inspect-lattice", "--input", str(data_dir / "dev.jsonl"), "--index", "99"]) == 2
    (tmp_path / "junk.ckpt").write_bytes(b"nothing")
    assert main(["eval", "--ckpt", str(tmp_path / "junk.ckpt"), "--data", str(data_dir)]) == 2
    (tmp_path / "c.ini").write_text("[train]\nnot_a_key = 1\n")
    assert main(["train", "--config", str(tmp_path / "c.ini"), "--data", str(data_dir), "--out", "x"]) == 2
    err = capsys.readouterr().err
    assert "not_a_key" in err


def test_numeric_failure_exit_code(tmp_path, data_dir, monkeypatch):
    from fmit import trainer

    def boom(*a, **k):
        raise trainer.NumericError("non-finite loss nan at epoch 1, batch 1")
    monkeypatch.setattr(trainer, "train", boom)
    assert main(["train", "--data", str(data_dir), "--out", str(tmp_path / "m")]) == 3


def test_every_command_documents_seed_and_config():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == set(COMMANDS)
    for name, p in sub.choices.items():
        text = p.format_help()
        assert "--seed" in text and "--config" in text, name


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fmit", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "gen-data" in out.stdout
