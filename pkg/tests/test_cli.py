import pytest

from dialact.cli import EXIT_DATA, EXIT_INCONSISTENT, EXIT_OK, EXIT_USAGE, main
from dialact.corpus import read_corpus
from dialact.predictor import InterpolationWeights, Predictor, dump_predictor, read_predictor
from dialact.synthetic import unigram_source
from dialact.session import FAILED_MARK

from conftest import FIXTURES, golden

TINY = str(FIXTURES / "tiny.corpus")
EXCERPT = str(FIXTURES / "excerpt.corpus")
INJECTED = str(FIXTURES / "injected.corpus")


@pytest.fixture
def model_path(tmp_path):
    path = tmp_path / "t.model"
    assert main(["train", TINY, "-o", str(path), "--split", "0.5"]) == EXIT_OK
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_train_round_trip(tmp_path, inventory):
    path = tmp_path / "m"
    assert main(["train", TINY, "-o", str(path)]) == EXIT_OK
    read_predictor(path, inventory)


def test_train_split_one_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", TINY, "-o", str(tmp_path / "m"), "--split", "1.0"])
    assert exc.value.code == EXIT_USAGE


def test_train_is_deterministic(tmp_path, inventory):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["train", TINY, "-o", str(a), "--split", "0.5"])
    main(["train", TINY, "-o", str(b), "--split", "0.5"])
    assert a.read_bytes() == b.read_bytes()
    # one dialogue counted, the other used for the weights
    assert read_predictor(a, inventory).tables.total_unigrams == 6


def test_train_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "train", str(tmp_path / "none"), "-o", str(tmp_path / "m"))
    assert code == EXIT_DATA and err


def test_bad_corpus_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.corpus"
    bad.write_text("D1\tD1/1\tA\tNOT_AN_ACT\t-\thi\n")
    code, _, err = run(capsys, "train", str(bad), "-o", str(tmp_path / "m"))
    assert code == EXIT_DATA and "NOT_AN_ACT" in err


def test_eval_table(model_path, capsys):
    code, out, _ = run(capsys, "eval", model_path, TINY, EXCERPT)
    assert code == EXIT_OK
    assert out == golden("eval_table.txt", out)


def test_eval_options(model_path, capsys):
    _, out, _ = run(capsys, "eval", model_path, TINY, "--k", "1,5", "--skip-initial", "--totals")
    lines = out.splitlines()
    assert lines[0] == "Pred.\tTS1" and lines[1].startswith("1\t") and lines[2].startswith("5\t")
    assert lines[3] == "TS1: 2 dialogues, 12 acts"


def test_replay_conformant(capsys):
    code, out, _ = run(capsys, "replay", TINY, "D1")
    assert code == EXIT_OK
    assert out.rstrip().endswith("turns=6 inconsistencies=0 repairs=0 complete=yes")
    assert "Prediction:" not in out


def test_replay_injected(model_path, capsys):
    code, out, _ = run(capsys, "replay", INJECTED, "D2X", "--model", model_path)
    assert code == EXIT_OK
    assert "inconsistencies=1 repairs=1" in out
    assert out.count("inconsistency\t") == 1 and out.count("  repair: ") == 1
    code, _, _ = run(capsys, "replay", INJECTED, "D2X", "--strict")
    assert code == EXIT_INCONSISTENT
    code, _, _ = run(capsys, "replay", TINY, "D1", "--strict")
    assert code == EXIT_OK


def test_replay_excerpt_trace_style(model_path, capsys):
    code, out, _ = run(capsys, "replay", EXCERPT, "EX", "--model", model_path)
    assert code == EXIT_OK
    preds = [l for l in out.splitlines() if l.startswith("Prediction: (")]
    assert len(preds) == 6
    for line in preds:
        inner = line[len("Prediction: ("):].split(")")[0]
        assert len(inner.split()) == 2
        assert line.endswith(")") or line.endswith(") " + FAILED_MARK)
    # turn 2 follows INIT and the tiny model predicts VORSCHLAG first
    assert preds[0] == "Prediction: (VORSCHLAG BEGRUESSUNG)"
    assert FAILED_MARK in preds[1]
    assert out == golden("replay_excerpt.txt", out)


def test_replay_unknown_dialogue(capsys):
    code, _, err = run(capsys, "replay", TINY, "D9")
    assert code == EXIT_USAGE and "D9" in err


def test_generate_and_bayes(tmp_path, capsys, tiny_tables):
    source = tmp_path / "t.source"
    source.write_text(dump_predictor(Predictor(tiny_tables, InterpolationWeights(0.0, 0.0, 1.0))))
    a, b = tmp_path / "a.corpus", tmp_path / "b.corpus"
    assert main(["generate", str(source), "--count", "20", "--seed", "7", "-o", str(a)]) == EXIT_OK
    assert main(["generate", str(source), "--count", "20", "--seed", "7", "-o", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert len(read_corpus(a)) == 20
    code, out, _ = run(capsys, "bayes", str(source), str(a), "--k", "1,2")
    assert code == EXIT_OK and out.splitlines()[0] == "Pred.\tBayes"


def test_generate_nonterminating(tmp_path, capsys, inventory):
    probs = {a: 1.0 for a in inventory.acts}
    probs["VERABSCHIEDUNG"] = 0.0
    source = tmp_path / "s"
    source.write_text(dump_predictor(unigram_source(probs, inventory.acts)))
    code, _, err = run(capsys, "generate", str(source), "--count", "1")
    assert code == EXIT_DATA and "10000" in err.replace(",", "").replace("_", "")


def test_generate_unknown_terminal(tmp_path, capsys, tiny_tables):
    source = tmp_path / "s"
    source.write_text(dump_predictor(Predictor(tiny_tables, InterpolationWeights(0.0, 0.0, 1.0))))
    assert run(capsys, "generate", str(source), "--terminal", "ENDE")[0] == EXIT_DATA
    assert run(capsys, "generate", str(source), "--terminal", "AKZEPTANZ", "--count", "3")[0] == EXIT_OK


def test_malformed_source(tmp_path, capsys):
    source = tmp_path / "s"
    source.write_text("[weights]\n0.5 0.5\n")
    assert run(capsys, "generate", str(source))[0] == EXIT_DATA


def test_usage_errors(capsys):
    for argv in (["eval"], ["nope"], ["eval", "m", "t", "--k", "0"], ["replay", TINY, "D1", "--k", "x"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == EXIT_USAGE
