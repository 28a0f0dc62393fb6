import json
from pathlib import Path

import jsonschema
import pytest

from conftest import FIXTURE
from mpcn import checkpoint, data
from mpcn.cli import main
from mpcn.synthetic import planted_corpus, write_jsonl

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"
FAST = ["--d", "6", "--epochs", "2", "--patience", "1", "--no-timing"]


def schema(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    rows, _ = planted_corpus(n_users=50, n_items=25, per_user=(6, 8), background_vocab=80, seed=11)
    write_jsonl(rows, d / "corpus.jsonl")
    assert main(["prepare", str(d / "corpus.jsonl"), "--out", str(d / "snap.json"), "--seed", "0"]) == 0
    assert main(["train", str(d / "snap.json"), "--out", str(d / "m.ckpt"), "--pointers", "3", *FAST]) == 0
    return d


def test_prepare_fixture_round_trip_and_stats(tmp_path, capsys):
    out = tmp_path / "snap.json"
    code, stdout, _ = run(capsys, "prepare", FIXTURE, "--out", out, "--k-core", "4", "--json")
    assert code == 0
    stats = json.loads(stdout)
    jsonschema.validate(stats, schema("prepare"))
    assert (stats["users"], stats["items"], stats["interactions"]) == (4, 5, 20)
    assert json.loads(Path(str(out) + ".stats.json").read_text()) == stats
    assert data.dumps_snapshot(data.load_snapshot(out)) == out.read_text()


def test_prepare_is_byte_reproducible(tmp_path, capsys):
    for name in ("a.json", "b.json"):
        assert run(capsys, "prepare", FIXTURE, "--out", tmp_path / name, "--k-core", "4", "--seed", "3")[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_prepare_empty_corpus_is_data_error(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, err = run(capsys, "prepare", empty, "--out", tmp_path / "s.json")
    assert code == 2 and "empty" in err


def test_train_mf_and_json_summary(workdir, capsys, tmp_path):
    code, stdout, _ = run(capsys, "train", workdir / "snap.json", "--model", "mf", "--out", tmp_path / "mf.ckpt",
                          "--json", *FAST)
    assert code == 0
    summary = json.loads(stdout)
    jsonschema.validate(summary, schema("train"))
    assert summary["model"] == "mf"
    for line in Path(summary["history"]).read_text().splitlines():
        jsonschema.validate(json.loads(line), schema("history_record"))


def test_train_prints_table_row(workdir, capsys, tmp_path):
    code, stdout, _ = run(capsys, "train", workdir / "snap.json", "--model", "fm", "--out", tmp_path / "fm.ckpt", *FAST)
    assert code == 0
    header, row = stdout.strip().splitlines()
    assert header.split() == ["model", "dev_mse", "test_mse", "epoch"]
    assert row.split()[0] == "fm"


def test_pointers_flag_sets_pointer_count(workdir):
    obj = checkpoint.read(workdir / "m.ckpt")
    assert obj["kind"] == "mpcn" and obj["config"]["n_pointers"] == 3


def test_usage_errors(workdir, capsys, tmp_path):
    snap = workdir / "snap.json"
    assert run(capsys, "train", snap, "--model", "mf", "--pointers", "3", "--out", tmp_path / "x")[0] == 1
    assert run(capsys, "train", snap, "--no-review-coattention", "--pointers", "3", "--out", tmp_path / "x")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["train", str(snap), "--model", "bogus", "--out", str(tmp_path / "x")])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_eval_matches_reported_best_dev_mse(workdir, capsys):
    code, stdout, _ = run(capsys, "eval", workdir / "snap.json", workdir / "m.ckpt", "--json")
    assert code == 0
    res = json.loads(stdout)
    jsonschema.validate(res, schema("eval"))
    assert res["dev_mse"] == checkpoint.read(workdir / "m.ckpt")["meta"]["best_dev_mse"]


def test_eval_missing_checkpoint_is_data_error(workdir, capsys):
    code, _, err = run(capsys, "eval", workdir / "snap.json", workdir / "absent.ckpt")
    assert code == 2 and "absent.ckpt" in err


def test_eval_incompatible_checkpoint(workdir, capsys, tmp_path):
    snap = tmp_path / "fixture.json"
    assert run(capsys, "prepare", FIXTURE, "--out", snap, "--k-core", "4")[0] == 0
    code, _, err = run(capsys, "eval", snap, workdir / "m.ckpt")
    assert code == 2 and "different snapshot" in err


def test_analyze_pointers_report(workdir, capsys, tmp_path):
    out = tmp_path / "report.json"
    code, stdout, _ = run(capsys, "analyze-pointers", workdir / "snap.json", workdir / "m.ckpt",
                          "--json", "--sample-size", "30", "--out", out)
    assert code == 0
    rep = json.loads(stdout)
    jsonschema.validate(rep, schema("pointer_report"))
    assert rep["all_unique"] + rep["one_repeated"] + rep["all_repeated"] == pytest.approx(100, abs=0.1)
    assert json.loads(out.read_text()) == rep


def test_analyze_pointers_single_pointer_is_usage_error(workdir, capsys, tmp_path):
    ck = tmp_path / "one.ckpt"
    assert run(capsys, "train", workdir / "snap.json", "--pointers", "1", "--out", ck, *FAST)[0] == 0
    assert run(capsys, "analyze-pointers", workdir / "snap.json", ck)[0] == 1


def test_export_affinity(workdir, capsys, tmp_path):
    ds = data.load_snapshot(workdir / "snap.json")
    user, item = ds.user_banks.owner_ids[3], ds.item_banks.owner_ids[2]
    code, stdout, _ = run(capsys, "export-affinity", workdir / "snap.json", workdir / "m.ckpt",
                          "--user", user, "--item", item, "--out", tmp_path / "aff", "--json")
    assert code == 0
    res = json.loads(stdout)
    jsonschema.validate(res, schema("export_affinity"))
    assert sorted(p.name for p in (tmp_path / "aff").glob("head*.csv")) == ["head0.csv", "head1.csv", "head2.csv"]
    code, _, _ = run(capsys, "export-affinity", workdir / "snap.json", workdir / "m.ckpt",
                     "--user", "ghost", "--item", item, "--out", tmp_path / "aff")
    assert code == 2


def test_data_dir_env_resolves_relative_paths(workdir, capsys, monkeypatch):
    monkeypatch.setenv("MPCN_DATA_DIR", str(workdir))
    code, stdout, _ = run(capsys, "eval", "snap.json", "m.ckpt", "--json")
    assert code == 0 and json.loads(stdout)["model"] == "mpcn"


def test_config_file_and_flag_precedence(workdir, capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = mpcn\nn_pointers = 2\nd = 4\nmax_epochs = 1\npatience = 1\naggregation = additive\n")
    ck = tmp_path / "c.ckpt"
    assert run(capsys, "train", workdir / "snap.json", "--config", cfg, "--aggregation", "concat", "--out", ck)[0] == 0
    conf = checkpoint.read(ck)["config"]
    assert (conf["n_pointers"], conf["d"], conf["aggregation"]) == (2, 4, "concat")
    cfg.write_text("pointer_count = 2\n")
    assert run(capsys, "train", workdir / "snap.json", "--config", cfg, "--out", ck)[0] == 1


def test_numeric_blow_up_exits_with_three(workdir, capsys, tmp_path):
    code, _, err = run(capsys, "train", workdir / "snap.json", "--model", "mf", "--lr", "1e30",
                       "--out", tmp_path / "x.ckpt", *FAST)
    assert code == 3 and "numeric" in err


def test_seeded_runs_reproduce_history(workdir, capsys, tmp_path):
    for name in ("a", "b"):
        assert run(capsys, "train", workdir / "snap.json", "--precision", "64", "--seed", "5",
                   "--out", tmp_path / f"{name}.ckpt", *FAST)[0] == 0
    a = Path(str(tmp_path / "a.ckpt") + ".history.jsonl").read_bytes()
    b = Path(str(tmp_path / "b.ckpt") + ".history.jsonl").read_bytes()
    assert a == b
