"""End-to-end CLI runs at miniature scale: the full pipeline in a tmp dir,
rerun byte-identity, overwrite refusal, stale-input detection, and the
error paths of each subcommand."""

import json
from pathlib import Path

import pytest

from headprune.cli import main

TINY = ["--vocab", "32", "--max-len", "12"]
TINY_DATA = ["gen-data", "--langs", "rev,swap", "--train-size", "400",
             "--dev-size", "16", "--test-size", "16",
             "--len-min", "4", "--len-max", "8", *TINY]
TINY_TRAIN = ["train", "--epochs", "6", "--batch-size", "32", "--lr", "3e-3",
              "--warmup", "20", "--d-model", "32", "--heads", "2",
              "--enc-layers", "2", "--dec-layers", "1", "--ffn", "64", *TINY]


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory, capfd_off=None):
    """gen-data + train once for the whole module; commands under test
    write into per-test subdirectories."""
    d = tmp_path_factory.mktemp("cli")
    assert _run(*TINY_DATA, "--out-dir", d) == 0
    assert _run(*TINY_TRAIN, "--out-dir", d) == 0
    return d


def test_gen_data_writes_corpus_and_manifest(tmp_path, capsys):
    assert _run(*TINY_DATA, "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    assert "gen-data: wrote" in out
    names = {p.name for p in tmp_path.iterdir()}
    assert {"train.tgt", "dev.tgt", "test.tgt", "train.rev.src",
            "dev.swap.src", "gen-data.manifest.json"} <= names
    manifest = json.loads((tmp_path / "gen-data.manifest.json").read_text())
    assert manifest["seed"] == 0
    assert manifest["config"]["langs"] == "rev,swap"
    assert set(manifest["outputs"]) == names - {"gen-data.manifest.json"}


def test_gen_data_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(*TINY_DATA, "--out-dir", a) == 0
    assert _run(*TINY_DATA, "--out-dir", b) == 0
    for f in a.iterdir():
        if f.name.endswith(".manifest.json"):
            # manifests agree except for the out-dir they record
            left = json.loads(f.read_text())
            right = json.loads((b / f.name).read_text())
            left["config"].pop("out_dir"), right["config"].pop("out_dir")
            assert left == right
        else:
            assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_refuses_overwrite_without_force(tmp_path, capsys):
    assert _run(*TINY_DATA, "--out-dir", tmp_path) == 0
    capsys.readouterr()
    assert _run(*TINY_DATA, "--out-dir", tmp_path) == 1
    err = capsys.readouterr().err
    assert "--force" in err and "train.tgt" in err
    assert _run(*TINY_DATA, "--out-dir", tmp_path, "--force") == 0


def test_train_reports_progress_and_writes_checkpoint(pipeline_dir, capsys):
    names = {p.name for p in pipeline_dir.iterdir()}
    assert {"model.json", "model.bin", "train_log.csv",
            "train.manifest.json"} <= names
    log = (pipeline_dir / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,loss,dev_loss"
    assert len(log) == 7  # header + 6 epochs


def test_translate_emits_hypotheses_and_bleu(pipeline_dir, tmp_path, capsys):
    rc = _run("translate", "--model-dir", pipeline_dir, "--data-dir",
              pipeline_dir, "--split", "dev", "--pair", "rev",
              "--out-dir", tmp_path)
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("BLEU = ")
    hyp = (tmp_path / "dev.rev.hyp").read_text().splitlines()
    assert len(hyp) == 16
    assert all(tok.isdigit() for line in hyp for tok in line.split())


def test_translate_with_mask_and_rerun_identity(pipeline_dir, tmp_path):
    mask = tmp_path / "heads.mask"
    mask.write_text("# prune list\nenc 0 1\ncross 0 0\n")
    args = ("translate", "--model-dir", pipeline_dir, "--data-dir",
            pipeline_dir, "--split", "dev", "--pair", "swap",
            "--mask", mask, "--out-dir", tmp_path)
    assert _run(*args) == 0
    name = "dev.swap.hyp"
    first = (tmp_path / name).read_bytes()
    manifest_name = f"translate-dev-swap-{mask.stem}.manifest.json"
    first_manifest = (tmp_path / manifest_name).read_bytes()
    assert _run(*args, "--force") == 0
    assert (tmp_path / name).read_bytes() == first
    # identical outputs; manifests agree apart from recording --force
    left = json.loads(first_manifest)
    right = json.loads((tmp_path / manifest_name).read_text())
    left["config"].pop("force"), right["config"].pop("force")
    assert left == right


def test_dump_attn_validate_metrics_chain(pipeline_dir, tmp_path, capsys):
    assert _run("dump-attn", "--model-dir", pipeline_dir, "--data-dir",
                pipeline_dir, "--split", "dev", "--out-dir", tmp_path) == 0
    captures = tmp_path / "attn.dev.jsonl"
    assert captures.exists()
    capsys.readouterr()
    assert _run("validate", "--model-dir", pipeline_dir,
                "--captures", captures, "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK (")
    assert _run("metrics", "--model-dir", pipeline_dir, "--captures",
                captures, "--out-dir", tmp_path) == 0
    tables = sorted(p.name for p in tmp_path.glob("metrics_*.csv"))
    # 3 kinds x 2 attention types x (rev, swap, ALL)
    assert len(tables) == 18
    assert "metrics_conf_enc_ALL.csv" in tables
    assert "metrics_cov_cross_swap.csv" in tables


def test_validate_reports_corrupted_captures(pipeline_dir, tmp_path, capsys):
    assert _run("dump-attn", "--model-dir", pipeline_dir, "--data-dir",
                pipeline_dir, "--split", "dev", "--pairs", "rev",
                "--out-dir", tmp_path) == 0
    captures = tmp_path / "attn.dev.jsonl"
    lines = captures.read_text().splitlines()
    rec = json.loads(lines[0])
    rec["w"] = [[0.9] + [0.0] * (len(rec["w"][0]) - 1)] * len(rec["w"])
    lines[0] = json.dumps(rec, sort_keys=True)
    captures.write_text("".join(line + "\n" for line in lines))
    capsys.readouterr()
    assert _run("validate", "--model-dir", pipeline_dir,
                "--captures", captures, "--out-dir", tmp_path) == 1
    out = capsys.readouterr().out
    assert "row-sum" in out
    # metrics refuses the same corrupted dump
    assert _run("metrics", "--model-dir", pipeline_dir, "--captures",
                captures, "--out-dir", tmp_path) == 1


def test_heatmap_rank_and_curve_chain(pipeline_dir, tmp_path, capsys):
    assert _run("dump-attn", "--model-dir", pipeline_dir, "--data-dir",
                pipeline_dir, "--split", "dev", "--out-dir", tmp_path) == 0
    captures = tmp_path / "attn.dev.jsonl"
    assert _run("metrics", "--model-dir", pipeline_dir, "--captures",
                captures, "--kinds", "conf", "--attn", "enc",
                "--out-dir", tmp_path) == 0
    tables = ",".join(str(tmp_path / f"metrics_conf_enc_{p}.csv")
                      for p in ("rev", "swap"))
    assert _run("heatmap", "--tables", tables, "--out-dir", tmp_path) == 0
    svg = (tmp_path / "heatmap_conf_enc.svg").read_text()
    assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")

    assert _run("rank", "--model-dir", pipeline_dir, "--table",
                tmp_path / "metrics_conf_enc_ALL.csv", "--out-dir", tmp_path) == 0
    ranking = tmp_path / "ranking_conf_enc_ALL.csv"
    assert ranking.read_text().count("\n") == 5  # header + 4 enc heads

    assert _run("curve", "--model-dir", pipeline_dir, "--data-dir",
                pipeline_dir, "--split", "dev", "--ranking", ranking,
                "--step", "2", "--out-dir", tmp_path) == 0
    curve_csv = (tmp_path / "curve_conf_enc_ALL_on_ALL.csv").read_text()
    ks = [int(line.split(",")[3]) for line in curve_csv.splitlines()[1:]]
    assert ks == [0, 2, 4]
    assert (tmp_path / "curve_conf_enc_ALL_on_ALL.svg").exists()


def test_rank_rand_and_rand_curve(pipeline_dir, tmp_path):
    assert _run("rank", "--model-dir", pipeline_dir, "--method", "rand",
                "--attn", "enc", "--seed", "3", "--out-dir", tmp_path) == 0
    text = (tmp_path / "ranking_rand-3_enc_ALL.csv").read_text()
    assert "rand-3" in text
    assert _run("curve", "--model-dir", pipeline_dir, "--data-dir",
                pipeline_dir, "--split", "dev", "--method", "rand",
                "--attn", "enc", "--runs", "2", "--step", "4",
                "--out-dir", tmp_path) == 0
    curve_csv = (tmp_path / "curve_rand_enc_ALL_on_ALL.csv").read_text()
    methods = {line.split(",")[0] for line in curve_csv.splitlines()[1:]}
    assert methods == {"rand-0", "rand-1", "rand"}  # per-seed runs + mean


def test_sbs_call_count_and_log_replay(pipeline_dir, tmp_path, capsys):
    assert _run("sbs", "--model-dir", pipeline_dir, "--data-dir", pipeline_dir,
                "--split", "dev", "--attn", "cross", "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    assert "sbs finished with 3 translate calls" in out  # N=2: 2*3/2
    log_lines = (tmp_path / "sbs_log_cross_ALL.jsonl").read_text().splitlines()
    assert len(log_lines) == 2
    manifest = json.loads(
        (tmp_path / "sbs-cross-ALL.manifest.json").read_text())
    assert manifest["config"]["translate_calls"] == 3
    ranking = (tmp_path / "ranking_sbs_cross_ALL.csv").read_text()
    assert ranking.count("\n") == 3  # header + 2 cross heads


def test_mwu_between_curves(pipeline_dir, tmp_path, capsys):
    for method, seed in (("rand", 1), ("rand", 2)):
        assert _run("curve", "--model-dir", pipeline_dir, "--data-dir",
                    pipeline_dir, "--split", "dev", "--method", method,
                    "--attn", "enc", "--runs", "1", "--seed", seed,
                    "--out", f"c{seed}", "--out-dir", tmp_path) == 0
    capsys.readouterr()
    assert _run("mwu", "--curve-a", tmp_path / "c1.csv", "--curve-b",
                tmp_path / "c2.csv", "--method-a", "rand", "--method-b",
                "rand", "--out-dir", tmp_path) == 0
    out = capsys.readouterr().out
    header, row = (tmp_path / "mwu.csv").read_text().splitlines()
    assert header == "metric,attn,pairA,pairB,U,n,m,p,mode"
    assert row in out
    p_value = float(row.split(",")[7])
    assert 0.0 < p_value <= 1.0


def test_rank_std_across_pairs(pipeline_dir, tmp_path, capsys):
    assert _run("dump-attn", "--model-dir", pipeline_dir, "--data-dir",
                pipeline_dir, "--split", "dev", "--out-dir", tmp_path) == 0
    assert _run("metrics", "--model-dir", pipeline_dir, "--captures",
                tmp_path / "attn.dev.jsonl", "--kinds", "conf",
                "--attn", "enc", "--out-dir", tmp_path) == 0
    for pair in ("rev", "swap"):
        assert _run("rank", "--model-dir", pipeline_dir, "--table",
                    tmp_path / f"metrics_conf_enc_{pair}.csv",
                    "--out-dir", tmp_path) == 0
    rankings = ",".join(str(tmp_path / f"ranking_conf_enc_{p}.csv")
                        for p in ("rev", "swap"))
    assert _run("rank-std", "--rankings", rankings, "--out-dir", tmp_path) == 0
    std_csv = (tmp_path / "rank_std_enc.csv").read_text().splitlines()
    assert std_csv[0] == "attn,layer,head,std"
    assert len(std_csv) == 5
    assert (tmp_path / "rank_std_enc.svg").exists()
    capsys.readouterr()
    assert _run("rank-std", "--rankings",
                f"{tmp_path / 'ranking_conf_enc_rev.csv'},"
                f"{tmp_path / 'ranking_conf_enc_rev.csv'}",
                "--out-dir", tmp_path, "--force") == 1
    assert "two rankings claim pair" in capsys.readouterr().err


def test_stale_input_is_detected(pipeline_dir, tmp_path, capsys):
    d = tmp_path / "work"
    d.mkdir()
    for f in pipeline_dir.iterdir():
        if f.is_file():
            (d / f.name).write_bytes(f.read_bytes())
    with open(d / "dev.rev.src", "a") as fh:
        fh.write("6 7\n")  # corpus edited after gen-data recorded it
    capsys.readouterr()
    rc = _run("translate", "--model-dir", d, "--data-dir", d, "--split",
              "dev", "--pair", "rev", "--out-dir", d / "out")
    assert rc == 1
    assert "stale input dev.rev.src" in capsys.readouterr().err


def test_cli_error_reporting(tmp_path, capsys):
    assert _run("translate", "--model-dir", tmp_path, "--data-dir", tmp_path,
                "--split", "dev", "--pair", "rev", "--out-dir", tmp_path) == 1
    assert "error:" in capsys.readouterr().err
    assert _run("gen-data", "--out-dir", tmp_path, "--threads", "0") == 1
    assert "threads" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        _run("no-such-command")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        _run("--version")
    assert exc.value.code == 0
    assert "headprune" in capsys.readouterr().out
