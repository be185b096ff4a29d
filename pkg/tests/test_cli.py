import json
import os
import subprocess
import sys

import numpy as np
import pytest

SRC = os.path.join(os.path.dirname(__file__), "..", "src")


def run_cli(*args, cwd=None):
    env = dict(os.environ, PYTHONPATH=os.path.abspath(SRC), PRUNEKIT_THREADS="0")
    return subprocess.run([sys.executable, "-m", "prunekit.cli", *args],
                          capture_output=True, cwd=cwd, env=env)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Toy model + weights + dataset laid out on disk for CLI runs."""
    from prunekit import graph, storage
    root = tmp_path_factory.mktemp("cli")
    spec = graph.build_toy_cnn(classes=4, frames=32, bins=16, channels=(4, 8))
    graph.save(spec, root / "toy.model.json")
    ckpt = storage.init_random(spec, seed=1)
    storage.save_checkpoint(ckpt, str(root / "toy"))
    storage.generate_toy_dataset(str(root / "data"),
                                 storage.ToyDatasetConfig(clips=24, classes=4,
                                                          frames=32, bins=16), seed=0)
    clip = storage.load_dataset(str(root / "data" / "index.tsv"), bins=16).load_clip(0)
    clip.astype("<f4").tofile(root / "clip.f32")
    return root


class TestPresetExport:
    def test_writes_cnn14_architecture(self, tmp_path):
        from prunekit import graph
        out = tmp_path / "cnn14.json"
        res = run_cli("preset-export", "--out", str(out))
        assert res.returncode == 0
        assert graph.load(out) == graph.build_cnn14_preset()


class TestAnalyze:
    def test_json_totals(self, tmp_path):
        out = tmp_path / "cnn14.json"
        run_cli("preset-export", "--out", str(out))
        res = run_cli("analyze", "--model", str(out))
        doc = json.loads(res.stdout)
        assert doc["totals"]["params"] == 80_753_615

    def test_csv(self, workdir):
        res = run_cli("analyze", "--model", str(workdir / "toy.model.json"),
                      "--format", "csv")
        assert res.returncode == 0
        assert res.stdout.decode().startswith("layer,kind,params,macs\n")


class TestImportance:
    def test_weight_norm_default(self, workdir):
        res = run_cli("importance", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"))
        doc = json.loads(res.stdout)
        assert doc["criterion"] == "weight_norm"
        assert set(doc["layers"]) == {"C1", "C2"}

    def test_activation_energy_with_calibration(self, workdir):
        res = run_cli("importance", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--calibration", str(workdir / "data" / "index.tsv"))
        doc = json.loads(res.stdout)
        assert doc["criterion"] == "activation_energy"
        assert doc["calibration_fingerprint"] != ""


class TestPrune:
    def test_ratio_prune_outputs(self, workdir, tmp_path):
        from prunekit import graph
        out = tmp_path / "pruned"
        res = run_cli("prune", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--ratio", "0.5", "--layers", "C2", "--out", str(out))
        assert res.returncode == 0
        assert b"params -" in res.stdout
        pruned = graph.load(f"{out}.model.json")
        assert pruned.layer("C2").out_channels == 4
        # pruned checkpoint loads against the pruned spec
        from prunekit.storage import load_checkpoint
        load_checkpoint(str(out), pruned)
        plan = json.loads(open(f"{out}.plan.json").read())
        assert len(plan["targets"]["C2"]) == 4

    def test_ratio_out_of_range(self, workdir, tmp_path):
        res = run_cli("prune", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--ratio", "1.0", "--out", str(tmp_path / "x"))
        assert res.returncode != 0
        lines = res.stderr.decode().strip().split("\n")
        assert lines[0] == "RatioOutOfRange"
        assert json.loads(lines[1])["category"] == "RatioOutOfRange"

    def test_stdout_carries_only_data_on_error(self, workdir, tmp_path):
        res = run_cli("prune", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--ratio", "1.0", "--out", str(tmp_path / "x"))
        assert res.stdout == b""


class TestFinetuneEvalInfer:
    def test_finetune_writes_checkpoint_and_log(self, workdir, tmp_path):
        out = tmp_path / "trained"
        log = tmp_path / "log.csv"
        res = run_cli("finetune", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--dataset", str(workdir / "data" / "index.tsv"),
                      "--iterations", "10", "--seed", "3", "--out", str(out),
                      "--log", str(log))
        assert res.returncode == 0
        text = log.read_text()
        assert text.startswith("iteration,loss,map\n")
        from prunekit import graph
        from prunekit.storage import load_checkpoint
        load_checkpoint(str(out), graph.load(workdir / "toy.model.json"))

    def test_eval_json(self, workdir):
        res = run_cli("eval", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--dataset", str(workdir / "data" / "index.tsv"))
        doc = json.loads(res.stdout)
        assert 0.0 <= doc["map"] <= 1.0
        assert len(doc["ap"]) == 4

    def test_infer_topk(self, workdir):
        res = run_cli("infer", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--clip", str(workdir / "clip.f32"), "--topk", "3")
        lines = res.stdout.decode().strip().split("\n")
        assert lines[0] == "class,probability"
        assert len(lines) == 4
        probs = [float(l.split(",")[1]) for l in lines[1:]]
        assert all(0 < p < 1 for p in probs)
        assert probs == sorted(probs, reverse=True)

    def test_infer_wrong_bins(self, workdir, tmp_path):
        bad = tmp_path / "bad.f32"
        np.zeros((32, 24), "<f4").tofile(bad)
        res = run_cli("infer", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"), "--clip", str(bad))
        assert res.returncode != 0
        assert res.stderr.decode().split("\n")[0] == "ShapeMismatch"


class TestSweep:
    def test_cnn14_reduction_rows(self, tmp_path, cnn14, cnn14_checkpoint):
        # ratios {0.25, 0.5, 0.75} over the last six convs reproduce the
        # analyzer's closed-form reductions
        from prunekit import graph, storage
        graph.save(cnn14, tmp_path / "cnn14.model.json")
        storage.save_checkpoint(cnn14_checkpoint, str(tmp_path / "cnn14"))
        res = run_cli("sweep", "--model", str(tmp_path / "cnn14.model.json"),
                      "--weights", str(tmp_path / "cnn14"),
                      "--ratios", "0.25,0.5,0.75")
        assert res.returncode == 0, res.stderr
        rows = [l.split(",") for l in res.stdout.decode().strip().split("\n")[1:]]
        by_ratio = {r[0]: r for r in rows}
        assert by_ratio["0.25"][3] == "41.3" and by_ratio["0.25"][4] == "22.0"
        assert by_ratio["0.5"][3] == "71.3" and by_ratio["0.5"][4] == "38.1"
        assert by_ratio["0.75"][3] == "89.9" and by_ratio["0.75"][4] == "48.3"

    def test_three_ratio_summary(self, workdir, tmp_path):
        res = run_cli("sweep", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"),
                      "--ratios", "0.25,0.5", "--layers", "C1,C2",
                      "--out", str(tmp_path / "sweep"))
        lines = res.stdout.decode().strip().split("\n")
        assert lines[0] == "ratio,params,macs,params_reduction_pct,macs_reduction_pct,map"
        assert len(lines) == 3
        assert os.path.exists(tmp_path / "sweep" / "ratio_0.5.model.json")

    def test_empty_ratio_list(self, workdir):
        res = run_cli("sweep", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"), "--ratios", "")
        assert res.returncode == 0
        assert res.stdout.decode().strip().split("\n") == [
            "ratio,params,macs,params_reduction_pct,macs_reduction_pct,map"]

    def test_bad_ratio(self, workdir):
        res = run_cli("sweep", "--model", str(workdir / "toy.model.json"),
                      "--weights", str(workdir / "toy"), "--ratios", "0.5,1.0")
        assert res.returncode != 0
        assert res.stderr.decode().split("\n")[0] == "RatioOutOfRange"


class TestPipelineParity:
    def test_cli_chain_matches_library_chain(self, workdir, tmp_path):
        # importance -> prune -> finetune through the CLI equals the same
        # pipeline through the library, byte for byte on the checkpoint
        from prunekit import graph, importance, pruning, storage, training
        model = str(workdir / "toy.model.json")
        weights = str(workdir / "toy")
        data = str(workdir / "data" / "index.tsv")

        rep_path = tmp_path / "imp.json"
        run_cli("importance", "--model", model, "--weights", weights,
                "--out", str(rep_path))
        pruned_prefix = tmp_path / "cli_pruned"
        run_cli("prune", "--model", model, "--weights", weights,
                "--importance", str(rep_path), "--ratio", "0.5", "--layers", "C2",
                "--out", str(pruned_prefix))
        trained_prefix = tmp_path / "cli_trained"
        run_cli("finetune", "--model", f"{pruned_prefix}.model.json",
                "--weights", str(pruned_prefix), "--dataset", data,
                "--iterations", "8", "--seed", "3",
                "--out", str(trained_prefix), "--log", str(tmp_path / "log.csv"))

        spec = graph.load(model)
        ckpt = storage.load_checkpoint(weights, spec)
        report = importance.score_model(spec, ckpt.tensors, "weight_norm")
        plan = pruning.make_plan(report, {"C2": 0.5})
        pspec, pckpt = pruning.apply_plan(spec, ckpt, plan)
        ds = storage.load_dataset(data, bins=16)
        trained, _ = training.finetune(pspec, pckpt, ds,
                                       training.TrainConfig(iterations=8, seed=3))
        lib_prefix = tmp_path / "lib_trained"
        storage.save_checkpoint(trained, str(lib_prefix))
        for ext in (".manifest.json", ".weights.bin"):
            a = open(f"{trained_prefix}{ext}", "rb").read()
            b = open(f"{lib_prefix}{ext}", "rb").read()
            assert a == b


class TestDeterminism:
    def test_every_command_byte_identical_across_runs(self, workdir, tmp_path):
        model = str(workdir / "toy.model.json")
        weights = str(workdir / "toy")
        data = str(workdir / "data" / "index.tsv")
        cases = [
            ("preset-export", []),
            ("analyze", ["--model", model, "--format", "csv"]),
            ("analyze", ["--model", model, "--format", "json"]),
            ("importance", ["--model", model, "--weights", weights]),
            ("importance", ["--model", model, "--weights", weights,
                            "--calibration", data]),
            ("eval", ["--model", model, "--weights", weights, "--dataset", data]),
            ("infer", ["--model", model, "--weights", weights,
                       "--clip", str(workdir / "clip.f32")]),
            ("sweep", ["--model", model, "--weights", weights,
                       "--ratios", "0.25,0.5", "--layers", "C1,C2"]),
        ]
        for cmd, args in cases:
            r1 = run_cli(cmd, *args)
            r2 = run_cli(cmd, *args)
            assert r1.returncode == r2.returncode == 0, (cmd, r1.stderr)
            assert r1.stdout == r2.stdout, cmd

    def test_prune_and_finetune_outputs_identical(self, workdir, tmp_path):
        model = str(workdir / "toy.model.json")
        weights = str(workdir / "toy")
        data = str(workdir / "data" / "index.tsv")
        outs = []
        for tag in ("a", "b"):
            pp = tmp_path / f"pruned_{tag}"
            run_cli("prune", "--model", model, "--weights", weights,
                    "--ratio", "0.5", "--out", str(pp))
            tp = tmp_path / f"trained_{tag}"
            run_cli("finetune", "--model", f"{pp}.model.json", "--weights", str(pp),
                    "--dataset", data, "--iterations", "6", "--seed", "9",
                    "--out", str(tp), "--log", str(tmp_path / f"log_{tag}.csv"))
            outs.append((pp, tp))
        for ext in (".model.json", ".manifest.json", ".weights.bin", ".plan.json"):
            assert (open(f"{outs[0][0]}{ext}", "rb").read()
                    == open(f"{outs[1][0]}{ext}", "rb").read()), ext
        for ext in (".manifest.json", ".weights.bin"):
            assert (open(f"{outs[0][1]}{ext}", "rb").read()
                    == open(f"{outs[1][1]}{ext}", "rb").read()), ext
        assert ((tmp_path / "log_a.csv").read_bytes()
                == (tmp_path / "log_b.csv").read_bytes())
