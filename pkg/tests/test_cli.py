"""CLI subcommands: exit codes, file outputs, reports."""

import os

import numpy as np
import pytest

from bqn import presets, tensorio
from bqn.cli import main
from bqn.core.serialize import save
from tests.conftest import random_toy_net
from tests.test_lpfile import golden_toy_system

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


@pytest.fixture()
def catch_model(tmp_path):
    rng = np.random.default_rng(200)
    net = presets.build_network("bqn-small", (10, 10, 4), 3, rng)
    path = tmp_path / "model.bqn"
    save(net, path)
    return str(path)


def write_config(tmp_path, **overrides):
    lines = {
        "run": {"env": "catch", "size": "10", "preset": "bqn-small", "seed": "3"},
        "train": {
            "gamma": "0.9",
            "max_steps": "400",
            "prefill": "150",
            "buffer_capacity": "1200",
            "batch_size": "16",
            "sync_every": "200",
        },
        "epsilon": {"decay_steps": "300"},
    }
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        lines.setdefault(section, {})[name] = value
    path = tmp_path / "run.cfg"
    with open(path, "w") as fh:
        for section, keys in lines.items():
            fh.write(f"[{section}]\n")
            for k, v in keys.items():
                fh.write(f"{k} = {v}\n")
    return str(path)


class TestTrain:
    def test_missing_config_exits_1(self, capsys):
        assert main(["train", "--config", "/no/such/file.cfg"]) == 1

    def test_bad_config_exits_1_with_line_number(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("[run]\nenv  catch\n")
        assert main(["train", "--config", str(path)]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_short_train_run(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["train", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "metrics.csv").exists()
        assert (out / "model.bqn").exists()

    def test_seed_env_override_changes_run(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        monkeypatch.setenv("BQN_SEED", "11")
        assert main(["train", "--config", cfg, "--out", str(out_a)]) == 0
        monkeypatch.setenv("BQN_SEED", "12")
        assert main(["train", "--config", cfg, "--out", str(out_b)]) == 0
        a = (out_a / "metrics.csv").read_text().splitlines()[1]
        b = (out_b / "metrics.csv").read_text().splitlines()[1]
        assert a != b


class TestEvaluate:
    def test_corrupt_model_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.bqn"
        bad.write_bytes(b"garbage")
        assert main(["evaluate", "--model", str(bad), "--env", "catch-10"]) == 1

    def test_reports_mean_and_returns_csv(self, catch_model, capsys):
        code = main(
            [
                "evaluate",
                "--model",
                catch_model,
                "--env",
                "catch-10",
                "--episodes",
                "20",
                "--epsilon",
                "0.05",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "mean return" in out
        assert "episode,return_raw" in out
        assert out.count("\n") >= 22

    def test_record_writes_frames(self, catch_model, tmp_path):
        rec = tmp_path / "frames"
        code = main(
            [
                "evaluate",
                "--model",
                catch_model,
                "--env",
                "catch-10",
                "--episodes",
                "3",
                "--record",
                str(rec),
            ]
        )
        assert code == 0
        frames = sorted(os.listdir(rec))
        assert len(frames) == 27  # 3 episodes x 9 states
        frame = tensorio.load_tensor(rec / frames[0])
        assert frame.shape == (10, 10, 4)


class TestInspect:
    def test_bqn_preset_ratio_at_least_30(self, tmp_path, capsys):
        rng = np.random.default_rng(201)
        net = presets.build_network("bqn", (84, 84, 4), 4, rng)
        path = tmp_path / "bqn.bqn"
        save(net, path, include_latents=False)
        assert main(["inspect", "--model", str(path)]) == 0
        out = capsys.readouterr().out
        ratio = float(out.split("size ratio")[1].split(":")[1].strip().rstrip("x"))
        assert ratio >= 30.0

    def test_bqn_l_ratio_smaller_than_bqn(self, tmp_path, capsys):
        rng = np.random.default_rng(202)
        ratios = {}
        for preset in ("bqn", "bqn-l"):
            net = presets.build_network(preset, (84, 84, 4), 4, rng)
            path = tmp_path / f"{preset}.bqn"
            save(net, path, include_latents=False)
            main(["inspect", "--model", str(path)])
            out = capsys.readouterr().out
            ratios[preset] = float(
                out.split("size ratio")[1].split(":")[1].strip().rstrip("x")
            )
        assert ratios["bqn-l"] < ratios["bqn"]

    def test_corrupt_file_exits_1(self, tmp_path):
        bad = tmp_path / "bad.bqn"
        bad.write_bytes(b"BQN1" + b"\x00" * 3)
        assert main(["inspect", "--model", str(bad)]) == 1


class TestExportLp:
    def _toy_model_and_frame(self, tmp_path):
        net, iset, prop = golden_toy_system()
        model = tmp_path / "toy.bqn"
        save(net, model)
        frame = tmp_path / "frame.bqnx"
        tensorio.save_tensor(frame, iset.center.reshape(1, 1, 3))
        return str(model), str(frame)

    def test_golden_file_via_cli(self, tmp_path, capsys):
        model, frame = self._toy_model_and_frame(tmp_path)
        out = tmp_path / "export.lp"
        code = main(
            [
                "export-lp",
                "--model",
                model,
                "--property",
                f"frame={frame},eps=0.25,norm=l1,delta=1e-6",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        with open(os.path.join(GOLDEN_DIR, "toy_property.lp"), "rb") as fh:
            golden = fh.read()
        assert out.read_bytes() == golden

    def test_unwritable_path_exits_1(self, tmp_path):
        model, frame = self._toy_model_and_frame(tmp_path)
        code = main(
            [
                "export-lp",
                "--model",
                model,
                "--property",
                f"frame={frame}",
                "--out",
                str(tmp_path / "no" / "dir" / "x.lp"),
            ]
        )
        assert code == 1

    def test_bad_property_spec_exits_1(self, tmp_path):
        model, frame = self._toy_model_and_frame(tmp_path)
        code = main(
            ["export-lp", "--model", model, "--property", "nonsense", "--out", "x.lp"]
        )
        assert code == 1


class TestVerifyBatch:
    def _setup_batch(self, tmp_path, epsilon, net=None, count=4):
        rng = np.random.default_rng(203)
        net = net if net is not None else random_toy_net(
            rng, n_in=12, widths=[8], n_act=3, input_shape=(2, 2, 3)
        )
        model = tmp_path / "m.bqn"
        save(net, model)
        frames = tmp_path / "frames"
        os.makedirs(frames)
        for i in range(count):
            x = rng.uniform(0.2, 0.8, size=(2, 2, 3))
            tensorio.save_tensor(frames / f"frame_{i:03d}.bqnx", x)
        batch = tmp_path / "batch.cfg"
        batch.write_text(
            "[batch]\n"
            f"model = {model}\n"
            f"frames = {frames}\n"
            f"count = {count}\n"
            f"epsilon = {epsilon}\n"
            "norm = l1\n"
            "timeout_s = 30\n"
        )
        return str(batch)

    def test_epsilon_zero_batch_all_verified(self, tmp_path, capsys):
        batch = self._setup_batch(tmp_path, 0.0)
        out_dir = tmp_path / "verdicts"
        assert main(["verify", "--batch", batch, "--out", str(out_dir)]) == 0
        out = capsys.readouterr().out
        assert "Verified                    4" in out
        csv_text = (out_dir / "verdicts.csv").read_text()
        assert csv_text.splitlines()[0] == (
            "property_id,verdict,epsilon,norm,nodes,lp_calls,wall_ms,counterexample_path"
        )
        assert csv_text.count("holds") == 4

    def test_counts_sum_to_batch_size(self, tmp_path, capsys):
        batch = self._setup_batch(tmp_path, 0.3)
        out_dir = tmp_path / "verdicts"
        assert main(["verify", "--batch", batch, "--out", str(out_dir)]) == 0
        out = capsys.readouterr().out
        counts = [
            int(line.split()[-1])
            for line in out.splitlines()
            if line.startswith(("Verified", "Unverified", "Skipped"))
        ]
        total = int(
            [line for line in out.splitlines() if line.startswith("Total")][0].split()[-1]
        )
        assert sum(counts) == total == 4

    def test_falsifiable_property_yields_counterexample_file(self, tmp_path, capsys):
        from bqn.core.layers import BinaryDense, ScaleShift
        from bqn.core.network import BinarizedNetwork

        # the analytic boundary instance: attackable at eps > 0.3 (linf),
        # and l1 radius 0.45 > 0.3 reaches it too
        layers = [BinaryDense(2, 2), ScaleShift(2)]
        net = BinarizedNetwork(
            (2,),
            layers,
            {0: np.array([[1.0, 1.0], [-1.0, 1.0]])},
            {1: np.ones(2)},
            {1: np.zeros(2)},
        )
        model = tmp_path / "m.bqn"
        save(net, model)
        frames = tmp_path / "frames"
        os.makedirs(frames)
        tensorio.save_tensor(frames / "f0.bqnx", np.array([0.3, 0.5]).reshape(1, 1, 2))
        batch = tmp_path / "batch.cfg"
        batch.write_text(
            "[batch]\n"
            f"model = {model}\n"
            f"frames = {frames}\n"
            "count = 1\nepsilon = 0.45\nnorm = l1\ntimeout_s = 30\n"
        )
        out_dir = tmp_path / "v"
        assert main(["verify", "--batch", str(batch), "--out", str(out_dir)]) == 0
        out = capsys.readouterr().out
        assert "Unverified (counterexample) 1" in out
        cex_files = [f for f in os.listdir(out_dir) if f.startswith("counterexample")]
        assert len(cex_files) == 1
        x = tensorio.load_tensor(out_dir / cex_files[0])
        q = net.forward(x.reshape(2))
        assert q[1] >= q[0] - 1e-6

    def test_missing_batch_file_exits_1(self):
        assert main(["verify", "--batch", "/no/such/batch.cfg"]) == 1
