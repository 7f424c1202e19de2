"""Experiment driver: sweeps, CSV output, chart rendering, CLI wiring."""

import csv
import subprocess
import sys
from pathlib import Path

import pytest

from webfed import data, nn, sim
from webfed.chart import render_chart
from webfed.errors import RenderError
from webfed.server import initial_global_model


def tiny_config(tmp_path, **overrides):
    base = dict(
        clients=2,
        rounds=2,
        epsilon_list=(3.0, sim.NOISE_FREE),
        dataset="synth:120",
        train_subset=80,
        test_subset=40,
        seeds=(1,),
        transport="memory",
        out_dir=tmp_path / "runs",
    )
    base.update(overrides)
    return sim.ExperimentConfig(**base)


class TestRunSingle:
    def test_zero_eta_single_round_keeps_initial_accuracy(self):
        cfg = sim.ExperimentConfig(
            clients=1, rounds=1, epsilon_list=(sim.NOISE_FREE,), eta=0.0,
            dataset="synth:100", train_subset=60, test_subset=40, seeds=(5,),
        )
        result = sim.run_single(cfg, sim.NOISE_FREE, 5)
        pool = sim.load_pool(cfg)
        _, test = sim.split_train_test(pool, 60, 40, 5)
        init_acc, _ = nn.evaluate(initial_global_model(sim.task_for(cfg, sim.NOISE_FREE, 5)), test)
        assert result.records[0].accuracy == pytest.approx(init_acc)
        assert result.final_model.bit_equal(
            initial_global_model(sim.task_for(cfg, sim.NOISE_FREE, 5))
        )

    def test_memory_and_ws_transports_bit_identical(self):
        kwargs = dict(
            clients=2, rounds=2, epsilon_list=(3.0,), dataset="synth:90",
            train_subset=60, test_subset=30, seeds=(2,),
        )
        mem = sim.run_single(sim.ExperimentConfig(transport="memory", **kwargs), 3.0, 2)
        ws = sim.run_single(sim.ExperimentConfig(transport="ws", **kwargs), 3.0, 2)
        assert mem.final_model.bit_equal(ws.final_model)
        assert [r.accuracy for r in mem.records] == [r.accuracy for r in ws.records]

    def test_synthetic_noise_free_federation_reaches_90_percent(self):
        # calibrated oracle: 5 clients, 30 rounds on the separable dataset
        cfg = sim.ExperimentConfig(
            clients=5, rounds=30, epsilon_list=(sim.NOISE_FREE,),
            dataset="synth:2000", train_subset=1500, test_subset=500, seeds=(1,),
        )
        result = sim.run_single(cfg, sim.NOISE_FREE, 1)
        assert result.records[-1].accuracy >= 0.9


def strip_wall_time(csv_path):
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = rows[0].index("wall_time_seconds")
    return [tuple(v for i, v in enumerate(row) if i != drop) for row in rows]


class TestRunExperiment:
    def test_writes_csvs_summary_and_chart(self, tmp_path):
        cfg = tiny_config(tmp_path)
        results = sim.run_experiment(cfg)
        out = Path(cfg.out_dir)
        assert len(results) == 2
        assert (out / "eps3_seed1.csv").exists()
        assert (out / "epsinf_seed1.csv").exists()
        assert (out / "summary.csv").exists()
        assert (out / "accuracy_vs_round.svg").exists()
        rows = strip_wall_time(out / "eps3_seed1.csv")
        assert rows[0] == ("round", "accuracy", "loss", "num_updates_received", "epsilon", "seed")
        assert len(rows) == 3  # header + 2 rounds

    def test_sweep_deterministic_modulo_wall_time(self, tmp_path):
        a = sim.run_experiment(tiny_config(tmp_path / "a"))
        b = sim.run_experiment(tiny_config(tmp_path / "b"))
        for ra, rb in zip(a, b):
            assert ra.final_model.bit_equal(rb.final_model)
            pa = strip_wall_time(ra.csv_path)
            pb = strip_wall_time(rb.csv_path)
            assert pa == pb

    def test_mean_accuracy_by_round(self, tmp_path):
        cfg = tiny_config(tmp_path, seeds=(1, 2))
        results = sim.run_experiment(cfg)
        curve = sim.mean_accuracy_by_round(results, 3.0)
        assert set(curve) == {1, 2}
        singles = [
            {r.round: r.accuracy for r in res.records}
            for res in results
            if res.epsilon == 3.0
        ]
        assert curve[1] == pytest.approx((singles[0][1] + singles[1][1]) / 2)


class TestRenderChart:
    def write_csv(self, path, rows, with_epsilon=True):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["round", "accuracy", "loss", "wall_time_seconds", "num_updates_received"]
            if with_epsilon:
                header += ["epsilon", "seed"]
            writer.writerow(header)
            writer.writerows(rows)

    def test_single_series_two_points_one_polyline(self, tmp_path):
        path = tmp_path / "one.csv"
        self.write_csv(path, [[1, 0.5, 1.0, 0.1, 2], [2, 0.75, 0.8, 0.1, 2]], with_epsilon=False)
        svg = render_chart([path], tmp_path / "chart.svg").read_text()
        assert svg.count("<polyline") == 1
        poly = svg.split("<polyline")[1].split("/>")[0]
        points = poly.split('points="')[1].split('"')[0].split()
        assert len(points) == 2

    def test_deterministic_bytes(self, tmp_path):
        path = tmp_path / "one.csv"
        self.write_csv(path, [[1, 0.5, 1.0, 0.1, 2], [2, 0.75, 0.8, 0.1, 2]])
        a = render_chart([path], tmp_path / "a.svg").read_bytes()
        b = render_chart([path], tmp_path / "b.svg").read_bytes()
        assert a == b

    def test_three_series_legend_labels(self, tmp_path):
        paths = []
        for eps, acc in (("3.0", 0.7), ("6.0", 0.8), ("inf", 0.9)):
            p = tmp_path / f"eps{eps}.csv"
            self.write_csv(p, [[1, acc, 1.0, 0.1, 5, eps, 1], [2, acc, 0.9, 0.1, 5, eps, 1]])
            paths.append(p)
        svg = render_chart(paths, tmp_path / "chart.svg").read_text()
        assert svg.count("<polyline") == 3
        assert "ε=3</text>" in svg
        assert "ε=6</text>" in svg
        assert "noise-free</text>" in svg
        # legend ordering: eps ascending, noise-free last
        assert svg.index("ε=3<") < svg.index("ε=6<") < svg.index("noise-free<")

    def test_seed_averaging_collapses_to_one_line(self, tmp_path):
        paths = []
        for seed, acc in ((1, 0.6), (2, 0.8)):
            p = tmp_path / f"s{seed}.csv"
            self.write_csv(p, [[1, acc, 1.0, 0.1, 5, "3.0", seed]])
            paths.append(p)
        svg = render_chart(paths, tmp_path / "chart.svg").read_text()
        assert svg.count("<polyline") == 1

    def test_empty_csv_is_render_error(self, tmp_path):
        path = tmp_path / "empty.csv"
        self.write_csv(path, [])
        with pytest.raises(RenderError):
            render_chart([path], tmp_path / "chart.svg")


class TestCli:
    def test_sim_subcommand_end_to_end(self, tmp_path):
        out = tmp_path / "cli-runs"
        proc = subprocess.run(
            [
                sys.executable, "-m", "webfed.cli", "sim",
                "--clients", "2", "--rounds", "1", "--epsilon", "inf",
                "--dataset", "synth:60", "--train-subset", "40",
                "--test-subset", "20", "--seeds", "1", "--out", str(out),
            ],
            capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        assert "final accuracy" in proc.stdout
        assert (out / "summary.csv").exists()

    def test_data_partition_subcommand(self, tmp_path):
        ds = data.synth_dataset(30, seed=1)
        images, labels = data.write_idx(ds)
        (tmp_path / "img").write_bytes(images)
        (tmp_path / "lbl").write_bytes(labels)
        out = tmp_path / "shards"
        proc = subprocess.run(
            [
                sys.executable, "-m", "webfed.cli", "data", "partition",
                "--images", str(tmp_path / "img"), "--labels", str(tmp_path / "lbl"),
                "--clients", "3", "--out", str(out),
            ],
            capture_output=True, text=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        manifest = out / "manifest.json"
        assert manifest.exists()
        import json

        entries = json.loads(manifest.read_text())["shards"]
        assert [e["n"] for e in entries] == [10, 10, 10]
