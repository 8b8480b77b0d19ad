import csv
import json
import math

import numpy as np
import pytest

from hrlnav import gridworld as gw
from hrlnav.harness import (
    OracleController,
    RandomController,
    RunConfig,
    aggregate_curves,
    door_preference,
    embodiment_heatmap,
    evaluate_checkpoint,
    evaluate_controller,
    export_curves,
    export_heatmap,
    load_config,
    read_metrics,
    save_config,
    train,
)
from hrlnav.harness.cli import main
from hrlnav.harness.config import ConfigError
from hrlnav.harness.train import MetricsWriter
from hrlnav.hrl import Embodiment
from hrlnav.nn.policy import NetConfig
from hrlnav.ppo import PpoConfig

TOY5 = gw.builtin_layout("toy5")
TOY11 = gw.builtin_layout("toy11")


def tiny_config(tmp_path, algorithm="hrl4in", **kw):
    base = dict(
        algorithm=algorithm,
        layout="toy5",
        seeds=(0,),
        total_updates=3,
        n_envs=2,
        eval_every=2,
        eval_episodes=4,
        checkpoint_every=2,
        out_dir=str(tmp_path / "run"),
        ppo=PpoConfig(rollout_steps=8, epochs=1, minibatches=1, segment_length=8),
        net=NetConfig(conv_channels=(2,), map_fc=8, vec_fc=8, hidden=8),
    )
    base.update(kw)
    return RunConfig(**base).validate()


# config


def test_config_round_trip(tmp_path):
    cfg = tiny_config(tmp_path, seeds=(3, 4))
    save_config(cfg, tmp_path / "c.json")
    back = load_config(tmp_path / "c.json")
    assert back == cfg


@pytest.mark.parametrize(
    "changes",
    [{"algorithm": "dqn"}, {"seeds": ()}, {"seeds": (1, 1)}, {"layout": "no_such_layout"}, {"precision": "float16"}, {"total_updates": 0}],
)
def test_config_validation_rejects(tmp_path, changes):
    with pytest.raises(ConfigError):
        tiny_config(tmp_path).replace(**changes).validate()


def test_config_rejects_unknown_and_foreign_keys(tmp_path):
    d = tiny_config(tmp_path).to_dict()
    with pytest.raises(ConfigError):
        RunConfig.from_dict(dict(d, learning_rate=1.0))
    with pytest.raises(ConfigError):
        RunConfig.from_dict(dict(d, ppo={"lr": 1.0}))
    with pytest.raises(ConfigError):
        RunConfig.from_dict(dict(d, format="something-else"))
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_ablation_switches_off_embodiment_selection(tmp_path):
    assert not tiny_config(tmp_path, "hrl4in_no_embodiment").hrl_config().embodiment_selection
    assert tiny_config(tmp_path).hrl_config().embodiment_selection


# metrics log


def test_metrics_log_ignores_truncated_tail(tmp_path):
    p = tmp_path / "m.jsonl"
    with MetricsWriter(p, {"seed": 0}) as mw:
        for u in range(3):
            mw.write({"update": u, "x": u * 1.5})
    with open(p, "a") as f:
        f.write('{"update": 3, "x"')  # a crash mid-write
    header, recs = read_metrics(p)
    assert header["seed"] == 0
    assert [r["update"] for r in recs] == [0, 1, 2]


def test_metrics_log_rejects_foreign_files(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"format": "other"}\n')
    with pytest.raises(ValueError):
        read_metrics(p)
    p.write_text("")
    with pytest.raises(ValueError):
        read_metrics(p)


# curves


def fake_log(offset, n=4, skip=None):
    recs = []
    for u in range(n):
        r = {"update": u, "env_steps": 16 * (u + 1), "mean_reward": u + offset, "success_rate": 0.5,
             "mean_length": 10.0 - u, "mean_energy": 3.0}
        if u == skip:
            r["mean_reward"] = None
        recs.append(r)
    return recs


def test_aggregate_two_seeds():
    rows = aggregate_curves([fake_log(0.0), fake_log(2.0, n=3, skip=1)])
    assert len(rows) == 4
    assert rows[0]["mean_reward_mean"] == 1.0 and rows[0]["mean_reward_min"] == 0.0 and rows[0]["mean_reward_max"] == 2.0
    assert rows[1]["mean_reward_mean"] == 1.0  # only the first seed reported
    assert rows[3]["seeds"] == 1


def test_export_curves_csv(tmp_path):
    paths = []
    for s, off in enumerate((0.0, 2.0)):
        p = tmp_path / f"seed_{s}" / "metrics.jsonl"
        with MetricsWriter(p, {"seed": s}) as mw:
            for r in fake_log(off):
                mw.write(r)
        paths.append(p)
    out = tmp_path / "curves.csv"
    export_curves(paths, out)
    with open(out) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 4
    assert float(rows[2]["mean_reward_mean"]) == 3.0
    assert rows[0]["seeds"] == "2"


# heatmap


def decision(cell, emb):
    return {"step": 0, "cell": list(cell), "heading": 0, "embodiment": int(emb), "subgoal": [0, 0, 0, 0]}


def test_heatmap_probabilities_and_door_preference(tmp_path):
    front, door = TOY11.door_front_cell, TOY11.door_cell
    eps = [{"decisions": [decision(front, Embodiment.BASE_ARM)] * 3 + [decision(front, Embodiment.BASE_ONLY)]},
           {"decisions": [decision((1, 1), Embodiment.BASE_ONLY), decision((1, 1), Embodiment.BASE_ARM)]}]
    usage = embodiment_heatmap(eps, TOY11.k)
    assert usage.probability(Embodiment.BASE_ARM, front) == 0.75
    assert usage.probability(Embodiment.BASE_ARM, (1, 1)) == 0.5
    assert math.isnan(usage.probability(Embodiment.BASE_ARM, (2, 2)))
    p_front, p_far = door_preference(usage, front, door)
    assert (p_front, p_far) == (0.75, 0.5)
    paths = export_heatmap(usage, tmp_path / "heat")
    assert [p.name for p in paths] == ["heat_BASE_ONLY.csv", "heat_ARM_ONLY.csv", "heat_BASE_ARM.csv"]
    rows = list(csv.reader(open(paths[2])))
    assert rows[front[1] + 1][front[0] + 1] == "0.75" and rows[3][3] == ""


def test_heatmap_degenerate_cases():
    usage = embodiment_heatmap([], TOY11.k)
    assert np.isnan(usage.probabilities()).all()
    p_front, p_far = door_preference(usage, TOY11.door_front_cell, TOY11.door_cell)
    assert math.isnan(p_front) and math.isnan(p_far)
    only_front = embodiment_heatmap([{"decisions": [decision(TOY11.door_front_cell, Embodiment.ARM_ONLY)]}], TOY11.k)
    p_front, p_far = door_preference(only_front, TOY11.door_front_cell, TOY11.door_cell)
    assert p_front == 0.0 and math.isnan(p_far)


# evaluation


def test_oracle_controller_is_optimal():
    rep = evaluate_controller(OracleController(TOY11), TOY11, 50, seed=0)
    assert rep.success_rate == 1.0
    assert rep.mean_length_ratio == pytest.approx(1.0)
    assert rep.embodiment_fractions is None
    assert 12 <= rep.mean_length <= 16


def test_random_controller_is_poor_and_seeded():
    a = evaluate_controller(RandomController(), TOY11, 10, seed=1, deterministic=False)
    b = evaluate_controller(RandomController(), TOY11, 10, seed=1, deterministic=False)
    assert a.summary() == b.summary()
    assert a.success_rate < 0.5
    assert a.mean_length > 30


def test_eval_starts_match_across_controllers():
    a = evaluate_controller(OracleController(TOY11), TOY11, 8, seed=5)
    b = evaluate_controller(RandomController(), TOY11, 8, seed=5, deterministic=False)
    assert [e["start"] for e in a.episodes] == [e["start"] for e in b.episodes]


# training runs


@pytest.mark.parametrize("algorithm", ["flat_ppo", "hrl4in", "hrl4in_no_embodiment"])
def test_tiny_training_is_bit_reproducible(tmp_path, algorithm):
    texts = []
    for rep in range(2):
        cfg = tiny_config(tmp_path, algorithm, out_dir=str(tmp_path / f"r{rep}"))
        (res,) = train(cfg)
        assert res.updates == 3
        texts.append((res.run_dir / "metrics.jsonl").read_text())
    assert texts[0] == texts[1]
    header, recs = read_metrics(tmp_path / "r0" / "seed_0" / "metrics.jsonl")
    assert header["algorithm"] == algorithm
    assert [r["update"] for r in recs] == [0, 1, 2]
    assert "eval" in recs[1] and "eval" in recs[2] and "eval" not in recs[0]
    if algorithm != "flat_ppo":
        assert set(recs[0]["embodiment"]) == {"BASE_ONLY", "ARM_ONLY", "BASE_ARM"}
    if algorithm == "hrl4in_no_embodiment":
        assert recs[0]["embodiment"]["BASE_ARM"] == 1.0


def test_checkpoint_evaluation_reproduces_training_eval(tmp_path):
    cfg = tiny_config(tmp_path, total_updates=2, eval_every=2)
    (res,) = train(cfg)
    _, recs = read_metrics(res.run_dir / "metrics.jsonl")
    rep = evaluate_checkpoint(res.run_dir / "best.ckpt", n_episodes=cfg.eval_episodes)
    assert rep.summary() == recs[-1]["eval"]
    eps = [json.loads(line) for line in open(res.run_dir / "best_eval_episodes.jsonl")]
    assert eps == rep.episodes


def test_early_stop_on_success(tmp_path):
    cfg = tiny_config(tmp_path, total_updates=10, eval_every=1, stop_success=0.0)
    (res,) = train(cfg)
    assert res.stopped_early and res.updates == 1


def test_divergence_halts_with_checkpoint(tmp_path, monkeypatch):
    import importlib

    from hrlnav.harness.train import TrainingDiverged

    train_mod = importlib.import_module("hrlnav.harness.train")

    def boom(self):
        raise FloatingPointError("non-finite PPO loss")

    monkeypatch.setattr(train_mod.HrlTrainer, "train_cycle", boom)
    cfg = tiny_config(tmp_path)
    with pytest.raises(TrainingDiverged):
        train(cfg)
    run = tmp_path / "run" / "seed_0"
    assert (run / "diverged.ckpt").exists()
    _, recs = read_metrics(run / "metrics.jsonl")
    assert recs[-1]["event"] == "diverged"


# command line


def test_cli_end_to_end(tmp_path, capsys):
    cfg = tiny_config(tmp_path, total_updates=2)
    save_config(cfg, tmp_path / "cfg.json")
    out = tmp_path / "cli_run"
    assert main(["train", "--config", str(tmp_path / "cfg.json"), "--seed", "0", "--seed", "1", "--out", str(out)]) == 0
    ckpt = out / "seed_1" / "latest.ckpt"
    assert main(["eval", "--checkpoint", str(ckpt), "--episodes", "3", "--episodes-out", str(tmp_path / "eps.jsonl")]) == 0
    text = capsys.readouterr().out
    summary = json.loads(text[text.index("{"):])
    assert summary["n_episodes"] == 3
    assert main(["analyze", "curves", "--in", str(out), "--out", str(tmp_path / "curves.csv")]) == 0
    assert (tmp_path / "curves.csv").exists()
    assert main(["analyze", "heatmap", "--in", str(tmp_path / "eps.jsonl"), "--out", str(tmp_path / "heat.csv"), "--layout", "toy5"]) == 0
    assert (tmp_path / "heat_BASE_ARM.csv").exists()


def test_cli_oracle(capsys):
    assert main(["oracle", "--layout", "toy11"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert "starts 144" in line and "unreachable 0" in line
    mean = float(line.split("mean")[1].split()[0])
    assert 12 <= mean <= 16


def test_cli_errors(tmp_path, capsys):
    assert main(["oracle", "--layout", "no_such"]) == 2
    (tmp_path / "bad.json").write_text('{"algorithm": "dqn"}')
    assert main(["train", "--config", str(tmp_path / "bad.json")]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt")]) == 2
