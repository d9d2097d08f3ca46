import csv
import json

import pytest

from hyperttt import cli
from hyperttt.agent import EpisodeRecord, Outcome
from hyperttt.game import BotKind
from hyperttt.harness import (AGGREGATE_COLUMNS, EPISODE_COLUMNS, SUMMARY_COLUMNS,
                              ExperimentConfig, compute_metrics, greedy_win_rate,
                              pretrain_advisor, read_episode_csv, run_experiment, train_solo,
                              write_episode_csv)
from hyperttt.policy import QTable


def recs(rewards, steps=3):
    outcome = {1.0: Outcome.WIN, -1.0: Outcome.LOSS, 0.0: Outcome.DRAW}
    return [EpisodeRecord(i, outcome[r], r, steps) for i, r in enumerate(rewards)]


def test_metrics_examples():
    m = compute_metrics(recs([1, 1, 1]), window=1, threshold=1.0)
    assert m.episodes_to_threshold == 1
    assert compute_metrics(recs([0] * 50), window=10).undiscounted_return == 0
    assert compute_metrics(recs([0] * 50), window=10).episodes_to_threshold is None
    mixed = recs([1, -1, 0, 1, 1], steps=4)
    assert compute_metrics(mixed, window=2, eval_gamma=1.0).discounted_return == 2.0
    assert compute_metrics(mixed, window=2, eval_gamma=0.5).discounted_return == pytest.approx(2 * 0.125)
    assert compute_metrics(recs([1.0] * 300), window=100, threshold=0.7).episodes_to_threshold == 100
    with pytest.raises(ValueError):
        compute_metrics([])


def test_threshold_uses_trailing_window():
    rewards = [-1.0] * 50 + [1.0] * 100
    m = compute_metrics(recs(rewards), window=100, threshold=0.6)
    # trailing mean at episode n (n >= 100) is (2n - 200) / 100
    assert m.episodes_to_threshold == 130
    assert m.episodes_to_threshold >= 100
    assert -150 <= m.undiscounted_return <= 150


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(episodes=50, reward_window=100)
    with pytest.raises(ValueError):
        ExperimentConfig(mode="duel")
    assert ExperimentConfig(seeds=[1, 2, 3]).repetitions == 3


def test_episode_csv_round_trip(tmp_path):
    path = tmp_path / "e.csv"
    rows = [EpisodeRecord(0, Outcome.WIN, 1.0, 3, 2, 1, 4.5)]
    write_episode_csv(path, rows, with_wall=True)
    assert read_episode_csv(path) == rows
    write_episode_csv(path, rows)
    assert path.read_text().splitlines()[0] == ",".join(EPISODE_COLUMNS)


def test_paired_row_accounting_and_schema(tmp_path):
    cfg = ExperimentConfig(mode="paired", episodes=100, seeds=[3], reward_window=20,
                           advisor_pretrain_episodes=300, output_dir=tmp_path)
    result = run_experiment(cfg)
    for arm in ("transfer", "solo"):
        with open(tmp_path / f"seed3_{arm}_episodes.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 100
        assert list(rows[0]) == EPISODE_COLUMNS
    with open(tmp_path / "aggregate.csv") as fh:
        agg = list(csv.DictReader(fh))
    assert [r["arm"] for r in agg] == ["transfer", "solo"]
    assert list(agg[0]) == AGGREGATE_COLUMNS
    with open(tmp_path / "summary.csv") as fh:
        assert next(csv.reader(fh)) == SUMMARY_COLUMNS
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["seeds"] == [3]
    assert manifest["hyper_params"]["alpha"] == 0.1
    assert result["per_seed"][3]["transfer"].advice_asked > 0
    assert result["per_seed"][3]["solo"].advice_asked == 0


def test_solo_runs_are_byte_identical(tmp_path):
    texts = []
    for run in ("a", "b"):
        cfg = ExperimentConfig(mode="solo", episodes=150, seeds=[11], output_dir=tmp_path / run)
        run_experiment(cfg)
        texts.append((tmp_path / run / "seed11_solo_episodes.csv").read_bytes())
    assert texts[0] == texts[1]


def test_pretrain_checkpoint(tmp_path):
    cfg = ExperimentConfig(advisor_pretrain_episodes=1500, output_dir=tmp_path, seeds=[0])
    path = pretrain_advisor(cfg)
    q, header = QTable.load(path)
    assert int(header["episodes"]) == 1500
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            assert len(line.split()) == 3
    mtime = path.stat().st_mtime_ns
    assert pretrain_advisor(cfg) == path and path.stat().st_mtime_ns == mtime
    cfg.fresh_advisor = True
    pretrain_advisor(cfg)
    assert path.stat().st_mtime_ns != mtime


def test_checkpoint_preserves_greedy_play(tmp_path):
    agent, _ = train_solo(1500, seed=2, bot=BotKind.RANDOM)
    before = greedy_win_rate(agent.policy, 100, seed=4)
    agent.policy.save(tmp_path / "q.txt", agent.config.hyper_params)
    loaded, _ = QTable.load(tmp_path / "q.txt")
    after = greedy_win_rate(loaded, 100, seed=4)
    assert abs(before - after) <= 0.05
    assert before > 0.5


def test_learning_advisor_mode(tmp_path):
    cfg = ExperimentConfig(mode="transfer", episodes=100, seeds=[0], reward_window=20,
                           advisor_pretrain_episodes=300, advisor_mode="learning",
                           output_dir=tmp_path)
    result = run_experiment(cfg)
    assert result["per_seed"][0]["transfer"].episodes == 100


def test_cli_experiment(tmp_path, capsys):
    code = cli.main(["experiment", "--mode", "solo", "--episodes", "60", "--seeds", "1,2",
                     "--reward-window", "10", "--output-dir", str(tmp_path)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary) == {"solo"}
    assert (tmp_path / "seed2_solo_episodes.csv").exists()


def test_cli_pretrain(tmp_path, capsys):
    ckpt = tmp_path / "adv.q"
    assert cli.main(["pretrain", "--pretrain-episodes", "50", "--advisor-checkpoint",
                     str(ckpt), "--output-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == str(ckpt)
    assert QTable.load(ckpt)[1]["episodes"] == "50"


def test_cli_rejects_bad_config(tmp_path):
    assert cli.main(["experiment", "--episodes", "10", "--output-dir", str(tmp_path)]) == 1
