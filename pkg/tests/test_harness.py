import dataclasses

import numpy as np
import pytest

from kaleido import harness
from kaleido.cli import main
from kaleido.harness import (
    CSV_HEADER,
    CellSummary,
    Experiment,
    RunConfig,
    auc,
    auc_ordering_report,
    config_from_mapping,
    evaluate,
    expand_matrix,
    parse_config_text,
    run_experiment,
    run_matrix,
    steps_to_threshold,
)

TINY = dict(epochs=2, episodes_per_epoch=2, updates_per_cycle=3, n_eval=5, horizon=10)


def tiny(**kw):
    return RunConfig(**{**TINY, **kw})


def test_csv_header_and_rows(tmp_path):
    out = tmp_path / "run.csv"
    records = run_experiment(tiny(out=str(out)))
    lines = out.read_text().splitlines()
    assert lines[0] == "epoch,real_episodes,real_steps,success_rate,critic_loss,actor_loss,wall_seconds"
    assert lines[0].split(",") == CSV_HEADER
    assert len(lines) == 1 + len(records) == 3
    assert [r.epoch for r in records] == [1, 2]


@pytest.mark.parametrize("extra", [{}, dict(ker_n=2, ger_k=3), dict(ker_n=1, ker_mode="minibatch")])
def test_same_seed_same_bytes(tmp_path, extra):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(tiny(seed=3, record_wall_time=False, out=str(a), **extra))
    run_experiment(tiny(seed=3, record_wall_time=False, out=str(b), **extra))
    assert a.read_bytes() == b.read_bytes()


def test_different_seeds_differ():
    a = run_experiment(tiny(seed=1))
    b = run_experiment(tiny(seed=2))
    assert [r.critic_loss for r in a] != [r.critic_loss for r in b]


@pytest.mark.parametrize("n", [0, 3, 8])
def test_augmentation_accounting(n):
    exp = Experiment(tiny(ker_n=n, episodes_per_epoch=4))
    rec = exp.run_epoch(0.0)
    assert exp.buffer.inserted == (n + 1) * 4
    assert rec.real_episodes == 4 and rec.real_steps == 4 * 10
    rec2 = exp.run_epoch(0.0)
    assert rec2.real_steps == 80 and rec2.real_episodes == 8


def test_minibatch_mode_stores_originals_only():
    exp = Experiment(tiny(ker_n=8, ker_mode="minibatch"))
    exp.run_epoch(0.0)
    assert exp.buffer.inserted == 2


def test_evaluation_leaves_buffer_alone():
    exp = Experiment(tiny())
    exp.collect()
    before = (exp.buffer.inserted, exp.buffer.observations.copy())
    rate = evaluate(exp.env, exp.agent, np.random.default_rng(0), 20)
    assert 0.0 <= rate <= 1.0
    assert exp.buffer.inserted == before[0]
    np.testing.assert_array_equal(exp.buffer.observations, before[1])


def test_fixed_planes_mode():
    exp = Experiment(tiny(ker_n=3, ker_planes="fixed"))
    assert len(exp.planes) == 3
    exp.collect()
    exp.collect()
    # Copies of both episodes were mirrored across the same three planes.
    for k, r in enumerate(exp.planes, start=1):
        np.testing.assert_allclose(exp.buffer.observations[4 + k],
                                   exp.buffer.observations[4] - 2 * np.outer(exp.buffer.observations[4] @ r.normal,
                                                                             r.normal))


def test_unwritable_output_fails_before_training(tmp_path, monkeypatch):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    called = []
    monkeypatch.setattr(harness, "Experiment", lambda cfg: called.append(cfg))
    with pytest.raises(OSError):
        run_experiment(tiny(out=str(blocker / "run.csv")))
    assert not called


def test_diverged_training_aborts(monkeypatch):
    exp = Experiment(tiny())

    def boom(batch):
        raise FloatingPointError("non-finite loss")

    monkeypatch.setattr(exp.agent, "update", boom)
    exp.collect()
    with pytest.raises(harness.TrainingDiverged):
        exp.optimize()


def test_config_validation():
    with pytest.raises(ValueError):
        tiny(ker_mode="sideways").validate()
    with pytest.raises(ValueError):
        tiny(ger_k=2, ger_epsilons=(0.0,)).validate()
    with pytest.raises(ValueError):
        tiny(ger_k=1, ger_epsilons=(0.05,)).validate()
    with pytest.raises(ValueError):
        tiny(env="fetch").validate()
    with pytest.raises(ValueError):
        config_from_mapping({"no_such_key": "1"})


def test_config_text_parsing():
    raw = parse_config_text("""
        # headline configuration
        env = reach2d
        ker-n = 8       # symmetries
        ger_k = 4
        ger_epsilons = 0, 0.0125, 0.025, 0.0375
        record_wall_time = false
    """)
    cfg = config_from_mapping(raw)
    assert cfg.ker_n == 8 and cfg.ger_k == 4
    assert cfg.ger_epsilons == (0.0, 0.0125, 0.025, 0.0375)
    assert cfg.record_wall_time is False
    default = config_from_mapping({"ger_k": "4"})
    np.testing.assert_allclose(default.relabel_spec().epsilons, [0.0, 0.0125, 0.025, 0.0375])
    with pytest.raises(ValueError):
        parse_config_text("just words")


def test_matrix_expansion():
    configs = expand_matrix("ker_n = 0|1|4|8\nseeds = 0,1,2,3,4\nepochs = 3\n")
    assert len(configs) == 20
    assert {c.label for c in configs} == {"ker_n=0", "ker_n=1", "ker_n=4", "ker_n=8"}
    assert all(c.epochs == 3 for c in configs)
    assert sorted({c.seed for c in configs}) == [0, 1, 2, 3, 4]


def test_run_matrix_outputs_and_failed_cell(tmp_path, monkeypatch):
    configs = [dataclasses.replace(tiny(seed=s), label=label) for label in ("a", "b") for s in (0, 1)]
    real = harness.run_experiment

    def flaky(cfg):
        if cfg.label == "b" and cfg.seed == 1:
            raise harness.TrainingDiverged("synthetic failure")
        return real(cfg)

    monkeypatch.setattr(harness, "run_experiment", flaky)
    results = run_matrix(configs, tmp_path)
    assert sorted(p.name for p in tmp_path.glob("*.csv")) == [
        "a__seed0.csv", "a__seed1.csv", "b__seed0.csv", "summary.csv"]
    assert results["b"].failed == [1] and results["b"].seeds == [0]
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "config,runs,failed,median_auc,steps_to_0.9,median_success_by_epoch"
    assert len(summary) == 3
    assert (tmp_path / "report.txt").exists()


def test_matrix_bookkeeping_twenty_runs(tmp_path, monkeypatch):
    fake = [harness.EpochRecord(1, 1, 10, 0.5, 0.0, 0.0, 0.0)]
    monkeypatch.setattr(harness, "run_experiment", lambda cfg: (open(cfg.out, "w").close(), fake)[1])
    configs = expand_matrix("ker_n = 0|1|4|8\nseeds = 0,1,2,3,4\n")
    run_matrix(configs, tmp_path)
    assert len(list(tmp_path.glob("*__seed*.csv"))) == 20
    assert len(list(tmp_path.glob("summary.csv"))) == 1


def test_summary_statistics():
    cell = CellSummary("x", seeds=[0, 1, 2], curves=[[0.0, 0.5, 1.0], [0.0, 0.9, 1.0], [0.2, 1.0, 1.0]],
                       real_steps=[100, 200, 300])
    np.testing.assert_allclose(cell.median_curve, [0.0, 0.9, 1.0])
    assert cell.steps_to_target == 200
    assert cell.median_auc == pytest.approx(auc([0.0, 0.9, 1.0]))
    assert steps_to_threshold([0.1, 0.2], [1, 2]) is None


def test_auc_ordering_report_flags_inversions():
    cells = {}
    for label, curve in (("n0", [0.5]), ("n1", [0.6]), ("n4", [0.58]), ("n8", [0.3])):
        cells[label] = CellSummary(label, seeds=[0], curves=[curve], real_steps=[1])
    lines = auc_ordering_report(cells)
    assert "nondecreasing" in lines[4]
    assert "within 5%" in lines[5]
    assert "INVERSION" in lines[6]


def test_cli_train_and_check(tmp_path, capsys):
    out = tmp_path / "cli.csv"
    code = main(["train", "--env", "reach3d", "--seed", "7", "--epochs", "1", "--episodes-per-epoch", "2",
                 "--updates-per-cycle", "2", "--ker-n", "2", "--ker-mode", "store", "--ger-k", "2",
                 "--ger-epsilons", "0,0.025", "--n-eval", "3", "--out", str(out), "--no-wall-time"])
    assert code == 0
    assert out.read_text().splitlines()[1].endswith(",0.0")
    assert main(["train", "--ker-mode", "bogus"]) == 2


def test_cli_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 5\nepisodes_per_epoch = 2\nupdates_per_cycle = 1\nn_eval = 2\nhorizon = 5\n")
    out = tmp_path / "o.csv"
    assert main(["train", "--config", str(cfg), "--epochs", "1", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 2


def test_cli_matrix(tmp_path):
    spec = tmp_path / "m.cfg"
    spec.write_text("ker_n = 0|2\nseeds = 0,1\nepochs = 1\nepisodes_per_epoch = 1\nupdates_per_cycle = 1\n"
                    "n_eval = 2\nhorizon = 5\n")
    assert main(["matrix", "--spec", str(spec), "--out-dir", str(tmp_path / "res")]) == 0
    assert len(list((tmp_path / "res").glob("*.csv"))) == 5


def test_checkpoint_written(tmp_path):
    run_experiment(tiny(epochs=1, checkpoint_dir=str(tmp_path / "ck")))
    assert {p.name for p in (tmp_path / "ck").iterdir()} == {
        "actor.bin", "critic.bin", "target_actor.bin", "target_critic.bin", "normalizer.json"}
