import json
from pathlib import Path

import pytest

from bounds.params import BoundParams
from cascade.experiment import ExperimentConfig
from cascade.plan import Strategy
from settings.profiles import DEFAULT_TIERS, TIER_ORDER, tier_rank
from settings.storage import JsonConfigStorage
from utils.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def write(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return JsonConfigStorage(path)


def test_tier_profiles():
    assert TIER_ORDER == ("student", "assistant", "teacher")
    assert [DEFAULT_TIERS[t].d_hidden for t in TIER_ORDER] == [16, 32, 64]
    assert all(DEFAULT_TIERS[t].head_dim == 16 for t in TIER_ORDER)
    assert tier_rank("teacher") == 2
    with pytest.raises(KeyError):
        tier_rank("ta")


# ─────────────────────────────────────────────
# Errores con ruta
# ─────────────────────────────────────────────

@pytest.mark.parametrize("doc, key_path", [
    ({"corpus": {"grid_size": "4"}}, "corpus.grid_size"),
    ({}, "corpus"),
    ({"corpus": {}, "foo": 1}, "foo"),
    ({"corpus": {"colours": 3}}, "corpus.colours"),
    ({"corpus": {}, "steps": {"DFT": {"foo": 1}}}, "steps.DFT.foo"),
    ({"corpus": {}, "steps": {"FT": {"peak_lr": "alto"}}}, "steps.FT.peak_lr"),
    ({"corpus": {}, "loss": {"raw_sums": 1}}, "loss.raw_sums"),
    ({"corpus": {}, "tiers": "student"}, "tiers"),
    ({"corpus": {"train_seed": 3, "eval_seed": 3}}, "corpus"),
])
def test_experiment_errors_name_key_path(tmp_path, doc, key_path):
    store = write(tmp_path / "exp.json", doc)
    with pytest.raises(ConfigError) as e:
        store.load_experiment()
    assert e.value.key_path == key_path


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        JsonConfigStorage(tmp_path / "nope.json").load_experiment()
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        JsonConfigStorage(bad).load_experiment()


def test_minimal_experiment_gets_defaults(tmp_path):
    exp = write(tmp_path / "exp.json", {"corpus": {}}).load_experiment()
    assert exp == ExperimentConfig().validate()


def test_step_overrides_reach_step_configs(tmp_path):
    doc = {"corpus": {}, "steps": {"DFT": {"peak_lr": 0.01, "max_steps": 3}}}
    exp = write(tmp_path / "exp.json", doc).load_experiment()
    from pipeline.steps import StepKind

    steps = exp.step_configs(seed=0)
    assert steps[StepKind.DFT].peak_lr == 0.01
    assert steps[StepKind.DFT].max_steps == 3
    assert steps[StepKind.FT].peak_lr != 0.01


def test_save_round_trip(tmp_path):
    exp = ExperimentConfig(tiers=["student", "teacher"], strategies=["none", "bottom_up"], seeds=3)
    store = JsonConfigStorage(tmp_path / "out" / "exp.json")
    store.save(exp)
    assert store.load_experiment() == exp


# ─────────────────────────────────────────────
# Planes y barridos
# ─────────────────────────────────────────────

def test_plan_with_relative_experiment(tmp_path):
    write(tmp_path / "exp.json", {"corpus": {}})
    plan_dir = tmp_path / "plans"
    plan_dir.mkdir()
    (plan_dir / "exp.json").write_text(json.dumps({"corpus": {"grid_size": 3}}), encoding="utf-8")
    pf = write(plan_dir / "plan.json", {
        "strategy": "top_down",
        "experiment": "exp.json",
        "ladder": ["a.ckpt", "/abs/b.ckpt"],
        "student": "s.ckpt",
    }).load_plan()

    assert pf.strategy == Strategy.TOP_DOWN
    assert pf.base_dir == plan_dir
    assert pf.experiment.corpus.grid_size == 3
    assert pf.input_paths() == [plan_dir / "a.ckpt", Path("/abs/b.ckpt"), plan_dir / "s.ckpt"]


def test_plan_errors(tmp_path):
    with pytest.raises(ConfigError) as e:
        write(tmp_path / "p.json", {"strategy": "sideways", "experiment": {"corpus": {}},
                                     "ladder": ["a"], "student": "s"}).load_plan()
    assert e.value.key_path == "strategy"

    with pytest.raises(ConfigError) as e:
        write(tmp_path / "p.json", {"strategy": "bottom_up", "experiment": {"corpus": {}},
                                     "ladder": ["a"], "student": "s",
                                     "stage_overrides": {"2": {"DFT": {"lr": 1}}}}).load_plan()
    assert e.value.key_path == "stage_overrides.2.DFT.lr"

    with pytest.raises(ConfigError):
        write(tmp_path / "p.json", {"strategy": "bottom_up", "experiment": {"corpus": {}},
                                     "student": "s"}).load_plan()


def test_sweep_load(tmp_path):
    spec = write(tmp_path / "s.json", {"base": {"C_sbar": 2.0}, "axes": {"n": [10, 100]}}).load_sweep()
    assert spec.base == BoundParams(C_sbar=2.0)
    assert spec.axes == {"n": [10.0, 100.0]}
    with pytest.raises(ConfigError) as e:
        write(tmp_path / "s.json", {"axes": {"q": [1]}}).load_sweep()
    assert "q" in str(e.value)


def test_shipped_configs_load():
    store = JsonConfigStorage(CONFIG_DIR / "experiment.json")
    exp = store.load_experiment()
    assert exp.tiers == list(TIER_ORDER)
    for name in ("plan_bottom_up.json", "plan_top_down.json"):
        pf = JsonConfigStorage(CONFIG_DIR / name).load_plan()
        assert pf.experiment == exp
    spec = JsonConfigStorage(CONFIG_DIR / "bounds_sweep.json").load_sweep()
    assert spec.size() == 6 * 3 * 3 * 3 * 3
