import pytest

from mmln.errors import ConfigError, ModelError
from mmln.learning import build_training_set, learn_weights
from mmln.logic import load_model, parse_model
from mmln.pipeline.cohort import CohortConfig, generate_cohort, load_cohort_config

MODEL = parse_model("Fever(case)\nCXR_Consolidation(case)\nPneumonia(case)\n"
                    "1.0 Fever(x) => Pneumonia(x)\n0.5 CXR_Consolidation(x) => Pneumonia(x)")
PRIORS = {"Fever": {"pos": 0.7, "neg": 0.2}, "CXR_Consolidation": {"pos": 0.9, "neg": 0.1}}


def test_all_positive():
    db, labels = generate_cohort(MODEL, CohortConfig(50, 1.0, PRIORS))
    assert all(labels.values()) and len(labels) == 50
    assert sorted(labels) == sorted(db.constants)
    assert min(labels) == "P100000"


def test_missing_image_removes_cxr_only():
    db, _ = generate_cohort(MODEL, CohortConfig(200, 0.5, PRIORS, missing_image_rate=1.0))
    assert not any(a.predicate.startswith("CXR_") for a in db.atoms)
    assert any(a.predicate == "Fever" for a in db.atoms)


def test_deterministic():
    cfg = CohortConfig(100, 0.4, PRIORS, seed=5)
    assert generate_cohort(MODEL, cfg) == generate_cohort(MODEL, cfg)


def test_empirical_rates():
    db, labels = generate_cohort(MODEL, CohortConfig(4000, 0.3, PRIORS, seed=1))
    pos = [c for c, y in labels.items() if y]
    assert abs(len(pos) / 4000 - 0.3) < 0.03
    fever_pos = sum(any(a.predicate == "Fever" for a in db.atoms_of(c)) for c in pos) / len(pos)
    assert abs(fever_pos - 0.7) < 0.04


def test_weight_mode_labels_follow_model():
    # with no evidence at all every label is a fair coin
    _, labels = generate_cohort(MODEL, CohortConfig(2000, 0.5, {}, true_weights=(1.0, 0.5), seed=2))
    assert abs(sum(labels.values()) / 2000 - 0.5) < 0.04


def test_config_errors():
    with pytest.raises(ModelError):
        generate_cohort(MODEL, CohortConfig(5, 0.5, PRIORS, true_weights=(1.0,)))
    with pytest.raises(ModelError):
        generate_cohort(MODEL, CohortConfig(5, 0.5, {"Cough": {"pos": 0.5, "neg": 0.5}}))
    with pytest.raises(ModelError):
        generate_cohort(MODEL, CohortConfig(5, 0.5, {"Pneumonia": {"pos": 0.5, "neg": 0.5}}))
    with pytest.raises(ConfigError):
        CohortConfig(0, 0.5, PRIORS)
    with pytest.raises(ConfigError):
        CohortConfig(5, 1.5, PRIORS)
    with pytest.raises(ConfigError):
        CohortConfig(5, 0.5, {"Fever": {"pos": 0.5}})
    with pytest.raises(ConfigError):
        CohortConfig(5, 0.5, PRIORS, true_weights=(float("inf"), 0.0))


def test_bundled_configs_load(data_dir):
    for name in ("recovery", "modality", "small_data"):
        cfg, raw = load_cohort_config(data_dir / "cohorts" / f"{name}.json")
        model = load_model(data_dir / "cohorts" / raw["model"])
        db, labels = generate_cohort(model, CohortConfig.from_dict({**raw, "n_cases": 30}))
        assert len(labels) == 30


def test_weight_mode_is_learnable():
    cfg = CohortConfig(3000, 0.5, PRIORS, true_weights=(2.0, -1.0), seed=4)
    db, labels = generate_cohort(MODEL, cfg)
    w = learn_weights(MODEL, build_training_set(MODEL, db, labels)).weights
    assert abs(w[0] - 2.0) < 0.4 and abs(w[1] + 1.0) < 0.4
