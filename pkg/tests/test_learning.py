import math

import numpy as np
import pytest

from mmln.errors import ConfigError, EvidenceError, ModelError
from mmln.grounding import EvidenceDB
from mmln.inference import exact_marginal
from mmln.learning import (LearnConfig, PLLStatistics, TrainingSet, ascend, build_training_set,
                           learn_weights, pll_gradient, pseudo_log_likelihood)
from mmln.logic import Atom, load_model, parse_model
from mmln.pipeline.cohort import CohortConfig, generate_cohort

from .oracles import central_difference

ONE_RULE = parse_model("Fever(case)\nPneumonia(case)\n0 Fever(x) => Pneumonia(x)")


def single_case(label, *preds):
    db = EvidenceDB.from_atoms([Atom.ground(p, "A") for p in preds], constants=["A"])
    return build_training_set(ONE_RULE, db, {"A": label})


def random_cohort(rng, n_rules=None, n_cases=None):
    preds = [f"E{i}" for i in range(5)]
    decls = "\n".join(f"{p}(case)" for p in preds) + "\nPneumonia(case)\n"
    rules = []
    for _ in range(n_rules or rng.integers(1, 6)):
        chosen = rng.choice(preds, size=rng.integers(1, 3), replace=False)
        rules.append("0 " + " ^ ".join(("!" if rng.random() < 0.3 else "") + f"{p}(x)" for p in chosen)
                     + " => Pneumonia(x)")
    model = parse_model(decls + "\n".join(rules))
    n = n_cases or rng.integers(1, 51)
    cases = [f"C{i}" for i in range(n)]
    atoms = [Atom.ground(p, c) for c in cases for p in preds if rng.random() < 0.5]
    db = EvidenceDB.from_atoms(atoms, constants=cases)
    labels = {c: bool(rng.random() < 0.5) for c in cases}
    return model, build_training_set(model, db, labels)


def test_pll_zero_weights():
    m, ts = random_cohort(np.random.default_rng(0), n_cases=17)
    assert pseudo_log_likelihood(m, np.zeros(len(m.formulas)), ts) == pytest.approx(17 * math.log(0.5), abs=1e-12)


@pytest.mark.parametrize("label, expected", [(True, -0.126928), (False, -2.126928)])
def test_pll_one_rule(label, expected):
    ts = single_case(label, "Fever")
    pll = pseudo_log_likelihood(ONE_RULE, [2.0], ts, l2_sigma=None)
    assert pll == pytest.approx(expected, abs=1e-6)
    # enumeration oracle: log of the exact conditional of the observed label
    p = exact_marginal(ONE_RULE, [2.0], EvidenceDB.from_atoms([Atom.ground("Fever", "A")]), "A").probability
    assert pll == pytest.approx(math.log(p if label else 1 - p), abs=1e-12)


def test_pll_prior_term():
    ts = single_case(True, "Fever")
    with_prior = pseudo_log_likelihood(ONE_RULE, [2.0], ts, l2_sigma=10.0)
    assert with_prior == pytest.approx(-0.126928 - 4 / 200, abs=1e-6)


@pytest.mark.parametrize("label, present, expected", [
    (True, ("Fever",), 0.5),
    (False, ("Fever",), -0.5),
    (True, (), 0.0),
    (False, (), 0.0),
])
def test_gradient_hand_values(label, present, expected):
    g = pll_gradient(ONE_RULE, [0.0], single_case(label, *present))
    assert g[0] == pytest.approx(expected, abs=1e-15)


def test_dimension_mismatch():
    ts = single_case(True, "Fever")
    with pytest.raises(ModelError):
        pseudo_log_likelihood(ONE_RULE, [1.0, 2.0], ts)
    with pytest.raises(ModelError):
        pll_gradient(ONE_RULE, [], ts)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(30):
        m, ts = random_cohort(rng)
        stats = PLLStatistics(m, ts)
        w = rng.uniform(-4, 4, len(m.formulas))
        g = pll_gradient(m, w, stats)
        fd = central_difference(lambda v: pseudo_log_likelihood(m, v, stats), list(w))
        for a, b in zip(g, fd):
            assert abs(a - b) <= 1e-6 * max(1.0, abs(a))


def test_statistics_are_reused():
    m, ts = random_cohort(np.random.default_rng(2))
    stats = PLLStatistics(m, ts)
    w = np.ones(len(m.formulas))
    assert pseudo_log_likelihood(m, w, stats) == pseudo_log_likelihood(m, w, ts)


def test_learn_starts_from_zero_and_ascends():
    m, ts = random_cohort(np.random.default_rng(4), n_rules=3, n_cases=40)
    r = learn_weights(m, ts)
    assert r.history[0] == pytest.approx(40 * math.log(0.5))
    assert all(b >= a for a, b in zip(r.history, r.history[1:]))
    assert r.converged and r.grad_norm < 1e-5


def test_concave_two_starts_agree():
    rng = np.random.default_rng(6)
    for _ in range(5):
        m, ts = random_cohort(rng, n_cases=50)
        stats = PLLStatistics(m, ts)
        cfg = LearnConfig()
        a = ascend(stats, np.zeros(len(m.formulas)), cfg)
        b = ascend(stats, rng.uniform(-4, 4, len(m.formulas)), cfg)
        assert np.max(np.abs(a.weights - b.weights)) <= 1e-3


def test_prior_limit():
    rng = np.random.default_rng(8)
    for _ in range(5):
        m, ts = random_cohort(rng, n_cases=50)
        r = learn_weights(m, ts, LearnConfig(l2_sigma=0.01))
        assert np.max(np.abs(r.weights)) < 0.01


def test_separable_data_stays_finite():
    cases = [f"C{i}" for i in range(30)]
    db = EvidenceDB.from_atoms([Atom.ground("Fever", c) for c in cases])
    ts = build_training_set(ONE_RULE, db, {c: True for c in cases})
    r = learn_weights(ONE_RULE, ts)
    assert np.all(np.isfinite(r.weights))
    assert r.weights[0] > 5
    # stationary point of 30 * (1 - sigmoid(w)) = w / sigma^2
    w = r.weights[0]
    assert 30 * (1 - 1 / (1 + math.exp(-w))) == pytest.approx(w / 100, abs=1e-4)


def test_shuffle_seed_does_not_move_fixed_point():
    m, ts = random_cohort(np.random.default_rng(9), n_cases=50)
    a = learn_weights(m, ts, LearnConfig(seed=1)).weights
    b = learn_weights(m, ts, LearnConfig(seed=2)).weights
    assert np.max(np.abs(a - b)) <= 1e-6


def test_deterministic_for_seed():
    m, ts = random_cohort(np.random.default_rng(10), n_cases=50)
    assert np.array_equal(learn_weights(m, ts).weights, learn_weights(m, ts).weights)


def test_errors():
    with pytest.raises(EvidenceError):
        learn_weights(ONE_RULE, TrainingSet(()))
    with pytest.raises(ConfigError):
        LearnConfig(l2_sigma=0)
    with pytest.raises(ConfigError):
        LearnConfig(max_iters=0)
    with pytest.raises(EvidenceError):
        build_training_set(ONE_RULE, EvidenceDB.from_atoms([], constants=["A"]), {})


def test_fever_rule_outweighs_cough_rule(data_dir):
    # cohort shaped so Fever is the stronger pneumonia indicator
    m = load_model(data_dir / "models" / "multimodal.mln")
    priors = {"CXR_Lung_inflammation": {"pos": 0.9, "neg": 0.2},
              "Fever": {"pos": 0.8, "neg": 0.1}, "Cough": {"pos": 0.7, "neg": 0.6},
              "Expectoration": {"pos": 0.6, "neg": 0.5}}
    db, labels = generate_cohort(m, CohortConfig(2000, 0.5, priors, seed=3))
    r = learn_weights(m, build_training_set(m, db, labels))
    fever, cough = r.weights[1], r.weights[0]
    assert fever > cough
    assert fever == max(r.weights)
