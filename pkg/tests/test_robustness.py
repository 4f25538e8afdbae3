import math

import numpy as np
import pytest

from relucert import (Dense, Network, classify, exact_robustness,
                      extract_adversarial, forward, pointwise_robustness,
                      record_from_json, record_to_json, verify_record)
from helpers import random_dense_relu_net


def test_second_label_estimate_on_linear_classifier(gradient_trap_net):
    record = pointwise_robustness(gradient_trap_net, np.array([0.0]))
    assert record.seed_label == 0
    assert record.target_label == 1
    assert record.rho_hat == pytest.approx(4 * math.log(9 / 8), abs=1e-9)
    assert record.adversarial[0] == pytest.approx(-4 * math.log(9 / 8), abs=1e-9)


def test_fixed_target_estimate(gradient_trap_net):
    # label 2 must beat both others; the binding constraint is against label 1:
    # score_2 - score_1 = -x + ln(1/3) >= 0, i.e. x <= -ln 3
    record = pointwise_robustness(gradient_trap_net, np.array([0.0]), targets=2)
    assert record.rho_hat == pytest.approx(math.log(3.0), abs=1e-9)
    assert record.adversarial[0] == pytest.approx(-math.log(3.0), abs=1e-9)


def test_fixed_target_equal_to_label_rejected(gradient_trap_net):
    with pytest.raises(ValueError):
        pointwise_robustness(gradient_trap_net, np.array([0.0]), targets=0)


def test_seed_on_decision_tie_has_zero_radius():
    net = Network([Dense(np.array([[1.0], [1.0]]), np.zeros(2))], 1, 2)
    record = pointwise_robustness(net, np.array([3.0]))
    assert record.rho_hat == pytest.approx(0.0, abs=1e-9)


def test_all_policy_is_min_over_fixed_targets():
    rng = np.random.default_rng(109)
    for _ in range(10):
        net = random_dense_relu_net(rng, [2, 5, 3])
        seed = rng.normal(size=2)
        label = classify(net, seed)
        fixed = [pointwise_robustness(net, seed, targets=t).rho_hat
                 for t in range(3) if t != label]
        combined = pointwise_robustness(net, seed, targets="all").rho_hat
        expected = min(fixed)
        if math.isfinite(expected):
            assert combined == pytest.approx(expected, abs=1e-9)
        else:
            assert combined == math.inf


def test_margin_monotonicity():
    rng = np.random.default_rng(113)
    for _ in range(20):
        net = random_dense_relu_net(rng, [2, 6, 3])
        seed = rng.normal(size=2)
        base = pointwise_robustness(net, seed, margin=0.0).rho_hat
        wide = pointwise_robustness(net, seed, margin=3.0).rho_hat
        assert wide >= base - 1e-9


def test_infeasible_region_reports_infinite_radius():
    # constant logits with a strict gap: no point in the region flips the label
    net = Network([Dense(np.zeros((2, 1)), np.array([1.0, 0.0]))], 1, 2)
    record = pointwise_robustness(net, np.array([0.0]))
    assert record.rho_hat == math.inf
    assert record.adversarial is None
    assert not record.found


def test_overapproximates_exact():
    rng = np.random.default_rng(127)
    for _ in range(30):
        net = random_dense_relu_net(rng, [2, 4, 2])
        seed = rng.normal(size=2)
        estimate = pointwise_robustness(net, seed).rho_hat
        exact = exact_robustness(net, seed).rho
        assert estimate >= exact - 1e-6


def test_certificate_validity_on_random_nets():
    rng = np.random.default_rng(131)
    checked = 0
    for _ in range(30):
        net = random_dense_relu_net(rng, [3, 6, 3])
        seed = rng.normal(size=3)
        for margin in (0.0, 3.0):
            record = pointwise_robustness(net, seed, margin=margin)
            if not record.found:
                continue
            checked += 1
            check = verify_record(net, seed, record, margin=margin)
            assert check.min_slack >= -1e-6
            assert check.norm_gap <= 1e-6
            assert check.ranking_slack >= -1e-6
    assert checked >= 20


def test_extract_adversarial_unrounded(gradient_trap_net):
    record = pointwise_robustness(gradient_trap_net, np.array([0.0]))
    x_adv, ok = extract_adversarial(record, gradient_trap_net)
    assert ok is None
    assert x_adv[0] == pytest.approx(-4 * math.log(9 / 8), abs=1e-9)


def test_extract_adversarial_margin_forces_strict_win():
    rng = np.random.default_rng(137)
    produced = 0
    for _ in range(20):
        net = random_dense_relu_net(rng, [2, 6, 3])
        seed = rng.normal(size=2)
        record = pointwise_robustness(net, seed, margin=3.0)
        if not record.found:
            continue
        produced += 1
        x_adv, _ = extract_adversarial(record, net)
        logits = forward(net, x_adv)
        target = record.target_label
        others = [logits[j] for j in range(3) if j != target]
        assert logits[target] >= max(others) + 3.0 - 1e-6
        assert classify(net, x_adv) == target
    assert produced >= 5


def test_extract_adversarial_integral_optimum_survives_rounding():
    # scores (-x - 1, 0): the seed 0 is labeled 1 and the flip to label 0
    # happens exactly at the integer x = -1, so the optimum needs no rounding
    net = Network([Dense(np.array([[-1.0], [0.0]]), np.array([-1.0, 0.0])), ],
                  1, 2, input_domain=(-5.0, 5.0))
    record = pointwise_robustness(net, np.array([0.0]))
    assert record.seed_label == 1
    assert record.rho_hat == pytest.approx(1.0, abs=1e-9)
    x_adv, ok = extract_adversarial(record, net, round_to_integers=True)
    assert ok is True
    assert x_adv[0] == pytest.approx(-1.0, abs=1e-9)
    assert record.rounded_ok is True


def test_extract_adversarial_requires_feasible_record():
    net = Network([Dense(np.zeros((2, 1)), np.array([1.0, 0.0]))], 1, 2)
    record = pointwise_robustness(net, np.array([0.0]))
    with pytest.raises(ValueError):
        extract_adversarial(record, net)


def test_respect_domain_constrains_search():
    # the flip needs x <= -1 but the domain stops at 0, so nothing is found
    net = Network([Dense(np.array([[0.0], [-1.0]]), np.array([0.0, -1.0])), ],
                  1, 2, input_domain=(0.0, 5.0))
    free = pointwise_robustness(net, np.array([2.0]), respect_domain=False)
    boxed = pointwise_robustness(net, np.array([2.0]), respect_domain=True)
    assert free.rho_hat == pytest.approx(3.0, abs=1e-9)
    assert boxed.rho_hat == math.inf


def test_misclassified_seed_uses_predicted_label():
    net = Network([Dense(np.array([[1.0], [-1.0]]), np.zeros(2))], 1, 2)
    # a point with ground-truth label 1 but predicted 0
    record = pointwise_robustness(net, np.array([2.0]))
    assert record.seed_label == 0


def test_adversarial_norm_equals_rho():
    rng = np.random.default_rng(139)
    for _ in range(20):
        net = random_dense_relu_net(rng, [2, 5, 2])
        seed = rng.normal(size=2)
        record = pointwise_robustness(net, seed)
        if record.found:
            gap = abs(np.abs(record.adversarial - seed).max() - record.rho_hat)
            assert gap <= 1e-6


def test_record_json_round_trip(gradient_trap_net):
    record = pointwise_robustness(gradient_trap_net, np.array([0.0]), seed_index=7)
    obj = record_to_json(record)
    assert obj["index"] == 7 and obj["target"] == 1
    back = record_from_json(obj)
    assert back.rho_hat == pytest.approx(record.rho_hat)
    assert back.adversarial == pytest.approx(record.adversarial)
    assert back.lazy.outer_iterations == record.lazy.outer_iterations


def test_record_json_infeasible_round_trip():
    net = Network([Dense(np.zeros((2, 1)), np.array([1.0, 0.0]))], 1, 2)
    record = pointwise_robustness(net, np.array([0.0]), seed_index=0)
    obj = record_to_json(record)
    assert obj["rho"] is None
    back = record_from_json(obj)
    assert back.rho_hat == math.inf
