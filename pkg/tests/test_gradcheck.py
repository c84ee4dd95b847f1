import numpy as np
import pytest

from selfrep_nca.gradcheck import (analytic_gradient, gradcheck, numeric_gradient, random_instance, reference_loss,
                                   relative_errors)
from selfrep_nca.grid import AliveRule, Boundary
from selfrep_nca.rng import RngStream
from selfrep_nca.rule import UpdateMode, rollout_states
from selfrep_nca.training import batch_loss


@pytest.mark.parametrize("mode", [UpdateMode(), UpdateMode.sync()], ids=["async", "sync"])
def test_reference_forward_matches_engine(mode):
    inst = random_instance(3, mode=mode)
    final, _ = rollout_states(inst.states, inst.net, inst.n_steps, mode, RngStream(inst.seed), inst.boundary)
    ref = reference_loss(inst.states, inst.net, inst.target_image, inst.n_steps, mode, inst.seed, inst.boundary)
    assert abs(ref - batch_loss(final, inst.target_image).mean()) < 1e-12


@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_finite_differences(seed):
    report = gradcheck(random_instance(seed))
    assert report.passed, report


def test_gradients_cell_rule_and_zero_boundary():
    inst = random_instance(5, mode=UpdateMode(alive_rule=AliveRule.CELL))
    assert gradcheck(inst).passed
    inst = random_instance(6)
    inst.boundary = Boundary.ZERO
    assert gradcheck(inst).passed


def test_relative_error_floor():
    e = relative_errors(np.array([0.0, 1.0]), np.array([0.0, 1.0 + 1e-9]))
    assert e.max() < 1e-8


def test_numeric_gradient_shape():
    inst = random_instance(2, size=5, n_steps=2, hidden=3)
    assert numeric_gradient(inst).shape == analytic_gradient(inst).shape == inst.net.flat().shape
