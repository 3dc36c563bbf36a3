import numpy as np
import pytest

from partsched import (
    BeliefGrid,
    CostParams,
    DiscretePdf,
    Policy,
    ScoreLikelihood,
    TinyInstance,
)
from partsched.policy import LABEL_NEG, LABEL_POS


def pdf_from_masses(masses, lo=0.0, hi=1.0):
    """DiscretePdf with the given per-bin probability masses (floored, normalized)."""
    return DiscretePdf.from_weights(lo, hi, np.asarray(masses, dtype=float))


def spiked_likelihood(part_id, n_bins, pos_value, neg_value, spike_bin):
    """Likelihood whose pos/neg densities take chosen values in one bin.

    The remaining mass spreads uniformly over the other bins so both pdfs
    stay normalized; useful for hand-computable belief updates.
    """
    width = 1.0 / n_bins

    def bins_with(value):
        rest = (1.0 - value * width) / ((n_bins - 1) * width)
        bins = np.full(n_bins, rest)
        bins[spike_bin] = value
        return DiscretePdf(lo=0.0, hi=1.0, bins=bins)

    return ScoreLikelihood(part_id=part_id, pos=bins_with(pos_value), neg=bins_with(neg_value))


def uninformative_likelihood(part_id, n_bins=8):
    pdf = pdf_from_masses(np.ones(n_bins))
    return ScoreLikelihood(part_id=part_id, pos=pdf, neg=pdf)


def separable_likelihood(part_id, n_bins=8, lo=0.0, hi=1.0):
    """Positive mass on the top bin, negative mass on the bottom bin."""
    pos = np.zeros(n_bins)
    pos[-1] = 1.0
    neg = np.zeros(n_bins)
    neg[0] = 1.0
    return ScoreLikelihood(part_id=part_id,
                           pos=pdf_from_masses(pos, lo, hi),
                           neg=pdf_from_masses(neg, lo, hi))


def overlapping_likelihood(part_id, n_bins=8, tilt=0.7, seed=None):
    """Partially informative: pos tilted to high bins, neg to low bins."""
    idx = np.arange(n_bins)
    pos = tilt ** (n_bins - 1 - idx)
    neg = tilt ** idx
    return ScoreLikelihood(part_id=part_id,
                           pos=pdf_from_masses(pos),
                           neg=pdf_from_masses(neg))


def mixed_likelihood(part_id, n_bins=8):
    """Partially informative with at most 4 active bins per class (overlap on 2)."""
    pos = np.zeros(n_bins)
    pos[2:6] = [0.1, 0.2, 0.3, 0.4]
    neg = np.zeros(n_bins)
    neg[0:4] = [0.4, 0.3, 0.2, 0.1]
    return ScoreLikelihood(part_id=part_id,
                           pos=pdf_from_masses(pos),
                           neg=pdf_from_masses(neg))


def two_part_instance(costs=None, d=11):
    return TinyInstance(
        likelihoods=(mixed_likelihood(0), separable_likelihood(1)),
        costs=costs or CostParams(8.0, 8.0),
        grid=BeliefGrid(d),
    )


def constant_policy(n_parts, action, d=11, costs=None):
    """Policy that takes the same (label) action in every state."""
    assert action in (LABEL_NEG, LABEL_POS)
    shape = (1 << n_parts, d)
    return Policy(
        n_parts=n_parts,
        grid=BeliefGrid(d),
        costs=costs or CostParams(1.0, 1.0),
        actions=np.full(shape, action, dtype=np.uint8),
        values=np.zeros(shape),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
