"""Recursive Bayesian state estimation with a known model.

The filter is factored per grid cell: each cell carries its own simplex
over states. Correction applies Bayes' rule only where the observation
mask is set; unobserved cells keep their predictor column. Prediction
pushes the corrected belief through the transition operator.
"""

from dataclasses import dataclass

import numpy as np

from stgrid.environment import ModelParams, ObservationMap, transition_operator
from stgrid.errors import ConfigurationError, DegenerateBeliefError, DomainError


@dataclass
class BeliefGrid:
    """Per-cell probability columns over states, (n_states, H, W), at slow time k."""

    probs: np.ndarray
    k: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 3:
            raise ConfigurationError(f"belief must be (n_states, H, W), got {p.shape}")
        if (p < 0).any() or np.abs(p.sum(axis=0) - 1.0).max() > 1e-9:
            raise DomainError("belief columns must be simplexes")
        self.probs = p

    @classmethod
    def uniform(cls, n_states, height, width, k=0):
        return cls(np.full((n_states, height, width), 1.0 / n_states), k)


def likelihood_vector(observation: int, obs_matrix: np.ndarray) -> np.ndarray:
    """Per-state likelihood of one observed symbol: column obs_matrix[:, y]."""
    obs_matrix = np.asarray(obs_matrix, dtype=np.float64)
    if not (0 <= observation < obs_matrix.shape[1]):
        raise DomainError(f"observation {observation} out of range")
    return obs_matrix[:, observation].copy()


def bayes_correct(predictor: BeliefGrid, obs: ObservationMap,
                  obs_matrix: np.ndarray) -> BeliefGrid:
    """Posterior belief: Bayes' rule at observed cells, predictor elsewhere.

    Columns are renormalized afterwards to absorb floating-point drift.
    """
    obs_matrix = np.asarray(obs_matrix, dtype=np.float64)
    post = predictor.probs.copy()
    rows, cols = np.nonzero(obs.mask)
    if rows.size:
        symbols = obs.cells[rows, cols]
        if (symbols < 0).any() or (symbols >= obs_matrix.shape[1]).any():
            raise DomainError("observed symbol out of range")
        lik = obs_matrix[:, symbols]            # (S, M)
        num = lik * post[:, rows, cols]
        den = num.sum(axis=0)
        if (den <= 1e-300).any():
            raise DegenerateBeliefError("Bayes correction denominator underflowed")
        post[:, rows, cols] = num / den
    post /= post.sum(axis=0, keepdims=True)
    return BeliefGrid(post, predictor.k)


def predict(estimate: BeliefGrid, params: ModelParams) -> BeliefGrid:
    """Next-step predictor: push the estimate through the transition operator."""
    return BeliefGrid(transition_operator(estimate.probs, params), estimate.k + 1)


def filter_run(obs_stream, params: ModelParams, initial: BeliefGrid):
    """Alternate correction and prediction over an observation stream.

    Yields the corrected estimate for each observation in turn.
    """
    u = initial
    for obs in obs_stream:
        p_hat = bayes_correct(u, obs, params.obs_matrix)
        yield p_hat
        u = predict(p_hat, params)
