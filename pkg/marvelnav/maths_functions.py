#!/usr/bin/env python
"""
Mathematical functions.
"""

import numpy as np
import scipy.special
import scipy.stats


def binary_entropy(p_open):
    """
    Shannon entropy (in nats) of a Bernoulli variable which is 1 with
    probability p_open.

    Uses scipy.special.entr so the value is exactly 0 at p in {0, 1}.

    Parameters
    ----------
    p_open: float or numpy array

    Returns
    -------
    float or numpy array
    """
    p_open = np.asarray(p_open, dtype=float)
    ent = scipy.special.entr(p_open) + scipy.special.entr(1.0 - p_open)
    if ent.ndim == 0:
        return float(ent)
    return ent


def softmax(logits):
    """Softmax over the last axis."""
    return scipy.special.softmax(np.asarray(logits, dtype=float), axis=-1)


def log_softmax(logits):
    """Log softmax over the last axis."""
    return scipy.special.log_softmax(np.asarray(logits, dtype=float),
                                     axis=-1)


def logistic(z):
    """Logistic sigmoid 1 / (1 + exp(-z))."""
    return scipy.special.expit(z)


def leaky_relu(x, slope=0.2):
    """LeakyReLU with the given negative slope."""
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x, slope=0.2):
    """Derivative of leaky_relu with respect to its input."""
    return np.where(x > 0, 1.0, slope)


def elu(x):
    """Exponential linear unit with unit scale."""
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x):
    """Derivative of elu with respect to its input."""
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0)))


def segment_softmax(values, segments, n_segments):
    """
    Softmax of the rows of values within groups of rows sharing the same
    segment label.

    Parameters
    ----------
    values: 2d numpy array
        Shape (n_rows, n_columns); each column is normalised separately.
    segments: 1d numpy array of ints
        Segment label of each row, in range(n_segments).
    n_segments: int

    Returns
    -------
    2d numpy array
        Same shape as values. Rows with the same segment label sum to one in
        every column.
    """
    seg_max = np.full((n_segments, values.shape[1]), -np.inf)
    np.maximum.at(seg_max, segments, values)
    expo = np.exp(values - seg_max[segments])
    denom = np.zeros((n_segments, values.shape[1]))
    np.add.at(denom, segments, expo)
    return expo / denom[segments]


def glorot_bound(fan_in, fan_out):
    """Half width of the Glorot uniform initialisation interval."""
    return np.sqrt(6.0 / (fan_in + fan_out))


def on_time_probability(budget, mean, variance, eps=1e-6):
    """
    Probability that a Gaussian travel time with the given mean and variance
    is no greater than the budget.
    """
    return scipy.special.ndtr((budget - mean) / np.sqrt(variance + eps))


def truncated_gaussian_sample(mu, sigma, rng, floor_fraction=0.5,
                              truncate=True):
    """
    Draw one travel cost from a Gaussian(mu, sigma), redrawing any value
    below floor_fraction * mu.

    Parameters
    ----------
    mu: float
    sigma: float
    rng: numpy.random.Generator
    floor_fraction: float, optional
    truncate: bool, optional
        If False a plain Gaussian sample is returned (test mode).

    Returns
    -------
    float
    """
    if sigma == 0:
        return float(mu)
    while True:
        cost = rng.normal(mu, sigma)
        if not truncate or cost >= floor_fraction * mu:
            return float(cost)


def truncated_gaussian_samples(mu, sigma, size, rng, floor_fraction=0.5):
    """
    Vectorised rejection sampler returning size draws of Gaussian(mu, sigma)
    conditioned on being at least floor_fraction * mu.

    Returns
    -------
    samples: 1d numpy array
    """
    if sigma == 0:
        return np.full(size, float(mu))
    floor = floor_fraction * mu
    accepted = []
    n_accepted = 0
    while n_accepted < size:
        # oversample by the inverse acceptance rate
        accept_rate = scipy.special.ndtr((mu - floor) / sigma)
        n_draw = int(np.ceil((size - n_accepted) / accept_rate * 1.1)) + 10
        draws = rng.normal(mu, sigma, size=n_draw)
        draws = draws[draws >= floor]
        accepted.append(draws)
        n_accepted += draws.shape[0]
    return np.concatenate(accepted)[:size]


def truncated_normal_moments(mu, sigma, floor_fraction=0.5):
    """
    Mean and standard deviation of Gaussian(mu, sigma) truncated below at
    floor_fraction * mu.

    Returns
    -------
    mean: float
    std: float
    """
    if sigma == 0:
        return float(mu), 0.0
    lower = (floor_fraction * mu - mu) / sigma
    dist = scipy.stats.truncnorm(lower, np.inf, loc=mu, scale=sigma)
    return float(dist.mean()), float(dist.std())
