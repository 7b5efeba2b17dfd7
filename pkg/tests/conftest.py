import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phasegain.lti import StateSpace

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DATA = os.path.join(os.path.dirname(__file__), os.pardir, "data")

CD = np.array([[3.0, 0, 0], [0, 2, 0], [0, 1, 2]])
K = np.array([[6.0, 0, 2], [0, 7, 0], [2, 1, 7]])
H1 = np.array([[3.0, 2, 1], [1, 3, 0], [0, 1, 2]]) / 100
H2 = np.array([[70.0, 0, 2], [0, 70, 1], [0, 2, 60]])
SHELL_A = np.array([[5, 2, 1 + 1j], [3, 6, 2], [0, 2, 2]])


def data_path(name):
    return os.path.abspath(os.path.join(DATA, name))


def example1_plant():
    n = 3
    a = np.block([[np.zeros((n, n)), np.eye(n)], [-K, -CD]])
    b = np.vstack([np.zeros((n, n)), np.eye(n)])
    c = np.hstack([H2, H1])
    return StateSpace(a, b, c, np.zeros((n, n)))


def example1_controller():
    return StateSpace(-10.0 * np.eye(3), np.eye(3), np.eye(3), np.zeros((3, 3)))


def first_order(k=1.0, pole=1.0):
    """``k / (s + pole)``."""
    return StateSpace([[-pole]], [[1.0]], [[k]], [[0.0]])


def integrator(k=1.0):
    return StateSpace([[0.0]], [[1.0]], [[k]], [[0.0]])


def random_stable(rng, n_states, n_io, decay=(0.2, 2.0), d_scale=0.3):
    a = rng.normal(size=(n_states, n_states))
    a -= (np.max(np.linalg.eigvals(a).real) + rng.uniform(*decay)) * np.eye(n_states)
    return StateSpace(a, rng.normal(size=(n_states, n_io)), rng.normal(size=(n_io, n_states)),
                      d_scale * rng.normal(size=(n_io, n_io)))


def random_complex(rng, n, scale=1.0):
    return scale * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))


def random_sectorial(rng, n, spread=2.5):
    """``T^* D T`` with phases inside an interval of width ``< spread``."""
    t = random_complex(rng, n) + 2 * np.eye(n)
    c = rng.uniform(-np.pi, np.pi)
    ph = c + rng.uniform(-spread / 2, spread / 2, size=n)
    return t.conj().T @ np.diag(np.exp(1j * ph)) @ t


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
