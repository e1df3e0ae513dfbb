"""Random LP/MILP generators for the solver soundness checks."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from pbnb.subsolve import EQ, GE, LE, LinearModel


def random_feasible_lp(rng, n=None, m=None):
    """Bounded LP with a known feasible point; every sense appears."""
    n = n or int(rng.integers(2, 9))
    m = m or int(rng.integers(1, 7))
    lb = np.round(rng.uniform(-5, 0, n), 2)
    ub = lb + np.round(rng.uniform(0.5, 6, n), 2)
    x0 = rng.uniform(lb, ub)
    A = np.round(rng.uniform(-4, 4, (m, n)), 2)
    A[rng.random((m, n)) < 0.3] = 0.0
    senses = [str(s) for s in rng.choice([LE, GE, EQ], m)]
    act = A @ x0
    slack = rng.uniform(0, 2, m)
    rhs = np.where([s == LE for s in senses], act + slack,
                   np.where([s == GE for s in senses], act - slack, act))
    c = np.round(rng.uniform(-5, 5, n), 2)
    return LinearModel(c, sp.csr_matrix(A), senses, rhs, lb, ub, np.zeros(n, dtype=bool))


def random_milp(rng, n_bin=None, n_cont=None, m=None):
    """Binaries plus a few bounded continuous columns, feasible by construction."""
    n_bin = n_bin if n_bin is not None else int(rng.integers(1, 13))
    n_cont = n_cont if n_cont is not None else int(rng.integers(0, 3))
    m = m or int(rng.integers(1, 5))
    n = n_bin + n_cont
    lb = np.zeros(n)
    ub = np.concatenate([np.ones(n_bin), np.full(n_cont, 4.0)])
    x0 = np.concatenate([rng.integers(0, 2, n_bin).astype(float), rng.uniform(0, 4, n_cont)])
    A = np.round(rng.uniform(-5, 5, (m, n)), 1)
    senses = [str(s) for s in rng.choice([LE, GE], m)]
    act = A @ x0
    slack = np.round(rng.uniform(0, 3, m), 1)
    rhs = np.where([s == LE for s in senses], act + slack, act - slack)
    c = np.round(rng.uniform(-10, 10, n), 1)
    integer = np.concatenate([np.ones(n_bin, dtype=bool), np.zeros(n_cont, dtype=bool)])
    return LinearModel(c, sp.csr_matrix(A), senses, rhs, lb, ub, integer)
