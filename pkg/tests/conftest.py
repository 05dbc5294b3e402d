import numpy as np
import pytest

from streamfed import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # trigger JIT compilation once so runtime-guarded tests measure the
    # algorithm, not the compiler
    theta = np.zeros(3)
    X = np.ones((2, 3))
    y = np.array([0.0, 1.0])
    w = np.array([0.5, 0.5])
    _kernels.logistic_losses(theta, X, y)
    _kernels.logistic_grad_weighted(theta, X, y, w)
    _kernels.squared_losses(theta, X, y)
    _kernels.squared_grad_weighted(theta, X, y, w)
    _kernels.project_simplex(np.array([0.6, 0.6]))
    _kernels.psi_terms(w, w, 1)
    _kernels.psi_subgrad_arrays(w, w, 1, 1.0, 2.0)
    _kernels.minimize_psi_loop(w.copy(), w, 1, 1.0, 2.0, 1e-8, 1000, 100)
    A = np.array([[0.5, 0.5], [0.5, 0.5]])
    _kernels.centered_coefficient_deviation(A, w)
