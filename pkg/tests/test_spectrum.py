import numpy as np
import pytest
from scipy import sparse

from carnot_tame.errors import GridTooCoarse, InvalidParameter, MemoryBudgetExceeded
from carnot_tame.group import abelian, heisenberg
from carnot_tame.norms import TypeTwoSmooth
from carnot_tame.outer import Power
from carnot_tame.spectrum import (
    SpectrumConfig,
    assemble_hamiltonian,
    bottom_spectrum,
    difference_operator,
    build_mesh,
    dump_matrix,
    ground_state_vector,
    solve_spectrum,
    weighted_box,
)
from carnot_tame.taming import AdditivePower, EnergyModel, NoTaming

N16 = TypeTwoSmooth(16.0)


def tamed():
    return EnergyModel(heisenberg(), N16, AdditivePower(1.0, 1.0), Power(2.0))


def test_lanczos_on_diagonal():
    H = sparse.diags(np.arange(1.0, 201.0)).tocsr()
    vals, vecs, res = bottom_spectrum(H, 5)
    assert np.allclose(vals, [1, 2, 3, 4, 5], atol=1e-10)
    assert np.all(res < 1e-8)


def test_lanczos_rejects_asymmetric_and_bad_k():
    A = sparse.csr_matrix(np.triu(np.ones((20, 20))))
    with pytest.raises(InvalidParameter):
        bottom_spectrum(A, 3)
    with pytest.raises(InvalidParameter):
        bottom_spectrum(np.eye(5), 5)


def test_abelian_dirichlet_laplacian():
    cfg = SpectrumConfig((0.5, 0.5), (40, 40), k=3, zero_potential=True)
    r = solve_spectrum(EnergyModel(abelian(2), N16, NoTaming(), Power(2.0)), cfg)
    exact = np.pi ** 2 * np.array([2.0, 5.0, 5.0])
    assert np.allclose(r.eigenvalues, exact, rtol=0.01)


def test_hamiltonian_exactly_symmetric():
    ham = assemble_hamiltonian(tamed(), weighted_box(3.5, 2, 1, 12, 12, k=4))
    assert abs(ham.matrix - ham.matrix.T).max() == 0.0


def test_difference_operator_is_exact_on_linear_in_x():
    model = tamed()
    mesh = build_mesh(model, weighted_box(2.0, 2, 1, 16, 16))
    D = difference_operator(model, mesh, 0)
    # x_1 increases by exactly h along the flow of X_1, away from the boundary layer
    f = mesh.points().x[:, 0]
    d = D @ f
    interior = np.isclose(np.abs(d), 1.0, atol=1e-10)
    assert interior.mean() > 0.5


def test_positive_part_gives_nonnegative_spectrum():
    cfg = weighted_box(3.5, 2, 1, 12, 12, k=3, positive_part=True)
    r = solve_spectrum(tamed(), cfg)
    assert r.eigenvalues[0] >= -1e-10


def test_ground_state_potential_has_null_vector():
    model = tamed()
    cfg = weighted_box(3.5, 2, 1, 12, 12, k=3, potential="ground_state")
    ham = assemble_hamiltonian(model, cfg)
    psi = ground_state_vector(model, ham.mesh)
    assert np.linalg.norm(ham.matrix @ psi) < 1e-8
    r = solve_spectrum(model, cfg)
    assert abs(r.eigenvalues[0]) < 1e-8 and r.eigenvalues[1] > 1e-3


def test_rayleigh_quotient_bounds_lowest_eigenvalue():
    r = solve_spectrum(tamed(), weighted_box(3.5, 2, 1, 12, 12, k=3))
    assert r.rayleigh_ground >= r.eigenvalues[0] - 1e-10


def test_config_validation():
    with pytest.raises(GridTooCoarse):
        SpectrumConfig((1.0, 1.0, 1.0), (4, 16, 16))
    with pytest.raises(InvalidParameter):
        SpectrumConfig((1.0, 1.0), (16, 16, 16))
    with pytest.raises(InvalidParameter):
        SpectrumConfig((1.0,), (16,), potential="other")
    with pytest.raises(MemoryBudgetExceeded):
        assemble_hamiltonian(tamed(), weighted_box(3.5, 2, 1, 64, 64, memory_budget=1e6))


def test_deterministic_and_dump(tmp_path):
    cfg = weighted_box(3.5, 2, 1, 10, 10, k=3)
    a = solve_spectrum(tamed(), cfg, seed=1)
    b = solve_spectrum(tamed(), cfg, seed=1)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    ham = assemble_hamiltonian(tamed(), cfg)
    path = tmp_path / "H.txt"
    dump_matrix(ham.matrix, path)
    rows = np.loadtxt(path)
    H = sparse.coo_matrix((rows[:, 2], (rows[:, 0].astype(int), rows[:, 1].astype(int))),
                          shape=ham.matrix.shape)
    assert abs(H - ham.matrix).max() == 0.0
