from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import open_wells, small_deck_text
from polysim.deck import convert_to_si, parse_deck
from polysim.linsolve import (
    AMGConfig,
    AMGHierarchy,
    ILU0,
    LinearSolver,
    PreconditionerConfig,
    PressureRestriction,
    RAS,
    Subdomain,
    block_diagonal_inverse,
    contiguous_subdomains,
    cpr_fp_apply,
    extract_pressure_matrix,
    gmres,
    grow_overlap,
    make_dots,
    prolong_pressure,
    ras_apply,
    restrict_pressure,
)
from polysim.runtime import WorkerTeam
from polysim.system import DiscreteSystem


def laplace_1d(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def dense_ilu0_solve(A: np.ndarray, b: np.ndarray, pattern: np.ndarray | None = None) -> np.ndarray:
    """Textbook IKJ ILU(0) on a dense copy, dropping fill outside the pattern."""
    n = A.shape[0]
    a = A.astype(float).copy()
    mask = (A != 0) if pattern is None else pattern.copy()
    np.fill_diagonal(mask, True)
    for i in range(1, n):
        for k in range(i):
            if not mask[i, k]:
                continue
            a[i, k] /= a[k, k]
            for j in range(k + 1, n):
                if mask[i, j]:
                    a[i, j] -= a[i, k] * a[k, j]
    L = np.tril(a, -1) + np.eye(n)
    U = np.triu(a)
    return np.linalg.solve(U, np.linalg.solve(L, b))


def random_block_system(rng, ncell: int, nwell: int = 0) -> tuple[sp.csr_matrix, np.ndarray]:
    """Diagonally dominant 3x3-block matrix with nearest-neighbour coupling."""
    n = 3 * ncell + nwell
    J = np.zeros((n, n))
    for c in range(ncell):
        s = slice(3 * c, 3 * c + 3)
        J[s, s] = rng.uniform(-1, 1, (3, 3)) + 6 * np.eye(3)
        for d in (c - 1, c + 1):
            if 0 <= d < ncell:
                J[s, 3 * d: 3 * d + 3] = rng.uniform(-1, 0, (3, 3))
    for w in range(nwell):
        i = 3 * ncell + w
        c = w % ncell
        J[i, i] = 4.0
        J[i, 3 * c] = -1.0
        J[3 * c, i] = -0.5
    return sp.csr_matrix(J), 3 * np.arange(ncell)


class TestPressureRestriction:
    def test_restrict_prolong_example(self):
        dofs = np.array([0, 3])
        x = np.arange(6.0)
        assert np.array_equal(restrict_pressure(x, dofs), [0.0, 3.0])
        assert np.array_equal(prolong_pressure(np.array([7.0, 9.0]), dofs, 6), [7, 0, 0, 9, 0, 0])

    @given(st.integers(1, 8), st.integers(0, 3), st.integers(0, 2**31 - 1))
    def test_restrict_after_prolong_is_identity(self, ncell, nwell, seed):
        rng = np.random.default_rng(seed)
        n = 3 * ncell + nwell
        pr = PressureRestriction(3 * np.arange(ncell), n)
        p = rng.standard_normal(ncell)
        assert np.array_equal(pr.restrict(pr.prolong(p)), p)
        x = rng.standard_normal(n)
        y = pr.prolong(pr.restrict(x))
        assert np.array_equal(y[pr.dofs], x[pr.dofs])
        mask = np.ones(n, dtype=bool)
        mask[pr.dofs] = False
        assert np.all(y[mask] == 0.0)

    def test_size_mismatch(self):
        pr = PressureRestriction(np.array([0, 3]), 6)
        with pytest.raises(ValueError):
            pr.restrict(np.zeros(5))
        with pytest.raises(ValueError):
            pr.prolong(np.zeros(3))


class TestPressureMatrix:
    def test_diagonal_block_example(self):
        blk = np.array([[2.0, 1, 0], [0, 3, 0], [0, 0, 4]])
        J = sp.block_diag([blk, 2 * blk]).tocsr()
        App = extract_pressure_matrix(J, np.array([0, 3]))
        assert np.array_equal(App.toarray(), np.diag([2.0, 4.0]))

    def test_equals_pressure_rows_and_columns(self):
        rng = np.random.default_rng(3)
        J, dofs = random_block_system(rng, 6, nwell=2)
        App = extract_pressure_matrix(J, dofs).toarray()
        Jd = J.toarray()
        assert np.array_equal(App, Jd[np.ix_(dofs, dofs)])

    def test_zero_diagonal_row_becomes_identity(self):
        J = sp.csr_matrix(np.diag([0.0, 1, 1, 5, 1, 1]))
        App = extract_pressure_matrix(J, np.array([0, 3])).toarray()
        assert np.array_equal(App, np.diag([1.0, 5.0]))

    def test_single_cell_is_oil_pressure_derivative(self):
        text = small_deck_text(nx=1, ny=1, nz=1, wells=False)
        deck = convert_to_si(parse_deck(text))
        system = DiscreteSystem(deck, 1, threads=False)
        local = system.scatter(system.initial_state())
        masses = system.masses(local)
        out = system.assemble(local, masses, 86400.0, jacobian=True)
        J = out.jacobian
        App = extract_pressure_matrix(J, system.layout.cell_dof)
        assert App.shape == (1, 1)
        assert App[0, 0] == J[0, 0]
        assert App[0, 0] != 0.0


class TestILU0:
    def test_exact_on_triangular(self):
        rng = np.random.default_rng(0)
        A = np.tril(rng.uniform(-1, 1, (7, 7))) + 5 * np.eye(7)
        b = rng.standard_normal(7)
        x = ILU0(sp.csr_matrix(A)).solve(b)
        assert np.allclose(A @ x, b, rtol=0, atol=1e-12)

    def test_matches_dense_reference(self):
        rng = np.random.default_rng(1)
        A, _ = random_block_system(rng, 5, nwell=2)
        b = rng.standard_normal(A.shape[0])
        x = ILU0(A).solve(b)
        ref = dense_ilu0_solve(A.toarray(), b)
        assert np.allclose(x, ref, rtol=1e-12, atol=1e-12)

    def test_zero_pivot_is_shifted(self):
        A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 1.0]]))
        f = ILU0(A)
        assert f.shifted


class TestRAS:
    @pytest.mark.parametrize("nparts", [1, 2, 3, 5])
    def test_identity(self, nparts):
        n = 10
        offsets = np.linspace(0, n, nparts + 1).astype(int)
        A = sp.identity(n, format="csr")
        sds = [Subdomain(sd.owned, grow_overlap(A, sd.owned, 1)) for sd in contiguous_subdomains(offsets)]
        f = np.random.default_rng(0).standard_normal(n)
        assert np.array_equal(ras_apply(A, f, sds), f)

    def test_single_subdomain_exact_on_triangular(self):
        rng = np.random.default_rng(4)
        A = np.triu(rng.uniform(-1, 1, (9, 9))) + 4 * np.eye(9)
        f = rng.standard_normal(9)
        y = ras_apply(sp.csr_matrix(A), f, contiguous_subdomains(np.array([0, 9])))
        assert np.allclose(A @ y, f, atol=1e-12)

    def test_two_partitions_laplacian_scripted(self):
        n = 10
        A = laplace_1d(n)
        f = np.random.default_rng(5).standard_normal(n)
        sds = [Subdomain(sd.owned, grow_overlap(A, sd.owned, 1)) for sd in contiguous_subdomains(np.array([0, 5, 10]))]
        assert list(sds[0].ext) == [0, 1, 2, 3, 4, 5]
        assert list(sds[1].ext) == [5, 6, 7, 8, 9, 4]
        Ad = A.toarray()
        ref = np.zeros(n)
        for sd in sds:
            loc = dense_ilu0_solve(Ad[np.ix_(sd.ext, sd.ext)], f[sd.ext])
            ref[sd.owned] = loc[: sd.owned.size]
        assert np.allclose(ras_apply(A, f, sds), ref, rtol=1e-13, atol=1e-13)

    def test_threaded_team_matches_serial(self):
        n = 40
        A = laplace_1d(n)
        f = np.random.default_rng(6).standard_normal(n)
        sds = [Subdomain(sd.owned, grow_overlap(A, sd.owned, 1))
               for sd in contiguous_subdomains(np.array([0, 10, 20, 30, 40]))]
        with WorkerTeam(4) as team:
            y = RAS(A, sds, team).apply(f)
        assert np.array_equal(y, RAS(A, sds).apply(f))

    def test_overlap_layers(self):
        A = laplace_1d(10)
        ext = grow_overlap(A, np.arange(3, 5), 2)
        assert list(ext) == [3, 4, 1, 2, 5, 6]


def vcycle_factors(A, config, cycles=8, seed=0):
    n = A.shape[0]
    h = AMGHierarchy(A, config)
    b = np.ones(n)
    exact = np.linalg.solve(A.toarray(), b)
    x = np.random.default_rng(seed).standard_normal(n)
    res = [np.linalg.norm(b - A @ x)]
    for _ in range(cycles):
        x = x + h.vcycle(b - A @ x)
        res.append(np.linalg.norm(b - A @ x))
    return h, np.array(res[1:]) / np.array(res[:-1]), x, exact


class TestAMG:
    def test_one_level_is_direct(self):
        A = laplace_1d(20)
        h = AMGHierarchy(A, AMGConfig(max_coarse=100))
        assert h.nlevels == 1
        b = np.arange(20.0)
        assert np.allclose(A @ h.vcycle(b), b, atol=1e-12)

    @pytest.mark.parametrize("smoother,sweeps", [("GS", 2), ("JACOBI", 2)])
    def test_poisson_reduction_factor(self, smoother, sweeps):
        A = laplace_1d(64)
        cfg = AMGConfig(max_coarse=4, smoother=smoother, presweeps=sweeps, postsweeps=sweeps)
        for seed in range(3):
            h, factors, x, exact = vcycle_factors(A, cfg, seed=seed)
            assert h.nlevels >= 3
            assert factors.max() < 0.2
        assert np.allclose(x, exact, rtol=1e-6)

    def test_default_smoother_still_converges(self):
        # one weighted-Jacobi sweep each side: measured average factor about 0.36
        A = laplace_1d(64)
        h, factors, x, exact = vcycle_factors(A, AMGConfig(max_coarse=4), cycles=30)
        assert np.exp(np.log(factors).mean()) < 0.4
        assert np.allclose(x, exact, rtol=1e-8)

    def test_diagonal_exact_after_smoothing(self):
        d = np.linspace(1.0, 4.0, 200)
        A = sp.diags(d).tocsr()
        b = np.random.default_rng(0).standard_normal(200)
        h = AMGHierarchy(A, AMGConfig(max_coarse=4, omega=1.0))
        assert np.allclose(h.vcycle(b), b / d, rtol=1e-14)

    def test_galerkin(self):
        A = sp.kronsum(laplace_1d(16), laplace_1d(16)).tocsr()
        h = AMGHierarchy(A, AMGConfig(max_coarse=10))
        assert h.nlevels >= 3
        for fine, coarse in zip(h.levels[:-1], h.levels[1:]):
            assert fine.R.shape == fine.P.T.shape
            diff = coarse.A - fine.R @ fine.A @ fine.P
            assert abs(diff).max() == 0.0


class TestCPR:
    def test_identity(self):
        n = 9
        f = np.arange(1.0, n + 1)
        y = cpr_fp_apply(sp.identity(n, format="csr"), f, np.array([0, 3, 6]))
        assert np.array_equal(y, f)

    def test_block_diagonal_is_exact(self):
        rng = np.random.default_rng(7)
        blocks = [rng.uniform(-1, 1, (3, 3)) + 4 * np.eye(3) for _ in range(4)]
        J = sp.block_diag(blocks).tocsr()
        f = rng.standard_normal(12)
        y = cpr_fp_apply(J, f, 3 * np.arange(4))
        assert np.allclose(J @ y, f, atol=1e-12)

    def test_matches_scripted_dense_reference(self):
        rng = np.random.default_rng(8)
        J, dofs = random_block_system(rng, 6, nwell=1)
        f = rng.standard_normal(J.shape[0])
        Jd = J.toarray()
        n = Jd.shape[0]
        D = np.zeros_like(Jd)
        for c in dofs:
            s = slice(c, c + 3)
            D[s, s] = Jd[s, s]
        D[-1, -1] = Jd[-1, -1]
        Dinv = np.linalg.inv(D)
        Jt = Dinv @ Jd
        ft = Dinv @ f
        # structural pattern of the scaled matrix, cancellations included
        pattern = (D != 0).astype(int) @ (Jd != 0).astype(int) > 0
        y = dense_ilu0_solve(Jt, ft, pattern)
        r = ft - Jt @ y
        y = y + prolong_pressure(np.linalg.solve(Jt[np.ix_(dofs, dofs)], r[dofs]), dofs, n)
        assert np.allclose(cpr_fp_apply(J, f, dofs), y, rtol=1e-11, atol=1e-12)

    def test_block_diagonal_inverse(self):
        rng = np.random.default_rng(9)
        J, dofs = random_block_system(rng, 4, nwell=2)
        Dinv = block_diagonal_inverse(J, dofs).toarray()
        Jt = Dinv @ J.toarray()
        for c in dofs:
            assert np.allclose(Jt[c: c + 3, c: c + 3], np.eye(3), atol=1e-14)
        assert np.allclose(np.diag(Jt)[-2:], 1.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PreconditionerConfig(kind="JACOBI")
        with pytest.raises(ValueError):
            PreconditionerConfig(overlap=-1)
        with pytest.raises(ValueError):
            PreconditionerConfig(restart=0)


class TestGMRES:
    def test_zero_rhs(self):
        x, stats = gmres(lambda v: 2 * v, np.zeros(4), 1e-8)
        assert stats.iterations == 0
        assert np.array_equal(x, np.zeros(4))

    def test_orthogonal_diagonal(self):
        rng = np.random.default_rng(10)
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        A = Q @ np.diag([1.0, 2, 3, 4, 5]) @ Q.T
        xs = rng.standard_normal(5)
        x, stats = gmres(lambda v: A @ v, A @ xs, 1e-12)
        assert stats.converged
        assert stats.iterations <= 5
        assert np.linalg.norm(A @ x - A @ xs) <= 1e-12 * np.linalg.norm(A @ xs)

    @settings(deadline=None, max_examples=25)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([1e-2, 1e-4, 1e-8]))
    def test_true_residual_below_tolerance(self, seed, tol):
        rng = np.random.default_rng(seed)
        n = 30
        A = sp.random(n, n, density=0.2, random_state=seed) + sp.diags(rng.uniform(2, 4, n))
        A = A.tocsr()
        b = rng.standard_normal(n)
        x, stats = gmres(lambda v: A @ v, b, tol, restart=10, maxiter=500)
        assert stats.converged
        true = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
        assert true <= tol * (1 + 1e-12)
        assert stats.residual == pytest.approx(true, rel=1e-12, abs=1e-300)

    def test_looser_tolerance_needs_no_more_iterations(self):
        A = laplace_1d(60) + sp.identity(60) * 0.01
        b = np.random.default_rng(11).standard_normal(60)
        its = [gmres(lambda v: A @ v, b, eta, restart=20, maxiter=2000)[1].iterations for eta in (1e-1, 1e-3, 1e-6)]
        assert its == sorted(its)

    def test_right_preconditioning(self):
        A = laplace_1d(50)
        b = np.ones(50)
        plain = gmres(lambda v: A @ v, b, 1e-8, restart=50, maxiter=1000)[1].iterations
        f = ILU0(A)
        x, stats = gmres(lambda v: A @ v, b, 1e-8, f.solve)
        assert stats.iterations == 1 < plain
        assert np.linalg.norm(b - A @ x) <= 1e-8 * np.linalg.norm(b)

    def test_distributed_dots(self):
        rng = np.random.default_rng(12)
        V = rng.standard_normal((3, 10))
        w = rng.standard_normal(10)
        with WorkerTeam(3) as team:
            dots = make_dots(np.array([0, 3, 7, 10]), team)
            assert np.allclose(dots(V, w), V @ w, rtol=1e-14)

    def test_failure_reports_best_iterate(self):
        A = laplace_1d(100)
        b = np.ones(100)
        x, stats = gmres(lambda v: A @ v, b, 1e-12, restart=2, maxiter=4)
        assert not stats.converged
        assert stats.residual == pytest.approx(np.linalg.norm(b - A @ x) / np.linalg.norm(b))


def assembled_system(nworkers):
    deck = convert_to_si(parse_deck(small_deck_text(nx=4, ny=3, nz=2)))
    system = DiscreteSystem(deck, nworkers, threads=False)
    open_wells(system, deck)
    state = system.initial_state()
    system.initialize_bhp(state, range(len(system.wells)))
    local = system.scatter(state)
    masses = system.masses(local)
    state.p = state.p + 1e5 * np.sin(np.arange(state.p.size))
    local = system.scatter(state)
    out = system.assemble(local, masses, 86400.0, jacobian=True)
    return system, out


class TestLinearSolver:
    @pytest.mark.parametrize("kind", ["CPR", "ILU0"])
    def test_solves_assembled_system(self, kind):
        system, out = assembled_system(1)
        L = system.layout
        solver = LinearSolver(L.offsets, L.cell_dof, L.natural_permutation(), system.team,
                              PreconditionerConfig(kind=kind, maxiter=500))
        b = -out.residual
        x, stats = solver.solve(out.jacobian, b, 1e-8)
        assert stats.converged
        assert np.linalg.norm(b - out.jacobian @ x) <= 1e-8 * np.linalg.norm(b) * (1 + 1e-9)

    def test_cpr_beats_ilu(self):
        system, out = assembled_system(1)
        L = system.layout
        its = {}
        for kind in ("CPR", "ILU0"):
            solver = LinearSolver(L.offsets, L.cell_dof, L.natural_permutation(), system.team,
                                  PreconditionerConfig(kind=kind, maxiter=500))
            its[kind] = solver.solve(out.jacobian, -out.residual, 1e-8)[1].iterations
        assert its["CPR"] <= its["ILU0"]

    def test_single_subdomain_partition_independent(self):
        sols = []
        for nw in (1, 2, 4):
            system, out = assembled_system(nw)
            L = system.layout
            solver = LinearSolver(L.offsets, L.cell_dof, L.natural_permutation(), system.team,
                                  PreconditionerConfig(single_subdomain=True))
            x, stats = solver.solve(out.jacobian, -out.residual, 1e-10)
            assert stats.converged
            sols.append(x[L.natural_permutation()])
        for x in sols[1:]:
            assert np.linalg.norm(x - sols[0]) <= 1e-8 * np.linalg.norm(sols[0])
