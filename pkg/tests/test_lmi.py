import numpy as np
import pytest

from resbeam import lmi

RNG = lambda seed=0: np.random.default_rng(seed)


def random_psd(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T


def grid_extremum(kernel, gbar, radius, sense, rng, samples=10_000, rounds=200):
    """Boundary sampling plus shrinking local refinement; the independent oracle."""
    d = gbar.size
    g = rng.standard_normal((samples, d)) + 1j * rng.standard_normal((samples, d))
    g /= np.linalg.norm(g, axis=1)[:, None]
    pts = gbar[None, :] + radius * g
    vals = np.real(np.einsum("si,ij,sj->s", pts.conj(), kernel, pts))
    idx = int(np.argmax(vals) if sense == "max" else np.argmin(vals))
    best_dir, best = g[idx], vals[idx]
    step = 0.5
    for _ in range(rounds):
        cand = best_dir[None, :] + step * (rng.standard_normal((8, d))
                                           + 1j * rng.standard_normal((8, d)))
        cand /= np.linalg.norm(cand, axis=1)[:, None]
        pts = gbar[None, :] + radius * cand
        vals = np.real(np.einsum("si,ij,sj->s", pts.conj(), kernel, pts))
        i = int(np.argmax(vals) if sense == "max" else np.argmin(vals))
        if (vals[i] > best) if sense == "max" else (vals[i] < best):
            best, best_dir = vals[i], cand[i]
        else:
            step *= 0.7
    # interior candidate matters for the minimum
    if sense == "min":
        interior = np.real(gbar.conj() @ kernel @ gbar)
        if radius >= np.linalg.norm(gbar):
            best = min(best, 0.0)
    return float(best)


class TestHermitianParams:
    def test_round_trip(self):
        rng = RNG(1)
        for n in (1, 2, 4):
            H = random_psd(rng, n) + 1j * 0
            params = lmi.herm_to_params(H)
            assert params.shape == (n * n,)
            back = lmi.params_to_herm(params, n)
            assert np.allclose(back, H, atol=1e-12)

    def test_basis_consistency(self):
        rng = RNG(2)
        n = 3
        basis = lmi.herm_basis(n)
        params = rng.standard_normal(n * n)
        H = sum(p * B for p, B in zip(params, basis))
        assert np.allclose(lmi.herm_to_params(H), params, atol=1e-12)
        assert all(np.allclose(B, B.conj().T) for B in basis)


class TestEmbedding:
    def test_identity(self):
        out = lmi.hermitian_to_real(np.eye(2, dtype=complex))
        assert np.array_equal(out, np.eye(4))

    def test_hand_eigenvalues(self):
        H = np.array([[0.0, 1j], [-1j, 0.0]])
        emb = lmi.hermitian_to_real(H)
        assert np.allclose(np.sort(np.linalg.eigvalsh(emb)), [-1, -1, 1, 1], atol=1e-12)

    def test_psd_preserved(self):
        rng = RNG(3)
        for _ in range(10):
            H = random_psd(rng, 3)
            emb = lmi.hermitian_to_real(H)
            assert np.linalg.eigvalsh(emb)[0] >= -1e-10
            assert np.allclose(np.sort(np.linalg.eigvalsh(emb)),
                               np.sort(np.repeat(np.linalg.eigvalsh(H), 2)), atol=1e-8)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            lmi.hermitian_to_real(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestVecKron:
    def test_scalar_case(self):
        g, Q = lmi.vec_and_kron_reduce(np.array([[2.0]]), np.array([[3.0]]),
                                       np.array([[5.0]]))
        assert np.real(g.conj() @ Q @ g) == pytest.approx(60.0)

    def test_random_identity(self):
        rng = RNG(4)
        for _ in range(20):
            H = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
            V = random_psd(rng, 2)
            W = random_psd(rng, 2)
            g, Q = lmi.vec_and_kron_reduce(H, V, W)
            lhs = np.real(g.conj() @ Q @ g)
            rhs = np.real(np.trace(H.conj().T @ V @ H @ W))
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_norm_transfer(self):
        rng = RNG(5)
        for _ in range(20):
            delta = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
            g = np.conj(delta).reshape(-1)
            assert np.linalg.norm(g) == pytest.approx(np.linalg.norm(delta), rel=1e-12)


class TestReductions:
    def test_phase_reduction_exact(self):
        rng = RNG(6)
        N, M = 4, 3
        H = rng.standard_normal((N + 1, M)) + 1j * rng.standard_normal((N + 1, M))
        v = np.concatenate([np.exp(1j * rng.uniform(0, 2 * np.pi, N)), [1.0]]).conj()
        V = np.outer(v, v.conj())
        W = random_psd(rng, M)
        a, radius = lmi.phase_reduced_uncertainty(H, 0.3, v)
        assert radius == pytest.approx(0.3 * np.linalg.norm(v))
        lhs = np.real(a.conj() @ W @ a)
        rhs = np.real(np.trace(H.conj().T @ V @ H @ W))
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_phase_reduction_worst_cases_match(self):
        # exact ball-image equivalence: matrix-ball worst case equals
        # vector-ball worst case after the reduction
        rng = RNG(7)
        N, M = 2, 2
        H = rng.standard_normal((N + 1, M)) + 1j * rng.standard_normal((N + 1, M))
        v = np.concatenate([np.exp(1j * rng.uniform(0, 2 * np.pi, N)), [1.0]]).conj()
        W = random_psd(rng, M)
        eps = 0.4
        a, radius = lmi.phase_reduced_uncertainty(H, eps, v)
        reduced = lmi.max_quadratic_on_ball(W, a, radius)
        # sampled matrix-ball oracle
        best = -np.inf
        for _ in range(20_000):
            D = rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)
            D *= eps / np.linalg.norm(D)
            Hp = H + D
            val = np.real(np.trace(Hp.conj().T @ np.outer(v, v.conj()) @ Hp @ W))
            best = max(best, val)
        assert best <= reduced * (1 + 1e-9) + 1e-12
        assert best >= reduced * 0.8  # sampling reaches most of the extremum

    def test_beam_reduction_identity(self):
        rng = RNG(8)
        N, M = 3, 2
        H = rng.standard_normal((N + 1, M)) + 1j * rng.standard_normal((N + 1, M))
        w = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        V = random_psd(rng, N + 1)
        b, radius = lmi.beam_reduced_uncertainty(H, 0.2, w)
        lhs = np.real(b.conj() @ V @ b)
        rhs = np.real(np.trace(H.conj().T @ V @ H @ np.outer(w, w.conj())))
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestBallExtrema:
    def test_zero_radius(self):
        rng = RNG(9)
        Q = random_psd(rng, 3)
        g = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        base = float(np.real(g.conj() @ Q @ g))
        assert lmi.max_quadratic_on_ball(Q, g, 0.0) == pytest.approx(base)
        assert lmi.min_quadratic_on_ball(Q, g, 0.0) == pytest.approx(base)

    def test_scalar_analytic(self):
        # dimension 1: extrema are q*(|g| +/- eps)^2 (min clamps at zero)
        q, g, eps = 2.5, 1.2 - 0.9j, 0.4
        Q = np.array([[q]])
        gv = np.array([g])
        assert lmi.max_quadratic_on_ball(Q, gv, eps) == pytest.approx(
            q * (abs(g) + eps) ** 2, rel=1e-10)
        assert lmi.min_quadratic_on_ball(Q, gv, eps) == pytest.approx(
            q * (abs(g) - eps) ** 2, rel=1e-10)

    def test_ball_swallows_origin(self):
        Q = np.eye(2, dtype=complex)
        g = np.array([0.1, 0.0], complex)
        assert lmi.min_quadratic_on_ball(Q, g, 1.0) == 0.0

    def test_against_grid_oracle(self):
        rng = RNG(10)
        for trial in range(8):
            d = 1 + trial % 2
            Q = random_psd(rng, d)
            g = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            eps = 0.2 + 0.5 * rng.uniform()
            for sense, fn in (("max", lmi.max_quadratic_on_ball),
                              ("min", lmi.min_quadratic_on_ball)):
                exact = fn(Q, g, eps)
                sampled = grid_extremum(Q, g, eps, sense, rng)
                scale = 1.0 + abs(exact)
                assert abs(exact - sampled) / scale < 1e-3

    def test_hard_case(self):
        # nominal orthogonal to the top eigenspace
        Q = np.diag([3.0, 1.0]).astype(complex)
        g = np.array([0.0, 1.0], complex)
        # spend budget on the top eigenvector: 3*eps^2 + 1*1 when eps small
        eps = 0.5
        got = lmi.max_quadratic_on_ball(Q, g, eps)
        # oracle by 2-D polar grid over real spans
        best = 0.0
        for t in np.linspace(0, np.pi, 4001):
            d = np.array([np.cos(t), np.sin(t)]) * eps
            for s in (1.0, -1.0):
                p = g + s * d
                best = max(best, float(np.real(p.conj() @ Q @ p)))
        assert got == pytest.approx(best, rel=1e-6)


class TestSProcedureBlocks:
    def _certified_bound(self, gbar, radius, kernel, sense):
        from resbeam import conic

        prog = conic.ConicProgram()
        prog.add_variable("c")
        prog.add_variable("q", nonneg=True)
        bound = lmi.AffineScalar(0.0, [(("c", 0), 1.0)])
        sign = "upper" if sense == "max" else "lower"
        block = lmi._sprocedure_block(gbar, radius, kernel, [], bound, ("q", 0), sign, "t")
        prog.add_hermitian_psd(block)
        prog.set_objective("minimize" if sense == "max" else "maximize", [(("c", 0), 1.0)])
        sol = conic.solve(prog, tol=1e-10)
        assert sol.status == "optimal"
        return float(sol.value("c")[0])

    def test_eve_block_zero_radius_feasibility(self):
        # radius 0: the robust cap collapses onto the nominal inequality
        rng = RNG(11)
        Q = random_psd(rng, 2)
        g = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        certified = self._certified_bound(g, 0.0, Q, "max")
        assert certified == pytest.approx(float(np.real(g.conj() @ Q @ g)), abs=1e-6)

    def test_certified_equals_exact_worst_case(self):
        rng = RNG(12)
        for _ in range(6):
            d = rng.integers(1, 3)
            Q = random_psd(rng, d)
            g = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            eps = 0.3 + 0.4 * rng.uniform()
            up = self._certified_bound(g, eps, Q, "max")
            lo = self._certified_bound(g, eps, Q, "min")
            assert up == pytest.approx(lmi.max_quadratic_on_ball(Q, g, eps),
                                       rel=1e-6, abs=1e-6)
            assert lo == pytest.approx(lmi.min_quadratic_on_ball(Q, g, eps),
                                       rel=1e-6, abs=1e-6)

    def test_zero_kernel_always_feasible(self):
        # zero kernel: leakage cap holds trivially for any nonnegative cap
        block = lmi.eve_secrecy_lmi(np.zeros(2, complex), 0.5, 0.5, 1.0,
                                    [], ("q", 0))
        val = block.evaluate({"q": np.array([0.1])})
        assert np.linalg.eigvalsh(val)[0] >= -1e-12

    def test_blocks_hermitian_for_any_assignment(self):
        rng = RNG(13)
        M = 2
        coeffs = lmi.hermitian_kernel_coeffs(["W"], M)
        g = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        blocks = [
            lmi.eve_secrecy_lmi(g, 0.3, 0.5, 1.0, coeffs, ("q", 0)),
            lmi.user_signal_lmi(g, 0.3, coeffs, ("eta", 0), ("q", 0)),
            lmi.user_interference_lmi(g, 0.3, coeffs, ("zeta", 0), ("q", 0)),
        ]
        assignment = {
            "W": lmi.herm_to_params(random_psd(rng, M)),
            "q": np.array([0.7]),
            "eta": np.array([0.2]),
            "zeta": np.array([1.4]),
        }
        for block in blocks:
            val = block.evaluate(assignment)
            assert np.allclose(val, val.conj().T, atol=1e-12)

    def test_sprocedure_soundness_sampled(self):
        # any feasible (W, eta, zeta, q) satisfies the sampled robust pattern
        rng = RNG(14)
        M = 2
        W = random_psd(rng, M)
        g = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        eps = 0.3
        eta = lmi.min_quadratic_on_ball(W, g, eps) * 0.98
        coeffs = lmi.hermitian_kernel_coeffs(["W"], M)
        block = lmi.user_signal_lmi(g, eps, coeffs, ("eta", 0), ("q", 0))
        # pick the multiplier by scanning feasibility
        assignment = {"W": lmi.herm_to_params(W), "eta": np.array([eta])}
        feasible_q = None
        for q in np.geomspace(1e-6, 1e3, 200):
            assignment["q"] = np.array([q])
            if block.min_eigenvalue(assignment) >= -1e-9:
                feasible_q = q
                break
        assert feasible_q is not None
        for _ in range(10_000):
            d = rng.standard_normal(M) + 1j * rng.standard_normal(M)
            d *= eps * rng.uniform() ** (1 / (2 * M)) / np.linalg.norm(d)
            p = g + d
            assert np.real(p.conj() @ W @ p) >= eta - 1e-6


class TestSchurLift:
    def test_exact_point_is_feasible_with_tight_trace(self):
        from resbeam.scenario import build_codebook
        from resbeam.rates import IrsConfiguration

        cb = build_codebook(4)
        N = 3
        irs = IrsConfiguration.from_indices([1, 2, 0], cb)
        block, trace_cap = lmi.schur_lift(cb.phasors, "S", "V", "T", "B", N)
        u = irs.v
        V = np.outer(u, u.conj())
        params = {
            "S": lmi.herm_to_params(V),
            "V": lmi.herm_to_params(V),
            "T": lmi.herm_to_params(V),
            "B": irs.B[:, :N].T.reshape(-1),  # column-major over (L, N)
        }
        val = block.evaluate(params)
        assert np.linalg.eigvalsh(val)[0] >= -1e-10
        trace_val = trace_cap.const + sum(
            coef * params[ref[0]][ref[1]] for ref, coef in trace_cap.terms)
        assert trace_val == pytest.approx(0.0, abs=1e-12)

    def test_binary_selection_trace_identity(self):
        from resbeam.scenario import build_codebook
        from resbeam.rates import IrsConfiguration

        cb = build_codebook(2)
        irs = IrsConfiguration.from_indices([0, 1, 1, 0], cb)
        theta = cb.phasors
        lift = irs.B.T @ np.outer(theta, theta.conj()) @ irs.B
        assert np.real(np.trace(lift)) == pytest.approx(5.0)  # N + 1

    def test_random_relaxed_point_psd_check(self):
        # assembled block PSD agrees with a generic eigenvalue routine
        from resbeam.scenario import build_codebook

        rng = RNG(15)
        cb = build_codebook(4)
        N = 2
        block, _ = lmi.schur_lift(cb.phasors, "S", "V", "T", "B", N)
        B = rng.dirichlet(np.ones(cb.L), size=N).T  # random feasible columns
        u_free = (B.T @ cb.phasors)
        u = np.concatenate([u_free, [1.0]])
        V = np.outer(u, u.conj())
        big = np.outer(u, u.conj())
        params = {
            "S": lmi.herm_to_params(big),
            "V": lmi.herm_to_params(V),
            "T": lmi.herm_to_params(big),
            "B": B.T.reshape(-1),
        }
        val = block.evaluate(params)
        assert np.linalg.eigvalsh(val)[0] >= -1e-9


class TestQuadraticUncertaintyConstraint:
    def test_worst_value_and_sampling_agree(self):
        rng = RNG(16)
        Q = random_psd(rng, 2)
        g = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        con = lmi.QuadraticUncertaintyConstraint(
            nominal_vec=g, radius=0.3, kernel=Q, bound=0.0, sense="max_le")
        sampled = con.sampled_worst(20_000, RNG(17))
        assert sampled <= con.worst_value() * (1 + 1e-9) + 1e-12

    def test_satisfied(self):
        Q = np.eye(1, dtype=complex)
        g = np.array([1.0 + 0j])
        con = lmi.QuadraticUncertaintyConstraint(
            nominal_vec=g, radius=0.5, kernel=Q, bound=2.3, sense="max_le")
        assert con.satisfied(tol=1e-9)  # (1+0.5)^2 = 2.25 <= 2.3
        con2 = lmi.QuadraticUncertaintyConstraint(
            nominal_vec=g, radius=0.5, kernel=Q, bound=2.2, sense="max_le")
        assert not con2.satisfied()
