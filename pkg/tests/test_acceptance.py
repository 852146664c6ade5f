"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from eigenba.attacks import AttackConfig, run_attack, white_box_descent_oracle
from eigenba.campaign import Campaign, make_provider, run_ablation, run_campaign, select_attack_set
from eigenba.linalg import brute_force_problem5, eigen_directions, finite_difference_jacobian, truncated_svd
from eigenba.net import ReLU, build_cnn, build_mlp
from eigenba.oracle import AttackObjective, QueryOracle
from eigenba.scenarios import desk_pair
from oracles import jacobi_eigh, relative_gaps

ALPHA = 0.05  # matched step size for every method in the trend campaign
EIGEN_K = 2
BUDGET = 2000
IMAGES = 100


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def pair():
    return desk_pair("same-arch", seed=0)


def test_eigen_directions_solve_greedy_problem(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst, done = 1.0, 0
    while done < 200:
        m, n = rng.integers(1, 9, size=2)
        J = rng.standard_normal((m, n))
        k = int(min(m, n))
        w, _ = jacobi_eigh(J.T @ J)
        sigma = np.sqrt(np.clip(w, 0, None))
        if np.any(relative_gaps(sigma)[:k] < 1e-3):
            continue
        pairs = zip(eigen_directions(J, k), brute_force_problem5(J, k, seed=done))
        worst = min(worst, min(abs(float(a @ b)) for a, b in pairs))
        done += 1
    elapsed = time.perf_counter() - start
    verdict(1, "eigen directions match the brute-force greedy solution", worst >= 0.999 and elapsed < 60,
            f"min |cos| {worst:.12f} over 200 Jacobians in {elapsed:.1f}s")


def test_svd_numerics(verdict):
    rng = np.random.default_rng(7)
    shapes = [(3, 3), (8, 5), (5, 8), (20, 50), (64, 144), (144, 64), (10, 10), (1, 9)]
    ortho = recon = image = 0.0
    for m, n in shapes:
        J = rng.standard_normal((m, n)) * rng.uniform(0.01, 100)
        r = truncated_svd(J, min(m, n))
        U, V, s = r.left_vectors, r.right_vectors, r.singular_values
        ortho = max(ortho, np.abs(U.T @ U - np.eye(r.k)).max(), np.abs(V.T @ V - np.eye(r.k)).max())
        recon = max(recon, np.linalg.norm(U * s @ V.T - J) / np.linalg.norm(J))
        images = J @ V
        G = images.T @ images
        cos = G / np.sqrt(np.outer(np.diag(G), np.diag(G)))
        image = max(image, np.abs(cos - np.eye(r.k)).max())
    ok = ortho < 1e-8 and recon < 1e-8 and image < 1e-6
    verdict(2, "SVD orthonormality, reconstruction, orthogonal images", ok,
            f"orthonormality {ortho:.1e}, reconstruction {recon:.1e}, image cosine {image:.1e}")


def _kink_margin(model, x):
    a = model._sample(x)
    margin = np.inf
    for layer in model.layers[: model.representation_index]:
        if isinstance(layer, ReLU):
            margin = min(margin, np.abs(a).min())
        a, _ = layer.forward(a)
    return margin


def test_jacobian_correctness(verdict):
    rng = np.random.default_rng(11)
    fd_err = decomp_err = 0.0
    for i in range(50):
        if i % 2:
            sizes = [int(rng.integers(3, 10)) for _ in range(int(rng.integers(3, 5)))]
            model = build_mlp(sizes, int(rng.integers(1, 2 * len(sizes) - 2)), seed=i)
        else:
            c, h, w = int(rng.integers(1, 3)), int(rng.integers(5, 8)), int(rng.integers(5, 8))
            model = build_cnn((c, h, w), [2, 3], 3, [6, 4], int(rng.integers(1, 7)), seed=i)
        x = rng.random(model.input_size)
        while _kink_margin(model, x) < 1e-4:
            x = rng.random(model.input_size)
        J = model.jacobian_h(x)
        fd = finite_difference_jacobian(model.representation, x, 1e-6)
        fd_err = max(fd_err, np.abs(J - fd).max())
        z = model.representation(x)
        for cls in range(model.class_count):
            composed = J.T @ model.head_gradient(z, cls)
            decomp_err = max(decomp_err, np.abs(model.input_gradient(x, cls) - composed).max())
    ok = fd_err <= 1e-4 and decomp_err <= 1e-8
    verdict(3, "analytic Jacobians vs finite differences and the chain-rule split", ok,
            f"max fd error {fd_err:.1e}, max decomposition error {decomp_err:.1e}")


class CountingTarget:
    def __init__(self, model):
        self.model = model
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.model.forward(x)


_contract_failures = []


@pytest.fixture(scope="module")
def contract_setup(small_pair):
    attacked, surrogate, test = small_pair
    return attacked, surrogate, select_attack_set(attacked, test, 12, seed=0, targeted=False)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    method=st.sampled_from(["eigenba", "simba", "simba-dct", "trans-fgm", "trans-fgsm"]),
    item=st.integers(0, 11),
    seed=st.integers(0, 2**31),
    budget=st.integers(1, 400),
    alpha=st.floats(0.01, 0.5),
    k=st.integers(1, 8),
    targeted=st.booleans(),
)
def _contract_case(contract_setup, method, item, seed, budget, alpha, k, targeted):
    attacked, surrogate, items = contract_setup
    it = items[item]
    objective = AttackObjective.toward((it.label + 1) % 4) if targeted else it.objective()
    cfg = AttackConfig(step_size=alpha, k=k, budget=budget, seed=seed)
    runs = []
    for _ in range(2):
        target = CountingTarget(attacked)
        provider = make_provider(method, attacked, surrogate, k)
        out = run_attack(QueryOracle(target, budget), objective, provider, cfg, it.x)
        runs.append((out, target.calls))
    (out, calls), (again, _) = runs
    values = [v for _, v in out.trace]
    problems = []
    if not all(b < a for a, b in zip(values, values[1:])):
        problems.append("objective not strictly decreasing")
    if out.queries_used != calls:
        problems.append(f"counted {out.queries_used} queries, target saw {calls}")
    if calls > budget or (not out.success and calls != budget):
        problems.append(f"budget {budget} not a hard stop ({calls} calls)")
    if again.queries_used != out.queries_used or not np.array_equal(again.perturbation, out.perturbation):
        problems.append("not deterministic")
    if problems:
        _contract_failures.append((method, seed, budget, problems))


def test_algorithm_contract(contract_setup, verdict):
    _contract_failures.clear()
    _contract_case(contract_setup)
    verdict(4, "monotone objective, exact query accounting, budget hard stop, determinism",
            not _contract_failures, f"{len(_contract_failures)} violating cases {_contract_failures[:3]}")


def test_trend_reproduction(pair, verdict):
    start = time.perf_counter()
    items = select_attack_set(pair.attacked, pair.test, IMAGES, seed=0)
    reports = {}
    for method in ("eigenba", "trans-fgm", "simba"):
        cfg = AttackConfig(step_size=ALPHA, k=EIGEN_K, budget=BUDGET, seed=0)
        reports[method] = run_campaign(Campaign(pair.attacked, method, cfg, items, surrogate=pair.surrogate))
    elapsed = time.perf_counter() - start
    q = {m: r.avg_queries_all for m, r in reports.items()}
    rates = [r.success_rate for r in reports.values()]
    ok = (
        q["eigenba"] < q["trans-fgm"] < q["simba"]
        and max(rates) - min(rates) <= 0.02
        and elapsed < 600
    )
    detail = ", ".join(f"{m} {q[m]:.2f} queries / {reports[m].success_rate:.2f} success" for m in q)
    verdict(5, "EigenBA < Trans-FGM < SimBA in mean queries", ok, f"{detail}; {elapsed:.0f}s")


def test_reserve_rate_ablation(pair, verdict):
    items = select_attack_set(pair.attacked, pair.test, IMAGES, seed=0)
    cfg = AttackConfig(step_size=ALPHA, k=EIGEN_K, budget=BUDGET, seed=0)
    (_, full, _), (_, half, _) = run_ablation(pair.attacked, [1.0, 0.5], cfg, items, zero_seed=0)
    identical = run_campaign(Campaign(pair.attacked, "eigenba", cfg, items, surrogate=pair.attacked))
    ok = full.avg_queries_all < half.avg_queries_all and full == identical
    verdict(6, "reserve rate 1.0 beats 0.5 and equals the identical-surrogate run", ok,
            f"rate 1.0 {full.avg_queries_all:.2f}, rate 0.5 {half.avg_queries_all:.2f}, "
            f"identical run equal: {full == identical}")


def _one_step_gain(J, D, W):
    # norm of the head-gradient component captured by span(D), per unit input norm
    return np.sqrt(((W @ J @ D) ** 2).sum(axis=1))


def test_eigen_triples_beat_random_triples(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    m, n, draws, trials = 8, 20, 10_000, 500
    J = rng.standard_normal((m, n))
    W = rng.standard_normal((draws, m))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    eigen = _one_step_gain(J, np.column_stack(eigen_directions(J, 3)), W)
    worst_z = np.inf
    for _ in range(trials):
        D, _ = np.linalg.qr(rng.standard_normal((n, 3)))
        diff = eigen - _one_step_gain(J, D, W)
        worst_z = min(worst_z, diff.mean() / (diff.std(ddof=1) / np.sqrt(draws)))
    elapsed = time.perf_counter() - start
    ok = worst_z > 1.6449 and elapsed < 120
    verdict(7, "eigen triples beat 500 random orthogonal triples at 95% confidence", ok,
            f"smallest paired z {worst_z:.1f} (need > 1.645), {elapsed:.1f}s")


def test_targeted_mode(pair, verdict):
    items = select_attack_set(pair.attacked, pair.test, IMAGES, seed=0, targeted=True)
    attackable = [
        white_box_descent_oracle(pair.attacked, it.x, it.objective(), 0.05, 500).success for it in items
    ]
    cfg = AttackConfig(step_size=ALPHA, k=EIGEN_K, budget=BUDGET, seed=0)
    campaign = Campaign(pair.attacked, "eigenba", cfg, items, surrogate=pair.surrogate)
    run_campaign(campaign)
    hits = sum(o.success for o, a in zip(campaign.outcomes, attackable) if a)
    total = sum(attackable)
    rate = hits / total if total else 0.0
    verdict(8, "targeted EigenBA reaches the assigned class", total > 0 and rate >= 0.9,
            f"{hits}/{total} attackable images within budget {BUDGET}")
