"""Acceptance suite.

Each test implements one acceptance criterion at its stated tolerance and
prints a single ``[PASS]``/``[FAIL]`` line (run with ``pytest -s`` to see
them).  The suite needs the bundled solver (or FAIRVER_SOLVER).
"""

import time

import numpy as np

from fairver.bounds import neuron_bounds
from fairver.model_io import (
    Activation,
    Attribute,
    AttributeSchema,
    Layer,
    Network,
    OutputActivation,
    forward_batch,
    load_schema,
    save_portable,
)
from fairver.oracle import brute_force, brute_force_bounds
from fairver.partitioner import Status, accumulate, partition
from fairver.pruning import (
    PrunedNetwork,
    apply_pruning_batch,
    heuristic_prune,
    profile,
    sound_prune,
)
from fairver.query import (
    FairnessQuery,
    build_predicate,
    check_counterexample,
    wp_of_output,
)
from fairver.runner import RunOptions, run
from fairver.smt import decode_pair, encode

from util import make_int_schema, make_net, random_tiny_instance

SCHEMAS = __import__("pathlib").Path(__file__).resolve().parents[1] / "schemas"


def _verdict(name: str, ok: bool, details: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {details}")
    assert ok, f"{name}: {details}"


# ---------------------------------------------------------------------------


def test_acceptance_oracle_equivalence(session):
    """Verifier vs exhaustive enumeration on >= 200 random tiny networks."""
    t0 = time.monotonic()
    rng = np.random.default_rng(20_240)
    n_nets = 200
    partitions = sats = unknowns = mismatches = replay_failures = 0
    for k in range(n_nets):
        inst = random_tiny_instance(rng, with_epsilon=(k % 3 == 0))
        pred = build_predicate(inst.query, inst.schema, inst.net)
        pset = partition(pred.domain_box, inst.query, inst.schema, shuffle_seed=k)
        for pid in list(pset.ids_shuffled())[:3]:
            part = pset.box(pid)
            partitions += 1
            nb = neuron_bounds(inst.net, part.box)
            pruned = sound_prune(inst.net, part.box, nb, session, timeout_s=6.0)
            script = encode(pruned, pred, part, inst.schema, timeout_s=6.0, seed=0)
            outcome = session.check(script, 6.0)
            if outcome.status is Status.UNKNOWN:
                unknowns += 1
                continue
            expected = brute_force(inst.net, pred, part).status
            if outcome.status != expected:
                mismatches += 1
                continue
            if outcome.status is Status.SAT:
                sats += 1
                x, xp = decode_pair(outcome.model, inst.schema)
                if not check_counterexample(pred, inst.net, x, xp):
                    replay_failures += 1
    elapsed = time.monotonic() - t0
    ok = (
        mismatches == 0
        and replay_failures == 0
        and partitions - unknowns > 0
        and elapsed <= 600.0
    )
    _verdict(
        "oracle equivalence",
        ok,
        f"{n_nets} networks, {partitions} partitions ({sats} sat, "
        f"{unknowns} unknown), {mismatches} mismatches, "
        f"{replay_failures} replay failures, {elapsed:.0f}s",
    )


def test_acceptance_interval_soundness():
    """No sampled weighted sum ever escapes its bounds; exhaustive on
    integer micro-boxes."""
    rng = np.random.default_rng(77)
    violations = 0
    checked = 0
    for k in range(50):
        n_attrs = int(rng.integers(2, 6))
        net = make_net(
            [n_attrs, int(rng.integers(2, 9)), int(rng.integers(2, 9)), 1], rng
        )
        domain = [(float(rng.integers(-20, 0)), float(rng.integers(1, 21))) for _ in range(n_attrs)]
        for _ in range(20):
            lo = np.array([rng.uniform(a, b) for a, b in domain])
            hi = np.array([rng.uniform(l, b) for l, (a, b) in zip(lo, domain)])
            box = list(zip(lo, hi))
            nb = neuron_bounds(net, box)
            xs = rng.uniform(lo, hi, size=(10_000, n_attrs))
            a = xs
            for li, layer in enumerate(net.layers):
                z = a @ layer.weights.T + layer.biases
                lb, ub = nb.pre[li]
                violations += int((z < lb).sum() + (z > ub).sum())
                checked += z.size
                a = np.maximum(z, 0.0) if layer.activation is Activation.RELU else z
    # exhaustive on integer micro-boxes
    exhaustive_bad = 0
    for k in range(25):
        net = make_net([2, int(rng.integers(2, 7)), 1], rng)
        box = [(0.0, float(rng.integers(2, 8))), (-3.0, float(rng.integers(-2, 5)))]
        nb = neuron_bounds(net, box)
        for li, (gmin, gmax) in enumerate(brute_force_bounds(net, box)):
            lb, ub = nb.pre[li]
            exhaustive_bad += int((gmin < lb).sum() + (gmax > ub).sum())
    ok = violations == 0 and exhaustive_bad == 0
    _verdict(
        "interval soundness",
        ok,
        f"{checked} sampled sums in bounds, {violations} violations, "
        f"{exhaustive_bad} exhaustive violations",
    )


def test_acceptance_sound_pruning_equivalence(session):
    """Pruned and base networks agree on the region, both concretely and for
    the solver."""
    rng = np.random.default_rng(88)
    worst = 0.0
    pruned_neurons = 0
    for k in range(50):
        n_attrs = int(rng.integers(2, 5))
        net = make_net(
            [n_attrs, int(rng.integers(4, 9)), int(rng.integers(3, 7)), 1],
            rng,
            bias_shift=-0.4,
        )
        lo = np.array([float(rng.integers(0, 4)) for _ in range(n_attrs)])
        hi = lo + np.array([float(rng.integers(1, 4)) for _ in range(n_attrs)])
        box = list(zip(lo, hi))
        nb = neuron_bounds(net, box)
        pruned = sound_prune(net, box, nb, session, timeout_s=6.0)
        pruned_neurons += len(pruned.removed) + len(pruned.linearized)
        xs = rng.uniform(lo, hi, size=(10_000, n_attrs))
        diff = np.abs(forward_batch(net, xs) - apply_pruning_batch(pruned, xs))
        worst = max(worst, float(diff.max()))
    statuses_agree = 0
    status_trials = 50
    rng2 = np.random.default_rng(99)
    for k in range(status_trials):
        inst = random_tiny_instance(rng2)
        pred = build_predicate(inst.query, inst.schema, inst.net)
        pset = partition(pred.domain_box, inst.query, inst.schema, shuffle_seed=k)
        part = pset.box(next(iter(pset.ids_shuffled())))
        nb = neuron_bounds(inst.net, part.box)
        pruned = sound_prune(inst.net, part.box, nb, session, timeout_s=6.0)
        base_out = session.check(
            encode(inst.net, pred, part, inst.schema, timeout_s=6.0, seed=0), 6.0
        )
        pruned_out = session.check(
            encode(pruned, pred, part, inst.schema, timeout_s=6.0, seed=0), 6.0
        )
        if Status.UNKNOWN in (base_out.status, pruned_out.status):
            statuses_agree += 1  # undecided either way; no witness against equisatisfiability
        elif base_out.status == pruned_out.status:
            statuses_agree += 1
    ok = worst <= 1e-9 and statuses_agree == status_trials
    _verdict(
        "sound-pruning equivalence",
        ok,
        f"max forward deviation {worst:.2e} over 50 cases "
        f"({pruned_neurons} neurons pruned), {statuses_agree}/{status_trials} "
        f"statuses agree",
    )


def test_acceptance_definition_subsumption(session):
    """A relaxed-similarity certificate is stronger: no instance may be
    unsat under relaxation yet sat under plain equality."""
    rng = np.random.default_rng(2025)
    instances = 0
    contradictions = 0
    confirmed = 0
    while instances < 40:
        inst = random_tiny_instance(rng)
        n = len(inst.schema)
        if n < 2:
            continue
        protected = inst.query.protected[0]
        others = [i for i in range(n) if i != protected]
        eps_attr = int(rng.choice(others))
        q1 = FairnessQuery(protected=(protected,), max_attribute_size=inst.query.max_attribute_size)
        q2 = FairnessQuery(
            protected=(protected,),
            epsilon={eps_attr: float(rng.integers(1, 3))},
            max_attribute_size=inst.query.max_attribute_size,
        )
        pred1 = build_predicate(q1, inst.schema, inst.net)
        pred2 = build_predicate(q2, inst.schema, inst.net)
        instances += 1
        box = pred1.domain_box
        r2 = brute_force(inst.net, pred2, box)
        r1 = brute_force(inst.net, pred1, box)
        if r2.status is Status.UNSAT and r1.status is Status.SAT:
            contradictions += 1
            continue
        if r2.status is Status.UNSAT:
            # confirm every region of the plain query independently
            pset = partition(pred1.domain_box, q1, inst.schema, shuffle_seed=0)
            all_unsat = True
            for pid in pset.ids_shuffled():
                part = pset.box(pid)
                if brute_force(inst.net, pred1, part).status is not Status.UNSAT:
                    all_unsat = False
                    break
                nb = neuron_bounds(inst.net, part.box)
                pruned = sound_prune(inst.net, part.box, nb, session, timeout_s=6.0)
                out = session.check(
                    encode(pruned, pred1, part, inst.schema, timeout_s=6.0, seed=0), 6.0
                )
                if out.status is Status.SAT:
                    all_unsat = False
                    break
            if all_unsat:
                confirmed += 1
            else:
                contradictions += 1
    ok = contradictions == 0
    _verdict(
        "definition subsumption",
        ok,
        f"{instances} instances, {confirmed} relaxed-unsat cases confirmed "
        f"region-by-region, {contradictions} contradictions",
    )


def test_acceptance_partition_arithmetic():
    """The shipped dataset schemas reproduce the reference region counts."""
    cases = [
        ("bank-marketing.json", "age", 100, 510),
        ("german-credit.json", "sex", 100, 201),
        ("adult-census.json", "race", 10, 16000),
    ]
    got = []
    ok = True
    for fname, pa, ms, expected in cases:
        schema = load_schema(SCHEMAS / fname)
        q = FairnessQuery(protected=(schema.index_of(pa),), max_attribute_size=ms)
        n = len(partition(schema.box(), q, schema))
        got.append(f"{fname.split('.')[0]}={n}")
        ok = ok and n == expected
    _verdict("partition arithmetic", ok, ", ".join(got) + " (want 510/201/16000)")


def test_acceptance_wp_truth_tables():
    """The logit-level violation predicates coincide with classification
    difference on random logits (off the measure-zero boundary)."""
    rng = np.random.default_rng(4242)
    n = 100_000
    wp_sig = wp_of_output(OutputActivation.SIGMOID, 1)
    y, yp = rng.normal(size=(2, n))
    pred_vals = ((y < 0) & (yp > 0)) | ((y > 0) & (yp < 0))
    cls_vals = (y > 0) != (yp > 0)
    sig_mism = int((pred_vals != cls_vals).sum())
    spot = all(
        wp_sig.evaluate([y[i]], [yp[i]]) == bool(pred_vals[i]) for i in range(0, n, 9973)
    )

    wp_soft = wp_of_output(OutputActivation.SOFTMAX, 2)
    a0, a1, b0, b1 = rng.normal(size=(4, n))
    pred_vals2 = ((a0 > a1) & (b0 < b1)) | ((a0 < a1) & (b0 > b1))
    cls_vals2 = (a1 > a0) != (b1 > b0)
    soft_mism = int((pred_vals2 != cls_vals2).sum())
    spot2 = all(
        wp_soft.evaluate([a0[i], a1[i]], [b0[i], b1[i]]) == bool(pred_vals2[i])
        for i in range(0, n, 9973)
    )
    ok = sig_mism == 0 and soft_mism == 0 and spot and spot2
    _verdict(
        "wp truth tables",
        ok,
        f"{n} samples each; sigmoid mismatches {sig_mism}, "
        f"softmax mismatches {soft_mism}",
    )


def test_acceptance_timeout_discipline(tmp_path):
    """Per-call walls stay within soft-timeout + grace on a network built to
    stall the solver; coverage and the folded verdict stay consistent."""
    rng = np.random.default_rng(31337)
    net = make_net([6, 32, 32, 32, 1], rng, weight_scale=1.4)
    w0 = net.layers[0].weights.copy()
    w0[:, 5] *= 1e-5  # protected influence too small to find, too real to refute
    net = Network(
        layers=(Layer(w0, net.layers[0].biases, Activation.RELU),) + net.layers[1:],
        input_arity=6,
        output_arity=1,
        output_activation=OutputActivation.SIGMOID,
    )
    schema = AttributeSchema(
        tuple(
            [Attribute(f"r{i}", 0.0, 200.0, False) for i in range(5)]
            + [Attribute("p", 0, 9, True)]
        )
    )
    path = tmp_path / "adversarial.json"
    save_portable(net, schema, path)
    soft, grace = 2.0, 5.0
    q = FairnessQuery(
        protected=(5,), soft_timeout_s=soft, hard_timeout_s=25.0, max_attribute_size=100
    )
    report = run(path, q, RunOptions(seed=0, tolerance_pct=5.0, profile_size=200))
    walls = [r.t_solver_sound_s for r in report.results] + [
        r.t_solver_heuristic_s for r in report.results if r.heuristic_attempted
    ]
    worst = max(walls)
    hit_limit = sum(w >= soft for w in walls)
    verdict = accumulate(report.results, total=report.partitions_total)
    consistent = (
        verdict.status == report.verdict
        and verdict.coverage_pct == report.coverage_pct
    )
    # allowance past the kill deadline covers teardown, not extra solving
    ok = worst <= soft + grace + 1.0 and hit_limit >= 1 and consistent
    _verdict(
        "timeout discipline",
        ok,
        f"{len(walls)} solver calls, {hit_limit} reached the soft timeout, "
        f"worst wall {worst:.2f}s (limit {soft + grace:.0f}s), "
        f"report consistent: {consistent}",
    )


def test_acceptance_heuristic_conservatism():
    """Default profile/tolerance removes only profile-inactive neurons and
    preserves classifications on fresh samples."""
    rng = np.random.default_rng(123)
    worst_agreement = 1.0
    removals_total = 0
    candidate_violations = 0
    for k in range(50):
        n_attrs = int(rng.integers(3, 6))
        ranges = [(0, int(rng.integers(4, 20))) for _ in range(n_attrs)]
        schema = make_int_schema(ranges)
        sizes = [n_attrs, int(rng.integers(10, 15)), int(rng.integers(8, 13)), 1]
        net = make_net(sizes, rng, weight_scale=1.0, bias_shift=-0.3)
        # plant the patterns trained models exhibit: one silent unit and one
        # unit active only in a rare corner of the domain
        w = net.layers[0].weights.copy()
        b = net.layers[0].biases.copy()
        w[0] *= 1e-4
        b[0] = -0.01
        w[1] = rng.normal(size=w.shape[1]) * 0.02
        sample = schema.sample(np.random.default_rng(999), 20_000)
        b[1] = -float(np.quantile(sample @ w[1], 1 - 3e-4))
        net = Network(
            layers=(Layer(w, b, Activation.RELU),) + net.layers[1:],
            input_arity=n_attrs,
            output_arity=1,
            output_activation=OutputActivation.SIGMOID,
        )
        prof = profile(net, schema, size=1000, seed=k)
        pruned = heuristic_prune(PrunedNetwork(base=net), prof, tolerance_pct=5.0)
        if not pruned.removed <= prof.candidates:
            candidate_violations += 1
        removals_total += len(pruned.removed)
        fresh = schema.sample(np.random.default_rng(10_000 + k), 10_000)
        base_labels = forward_batch(net, fresh)[:, 0] > 0
        pruned_labels = apply_pruning_batch(pruned, fresh)[:, 0] > 0
        worst_agreement = min(
            worst_agreement, float(np.mean(base_labels == pruned_labels))
        )
    ok = (
        candidate_violations == 0
        and worst_agreement >= 0.999
        and removals_total > 0
    )
    _verdict(
        "heuristic conservatism",
        ok,
        f"50 networks, {removals_total} heuristic removals (all candidates: "
        f"{candidate_violations == 0}), worst classification agreement "
        f"{worst_agreement:.4f} (>= 0.999)",
    )
