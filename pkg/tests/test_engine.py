import random

import pytest

from portsat.engine import (BinaryConflict, EngineConfig, NaryConflict, Vsids,
                            check_watch_invariant, luby, solve)
from portsat.model import FALSE, UNDEF, Status, encode_literal, verify_model

from helpers import as_dimacs, decide, dimacs_set, formula, make_solver
from oracle import (EntailmentOracle, brute_force_sat, luby_by_construction, luby_recurrence,
                    pigeonhole, random_kcnf, random_mixed_cnf, unit_closure)

L = encode_literal


def test_empty_formula_is_sat_with_all_vars_decided():
    r = solve(formula(3, []))
    assert r.status is Status.SAT
    assert len(r.model) == 3
    assert r.stats.decisions == 3


def test_contradicting_units_unsat_without_decisions():
    r = solve(formula(1, [[1], [-1]]))
    assert r.status is Status.UNSAT
    assert r.stats.decisions == 0


def test_empty_clause_is_unsat():
    f = formula(2, [[1, 2]])
    f.has_empty_clause = True
    assert solve(f).status is Status.UNSAT


def test_random_3cnf_matches_truth_table():
    rng = random.Random(2024)
    for _ in range(500):
        n = rng.randint(3, 20)
        m = round(n * rng.uniform(3.0, 5.5))
        cls = random_kcnf(rng, n, m)
        r = solve(formula(n, cls), EngineConfig(seed=rng.randrange(1000)))
        assert (r.status is Status.SAT) == brute_force_sat(n, cls)
        if r.status is Status.SAT:
            assert verify_model(formula(n, cls).clauses, r.model)


def test_bcp_implication_chain():
    s = make_solver(3, [[-1, 2], [-2, 3]])
    assert decide(s, 1) is None
    assert s.trail.stack == [L(1), L(2), L(3)]


def test_bcp_binary_conflict():
    s = make_solver(2, [[-1, 2], [-1, -2]])
    conflict = decide(s, 1)
    assert isinstance(conflict, BinaryConflict)
    assert conflict.literal == L(1)
    assert conflict.implied == L(-2)


def test_bcp_nary_propagation_and_conflict():
    s = make_solver(4, [[-1, -2, 3], [-1, -2, -3, 4], [-4, -3, -2]])
    assert decide(s, 1) is None
    conflict = decide(s, 2)
    assert isinstance(conflict, NaryConflict)
    assert all(s.trail.value(l) == FALSE for l in conflict.clause.lits)


def test_bcp_fixpoint_equals_naive_closure():
    rng = random.Random(77)
    trails = 0
    while trails < 1000:
        n = rng.randint(3, 25)
        cls = random_mixed_cnf(rng, n, rng.randint(n, 3 * n))
        f = formula(n, cls)
        clean = as_dimacs(f)
        units = [c[0] for c in clean if len(c) == 1]
        for _ in range(5):
            trails += 1
            s = make_solver(n, cls)
            conflict = None if s.enqueue_units() else "units"
            if conflict is None:
                conflict = s.bcp()
            decisions = []
            while True:
                expected = unit_closure(clean, units + decisions)
                if conflict is not None:
                    assert expected is None
                    break
                assert expected is not None
                assert dimacs_set(s.trail.stack) == expected
                assert check_watch_invariant(s.view, s.trail.vals) == []
                free = [v for v in range(n) if s.trail.vals[v] == UNDEF]
                if not free:
                    break
                lit = (rng.choice(free) + 1) * rng.choice((1, -1))
                decisions.append(lit)
                conflict = decide(s, lit)


def test_analyze_single_decision_cause():
    s = make_solver(2, [[-1, 2], [-1, -2]])
    conflict = decide(s, 1)
    lemma, level, _ = s.analyze_conflict(conflict)
    assert lemma == [L(-1)]
    assert level == 0


def test_analyze_textbook_instance():
    # x1@1 implies x2; x4@2 gives x3 then -x5 (binary) and the ternary
    # {-x3,-x2,x5} is falsified. Walking back from -x5 reaches x3 as the
    # first UIP, so the lemma is {-x3, -x2} with backjump level 1.
    cls = [[-1, 2], [-2, -4, 3], [-3, -2, 5], [-5, -3]]
    s = make_solver(5, cls)
    assert decide(s, 1) is None
    conflict = decide(s, 4)
    assert conflict is not None
    lemma, level, _ = s.analyze_conflict(conflict)
    assert lemma == [L(-3), L(-2)]
    assert level == 1
    levels = [s.trail.level[l >> 1] for l in lemma]
    assert levels.count(2) == 1
    assert EntailmentOracle(5, cls).entails([-3, -2])


def test_minimize_removes_binary_implied_literal():
    # b is forced by a through a binary clause and -a is in the lemma, so -b
    # is redundant.
    s = make_solver(4, [[-1, 2], [-1, -2, -3, 4]])
    assert decide(s, 1) is None
    assert decide(s, 3) is None
    lemma = [L(-4), L(-2), L(-1)]
    assert s.minimize_lemma(lemma) == [L(-4), L(-1)]
    assert not any(s.seen)


def test_minimize_keeps_irreducible_lemma():
    s = make_solver(3, [])
    decide(s, 1)
    decide(s, 2)
    decide(s, 3)
    assert s.minimize_lemma([L(-3), L(-2), L(-1)]) == [L(-3), L(-2), L(-1)]


def _lemma_runs(runs, seed, n_range=(6, 14), mode="none"):
    """Yield (oracle, learned, minimized) for every conflict of many small runs."""
    rng = random.Random(seed)
    for _ in range(runs):
        n = rng.randint(*n_range)
        cls = random_kcnf(rng, n, round(n * rng.uniform(3.8, 5.0)))
        log = []
        s = make_solver(n, cls, mode=mode,
                        config=EngineConfig(seed=rng.randrange(99), luby_unit=3, cleanup_interval=7),
                        lemma_hook=lambda a, b: log.append((a, b)))
        s.solve()
        oracle = EntailmentOracle(n, cls)
        yield oracle, log


def _dimacs(codes):
    return [((c >> 1) + 1) * (-1 if c & 1 else 1) for c in codes]


def test_learned_and_minimized_lemmas_are_entailed():
    checked = 0
    for oracle, log in _lemma_runs(200, seed=4):
        for learned, minimized in log:
            assert set(minimized) <= set(learned)
            assert minimized[0] == learned[0]
            assert oracle.entails(_dimacs(learned))
            assert oracle.entails(_dimacs(minimized))
            checked += 1
    assert checked > 500


def test_lemma_is_asserting_after_backjump():
    rng = random.Random(8)
    seen = 0
    for _ in range(100):
        n = rng.randint(8, 16)
        s = make_solver(n, random_kcnf(rng, n, round(4.3 * n)),
                        config=EngineConfig(luby_unit=4, cleanup_interval=9))
        learn = s.learn

        def checked_learn(lemma, s=s, learn=learn):
            nonlocal seen
            vals = [s.trail.value(l) for l in lemma]
            assert vals[0] == UNDEF
            assert all(v == FALSE for v in vals[1:])
            assert max((s.trail.level[l >> 1] for l in lemma[1:]), default=0) == s.trail.decision_level
            seen += 1
            learn(lemma)

        s.learn = checked_learn
        s.solve()
    assert seen > 100


def test_decide_none_when_all_assigned():
    s = make_solver(2, [[1], [2]])
    s.enqueue_units()
    s.bcp()
    assert s.decide() is None


def test_decide_picks_max_activity():
    vs = Vsids(3)
    vs.activity = [0.0, 5.0, 1.0]
    vs.rebuild()
    assert vs.pop_max(bytearray([UNDEF] * 3)) == 1


def test_decide_ties_go_to_lowest_index():
    vs = Vsids(4)
    vs.activity = [1.0, 3.0, 3.0, 3.0]
    vs.rebuild()
    assert vs.pop_max(bytearray([UNDEF, UNDEF, UNDEF, UNDEF])) == 1
    assert vs.pop_max(bytearray([UNDEF, 1, UNDEF, UNDEF])) == 2


def test_bump_arithmetic():
    vs = Vsids(3)
    vs.bump([1])
    assert vs.activity[1] == 1.0
    assert vs.increment == pytest.approx(1.0526, abs=1e-4)


def test_rescale_at_threshold():
    vs = Vsids(3, threshold=1e100)
    vs.activity = [1e100, 2.0, 3.0]
    vs.increment = 1.0
    before = sorted(range(3), key=lambda v: vs.activity[v])
    vs.bump([0])
    assert vs.activity[0] == pytest.approx(1.0)
    assert vs.activity[1:] == pytest.approx([2e-100, 3e-100], rel=1e-12)
    assert sorted(range(3), key=lambda v: vs.activity[v]) == before
    assert all(a <= vs.threshold for a in vs.activity)


def test_repeatedly_bumped_var_stays_argmax_through_rescales():
    vs = Vsids(6, threshold=50.0, rng=random.Random(1))
    for k in range(40):
        vs.bump([2])
        assert max(range(6), key=lambda v: (vs.activity[v], -v)) == 2
        assert all(a <= vs.threshold for a in vs.activity)
    assert vs.pop_max(bytearray([UNDEF] * 6)) == 2


@pytest.mark.parametrize("i, expected", [(1, 1), (2, 1), (3, 2), (4, 1), (5, 1), (6, 2),
                                         (7, 4), (8, 1), (15, 8)])
def test_luby_examples(i, expected):
    assert luby(i) == expected == luby_recurrence(i)


def test_luby_matches_oracles():
    seq = luby_by_construction(1023)
    assert [luby(i) for i in range(1, 1024)] == seq == [luby_recurrence(i) for i in range(1, 1024)]
    with pytest.raises(ValueError):
        luby(0)


def test_backjump_to_zero_keeps_only_units():
    s = make_solver(5, [[1], [-1, 2]])
    s.enqueue_units()
    s.bcp()
    decide(s, 3)
    decide(s, 4)
    s.backjump(0)
    assert s.trail.stack == [L(1), L(2)]
    assert s.trail.decision_level == 0


def test_backjump_round_trip_snapshot():
    s = make_solver(8, [[-1, 2], [-3, 4], [-5, 6]])
    decide(s, 1)
    snap = bytes(s.trail.vals)
    decide(s, 3)
    decide(s, 5)
    s.backjump(1)
    assert bytes(s.trail.vals) == snap
    assert s.trail.level_marks == [0]
    # unassigned vars are decidable again
    picked = set()
    while (lit := s.decide()) is not None:
        picked.add(lit >> 1)
        s.trail.new_level()
        s.assign(lit)
    assert {2, 3, 4, 5, 6, 7} <= picked


@pytest.mark.parametrize("mode", ["none", "bins", "all"])
def test_single_worker_runs_are_deterministic(mode):
    rng = random.Random(31)
    for _ in range(20):
        n = rng.randint(15, 20)
        cls = random_kcnf(rng, n, round(4.26 * n))
        cfg = EngineConfig(seed=5, luby_unit=8, cleanup_interval=20)
        runs = [make_solver(n, cls, mode, cfg).solve() for _ in range(3)]
        counts = [r.stats.search_counts() for r in runs]
        assert counts[0] == counts[1] == counts[2]


def test_status_agrees_across_modes():
    rng = random.Random(12)
    for _ in range(60):
        n = rng.randint(5, 16)
        cls = random_kcnf(rng, n, round(n * rng.uniform(3.5, 5.0)))
        statuses = {make_solver(n, cls, mode).solve().status for mode in ("none", "bins", "all")}
        assert len(statuses) == 1


@pytest.mark.parametrize("mode", ["none", "bins", "all"])
def test_watch_invariant_holds_at_every_fixpoint(mode):
    rng = random.Random(41)
    cfg = EngineConfig(debug_invariants=True, luby_unit=4, cleanup_interval=6)
    for _ in range(40):
        n = rng.randint(6, 16)
        s = make_solver(n, random_mixed_cnf(rng, n, 4 * n) + random_kcnf(rng, n, 2 * n),
                        mode, cfg)
        s.solve()
        assert s.invariant_violations == []


def test_cleanup_deletes_lemmas_and_stays_correct():
    n, cls = pigeonhole(6, 5)
    s = make_solver(n, cls, config=EngineConfig(luby_unit=16, cleanup_interval=30))
    r = s.solve()
    assert r.status is Status.UNSAT
    assert r.stats.deleted_clauses > 0
    assert r.stats.restarts > 0


def test_minimization_can_be_disabled():
    n, cls = pigeonhole(5, 4)
    on = make_solver(n, cls).solve()
    off = make_solver(n, cls, config=EngineConfig(minimize=False)).solve()
    assert on.status is off.status is Status.UNSAT


def test_cancel_token_gives_unknown():
    class Stop:
        reason = "cancelled"

        def is_set(self):
            return True

    s = make_solver(3, [[1, 2, 3]])
    s.cancel = Stop()
    r = s.solve()
    assert r.status is Status.UNKNOWN and r.reason == "cancelled"


def test_engine_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(vsids_bump_growth=1.0)
    with pytest.raises(ValueError):
        EngineConfig(luby_unit=0)
