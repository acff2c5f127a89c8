import numpy as np
import pytest

from bounds.bound_math import bound_value, chained_bound, ckd_wins, direct_bound, kd_bound, tightening_holds
from bounds.params import BoundParams
from bounds.sweep import SweepSpec, regime_sweep, summarize
from utils.errors import BoundDomainError


def test_bound_value_reference_points():
    assert bound_value(1, 1, 0.5, 0) == pytest.approx(1.0)
    assert bound_value(1, 4, 0.5, 0) == pytest.approx(0.5)
    assert bound_value(2, 100, 1.0, 0.1) == pytest.approx(0.12)
    assert bound_value(2, 100, 1.0, 0.1, K=3.0) == pytest.approx(0.16)


@pytest.mark.parametrize("args", [
    (1, 0.5, 0.5, 0.0),
    (0, 10, 0.5, 0.0),
    (1, 10, 0.4, 0.0),
    (1, 10, 1.1, 0.0),
    (1, 10, 0.5, -0.1),
])
def test_bound_value_domain(args):
    with pytest.raises(BoundDomainError):
        bound_value(*args)


def test_bound_decreases_with_n():
    values = [bound_value(3, n, 0.7, 0.01) for n in (1, 10, 100, 1e4, 1e8)]
    assert values == sorted(values, reverse=True)
    assert values[-1] > 0.01


def random_bound_args(rng):
    return dict(
        C=float(rng.uniform(0.1, 10.0)),
        n=float(10 ** rng.uniform(0.0, 8.0)),
        a=float(rng.uniform(0.5, 1.0)),
        eps=float(rng.uniform(0.0, 0.5)),
        K=float(rng.uniform(0.1, 10.0)),
    )


def test_bound_value_monotone_in_each_argument():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        args = random_bound_args(rng)
        base = bound_value(**args)
        for name in ("C", "K", "eps"):
            up = dict(args, **{name: args[name] + float(rng.uniform(0.01, 1.0))})
            assert bound_value(**up) >= base, name
        # Con n ≥ 1, un exponente mayor no aumenta la cota.
        a_up = min(1.0, args["a"] + float(rng.uniform(0.0, 0.5)))
        assert bound_value(**dict(args, a=a_up)) <= base
        n_up = args["n"] * float(rng.uniform(1.0, 100.0))
        assert bound_value(**dict(args, n=n_up)) <= base


def test_direct_bound_roles():
    p = BoundParams()
    assert direct_bound(p, "teacher") == pytest.approx(4 / 1e6 ** 0.7 + 0.01)
    assert direct_bound(p, "distilled") == pytest.approx(1 / 1e6 ** 0.6 + 0.01)
    with pytest.raises(KeyError):
        direct_bound(p, "ta")


def test_kd_bound_default_point():
    p = BoundParams()
    assert kd_bound(p, "student_teacher") == pytest.approx(5 / 1e3 + 0.02)
    assert kd_bound(p, "distilled_teacher") == pytest.approx(5 / 1e6 ** 0.6 + 0.02)
    with pytest.raises(KeyError):
        kd_bound(p, "teacher_student")


def test_kd_bound_ta_matches_teacher_when_parameters_match():
    p = BoundParams(C_a=4.0, a_sa=0.5, eps_sa=0.03, eps_st=0.03, eps_a=0.02, eps_t=0.02)
    assert kd_bound(p, "student_ta") == kd_bound(p, "student_teacher")


def test_kd_bound_tends_to_epsilon_sum():
    p = BoundParams(n=1e30, eps_st=0.05, eps_t=0.02)
    assert kd_bound(p, "student_teacher") == pytest.approx(0.07, abs=1e-12)


def test_tightening():
    p = BoundParams()
    for pair in ("student_teacher", "student_ta", "distilled_teacher"):
        assert tightening_holds(p, pair)
        assert kd_bound(p, pair) >= chained_bound(p, pair)
    assert not tightening_holds(p.with_values(a_st=0.8), "student_teacher")


def test_ckd_equal_parameters_tie():
    v = ckd_wins(BoundParams(a_sbart=0.5, eps_sbart=0.01, eps_st=0.01))
    assert v.holds
    assert v.margin == 0.0


def test_ckd_wins_with_faster_rate():
    v = ckd_wins(BoundParams(a_st=0.5, a_sbart=0.7))
    assert v.holds
    assert v.margin == pytest.approx(v.rhs - v.lhs)
    assert v.margin > 0


def test_ckd_loses_with_large_epsilon_and_small_n():
    v = ckd_wins(BoundParams(eps_sbart=0.5, n=10))
    assert not v.holds
    assert v.margin < 0


def test_params_validation():
    with pytest.raises(BoundDomainError):
        BoundParams(a_s=0.3).validate()
    p = BoundParams(a_s=0.9)
    assert p.validate() is p
    assert "a_s ≤ a_t" in p.assumption_violations()
    with pytest.raises(BoundDomainError):
        p.validate(enforce_assumptions=True)
    with pytest.raises(KeyError):
        BoundParams().with_values(C_x=1.0)


def test_c_sbar_defaults_to_student_capacity():
    assert BoundParams(C_s=3.0).c_sbar == 3.0
    assert BoundParams(C_s=3.0, C_sbar=1.5).c_sbar == 1.5


# ─────────────────────────────────────────────
# Barridos
# ─────────────────────────────────────────────

def test_sweep_holds_everywhere():
    spec = SweepSpec(axes={"n": [1e6, 1e8], "a_sbart": [0.6, 0.7]})
    result = regime_sweep(spec)
    summary = summarize(result)
    assert len(result.records) == 4
    assert summary.holds_fraction == 1.0
    assert [b.status for b in summary.boundary] == ["always", "always"]
    assert all(b.n_flip == 1e6 for b in summary.boundary)


def test_sweep_single_point():
    result = regime_sweep(SweepSpec(axes={"n": [1e6]}))
    assert len(result.records) == 1
    assert result.records[0].point == {"n": 1e6}


def test_sweep_boundary_flip():
    spec = SweepSpec(base=BoundParams(C_sbar=2.0), axes={"n": [1.0, 10.0, 100.0]})
    summary = summarize(regime_sweep(spec))
    assert summary.holds_fraction == pytest.approx(2 / 3)
    (b,) = summary.boundary
    assert b.status == "flips"
    assert b.n_flip == 10.0


def test_sweep_marks_points_against_assumptions():
    result = regime_sweep(SweepSpec(axes={"a_sbart": [0.6, 0.8]}))
    # Todos los puntos quedan registrados; el que viola a_sbart ≤ a_t no cuenta.
    assert len(result.records) == 2
    assert [r.violates_assumptions for r in result.records] == [False, True]
    assert result.excluded == 1
    summary = summarize(result)
    assert (summary.n_points, summary.n_excluded) == (1, 1)
    assert summary.boundary == []

    loose = regime_sweep(SweepSpec(axes={"a_sbart": [0.6, 0.8]}, enforce_assumptions=False))
    assert loose.excluded == 0
    assert summarize(loose).n_points == 2
    assert loose.records[1].violates_assumptions


def test_sweep_ratio_axis():
    result = regime_sweep(SweepSpec(axes={"ratio_t_s": [2.0, 8.0]}))
    assert [r.point["ratio_t_s"] for r in result.records] == [2.0, 8.0]
    assert result.records[0].rhs < result.records[1].rhs


def test_sweep_rejects_unknown_axis():
    with pytest.raises(KeyError):
        regime_sweep(SweepSpec(axes={"foo": [1.0]}))
    with pytest.raises(ValueError):
        regime_sweep(SweepSpec(axes={"n": []}))


def test_sweep_ten_thousand_points():
    axes = {
        "n": [10.0 ** k for k in range(10)],
        "C_sbar": [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0],
        "a_sbart": [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95],
        "eps_sbart": [0.0, 0.002, 0.005, 0.01, 0.02, 0.03, 0.05, 0.08, 0.1, 0.2],
    }
    result = regime_sweep(SweepSpec(axes=axes))
    summary = summarize(result)
    assert len(result.records) == 10_000
    # a_sbart > a_t = 0.7 en la mitad de la rejilla.
    assert summary.n_excluded == 5_000
    assert summary.n_points + summary.n_excluded == 10_000
    assert 0.0 < summary.holds_fraction < 1.0
    assert len(summary.boundary) == 500

    by_key = {}
    for r in result.counted():
        by_key.setdefault((r.point["C_sbar"], r.point["a_sbart"], r.point["eps_sbart"]), []).append(r)
    for b in summary.boundary:
        group = by_key[(b.fixed["C_sbar"], b.fixed["a_sbart"], b.fixed["eps_sbart"])]
        if b.n_flip is not None:
            assert all(r.holds for r in group if r.point["n"] >= b.n_flip)
        if b.status in ("flips", "never"):
            assert not all(r.holds for r in group)


def test_holds_fraction_grows_with_n():
    # Con ε_s̄t ≤ ε_st y a_st ≤ a_s̄t, una vez que CKD gana sigue ganando al crecer n.
    ns = [10.0 ** k for k in range(12)]
    axes = {
        "n": ns,
        "C_sbar": [0.5, 1.0, 2.0, 4.0, 8.0],
        "a_sbart": [0.5, 0.6, 0.7],
        "eps_sbart": [0.0, 0.01, 0.05],
    }
    result = regime_sweep(SweepSpec(base=BoundParams(eps_st=0.05), axes=axes))
    fractions = []
    for n in ns:
        at_n = [r for r in result.counted() if r.point["n"] == n]
        fractions.append(sum(r.holds for r in at_n) / len(at_n))
    assert fractions == sorted(fractions)
    assert fractions[0] < fractions[-1]

    rng = np.random.default_rng(5)
    for _ in range(1000):
        a_st = float(rng.uniform(0.5, 0.7))
        p = BoundParams(
            C_s=float(rng.uniform(0.1, 5.0)), C_sbar=float(rng.uniform(0.1, 5.0)),
            a_st=a_st, a_sbart=float(rng.uniform(a_st, 0.7)),
            eps_st=0.05, eps_sbart=float(rng.uniform(0.0, 0.05)),
        )
        flags = [ckd_wins(p.with_values(n=n)).holds for n in ns]
        assert flags == sorted(flags)
