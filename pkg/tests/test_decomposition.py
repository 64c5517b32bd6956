"""Demand families, limit games, and the prediction-versus-measurement loop."""

import math
from fractions import Fraction

import pytest

from poakit import (
    DemandFamily,
    DemandLaw,
    Game,
    Group,
    SolverConfig,
    classify_groups,
    decomposition_prediction,
    limit_game,
    limit_ne,
    load_family,
    ordered_partition,
    scaling_exponent,
    tight_paths,
)

from conftest import poly, two_commodity_game

CFG = SolverConfig()


def two_commodity_family(user_demand=1) -> DemandFamily:
    base = two_commodity_game(Fraction(1), Fraction(1))
    return DemandFamily(base=base, laws={
        "od1": DemandLaw(c=Fraction(2), gamma=1.0, user_demand=Fraction(user_demand)),
        "od2": DemandLaw(c=Fraction(2), gamma=0.5, user_demand=Fraction(user_demand)),
    })


class TestClassification:
    def test_two_commodity_all_regular(self):
        regular, irregular = classify_groups(two_commodity_family())
        assert regular == ["od1", "od2"]
        assert irregular == []

    def test_bounded_group_is_irregular(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        family = DemandFamily(base=base, laws={
            "od1": DemandLaw(c=Fraction(2), gamma=1.0, user_demand=Fraction(1)),
            "od2": DemandLaw(c=Fraction(2), gamma=0.0, user_demand=Fraction(1)),
        })
        regular, irregular = classify_groups(family)
        assert regular == ["od1"]
        assert irregular == ["od2"]

    def test_all_bounded_rejected_by_prediction(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        family = DemandFamily(base=base, laws={
            "od1": DemandLaw(c=Fraction(2), gamma=0.0, user_demand=Fraction(1)),
            "od2": DemandLaw(c=Fraction(2), gamma=0.0, user_demand=Fraction(1)),
        })
        regular, irregular = classify_groups(family)
        assert regular == [] and irregular == ["od1", "od2"]
        with pytest.raises(ValueError):
            decomposition_prediction(family, [10, 100], CFG)


class TestOrderedPartition:
    def test_two_commodity_order(self):
        assert ordered_partition(two_commodity_family()) == [["od1"], ["od2"]]

    def test_equal_rates_share_class(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        family = DemandFamily(base=base, laws={
            "od1": DemandLaw(c=Fraction(2), gamma=1.0, user_demand=Fraction(1)),
            "od2": DemandLaw(c=Fraction(3), gamma=1.0, user_demand=Fraction(1)),
        })
        assert ordered_partition(family) == [["od1", "od2"]]

    def test_three_groups_two_classes(self):
        game = Game({"a": poly(1, 0), "b": poly(1, 0), "c": poly(1, 0)},
                    [Group("g1", (("a",),), (Fraction(1),)),
                     Group("g2", (("b",),), (Fraction(1),)),
                     Group("g3", (("c",),), (Fraction(1),))])
        family = DemandFamily(base=game, laws={
            "g1": DemandLaw(c=Fraction(1), gamma=2.0, user_demand=Fraction(1)),
            "g2": DemandLaw(c=Fraction(1), gamma=2.0, user_demand=Fraction(1)),
            "g3": DemandLaw(c=Fraction(1), gamma=1.0, user_demand=Fraction(1)),
        })
        assert ordered_partition(family) == [["g1", "g2"], ["g3"]]


class TestScalingExponent:
    def test_linear_class(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        assert scaling_exponent(base, ["od1"]) == 1

    def test_cubic_class(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        assert scaling_exponent(base, ["od2"]) == 3

    def test_constant_cheapest_path(self):
        game = Game({"a": poly(2), "b": poly(1, 0, 0)},
                    [Group("g", (("a",), ("b",)), (Fraction(1),))])
        assert scaling_exponent(game, ["g"]) == 0

    def test_monotone_under_degree_increase(self):
        lo = Game({"a": poly(1, 0), "b": poly(1, 0)},
                  [Group("g", (("a",), ("b",)), (Fraction(1),))])
        hi = Game({"a": poly(1, 0, 0), "b": poly(1, 0, 0, 0)},
                  [Group("g", (("a",), ("b",)), (Fraction(1),))])
        assert scaling_exponent(hi, ["g"]) >= scaling_exponent(lo, ["g"])


class TestTightPaths:
    def test_cubic_class_both_tight(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        labels = tight_paths(base, ["od2"], 3)
        assert labels["od2"] == (True, True)

    def test_steeper_path_not_tight(self):
        game = Game({"b1": poly(1, 0, 0, 0), "b2": poly(8, 0, 0, 1),
                     "b3": poly(1, 0, 0, 0, 0, 0)},
                    [Group("od2", (("b1",), ("b2",), ("b3",)), (Fraction(1), Fraction(1)))])
        labels = tight_paths(game, ["od2"], scaling_exponent(game, ["od2"]))
        assert labels["od2"] == (True, True, False)

    def test_exponent_definition_guarantees_a_tight_path(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        for gids in (["od1"], ["od2"], ["od1", "od2"]):
            lam = scaling_exponent(base, gids)
            labels = tight_paths(base, gids, lam)  # must not raise
            assert all(any(flags) for flags in labels.values())


class TestLimitGame:
    def test_cubic_class_drops_constant(self):
        family = two_commodity_family()
        lim = limit_game(family.base, ["od2"], 3, family)
        assert lim.arcs["b1"].coefficients == (Fraction(1), Fraction(0), Fraction(0), Fraction(0))
        assert lim.arcs["b2"].coefficients == (Fraction(8), Fraction(0), Fraction(0), Fraction(0))
        assert lim.groups[0].demands == (Fraction(1),)

    def test_linear_class(self):
        family = two_commodity_family()
        lim = limit_game(family.base, ["od1"], 1, family)
        assert lim.arcs["a1"].coefficients == (Fraction(1), Fraction(0))
        assert lim.groups[0].demands == (Fraction(1),)

    def test_lower_degree_arcs_become_free(self):
        game = Game({"a": poly(1, 0), "b": poly(2, 0, 0)},
                    [Group("g", (("a",), ("b",)), (Fraction(1),))])
        family = DemandFamily(base=game, laws={
            "g": DemandLaw(c=Fraction(1), gamma=1.0, user_demand=Fraction(1))})
        lim = limit_game(game, ["g"], 2, family)
        assert lim.arcs["a"].is_zero
        assert lim.arcs["b"].coefficients[0] == 2

    def test_class_demands_normalized(self):
        base = two_commodity_game(Fraction(1), Fraction(1))
        family = DemandFamily(base=base, laws={
            "od1": DemandLaw(c=Fraction(2), gamma=1.0, user_demand=Fraction(1)),
            "od2": DemandLaw(c=Fraction(6), gamma=1.0, user_demand=Fraction(1)),
        })
        lam = scaling_exponent(base, ["od1", "od2"])
        lim = limit_game(base, ["od1", "od2"], lam, family)
        assert [g.demands[0] for g in lim.groups] == [Fraction(1, 4), Fraction(3, 4)]


class TestLimitEquilibrium:
    def test_cubic_limit_split(self):
        family = two_commodity_family()
        lim = limit_game(family.base, ["od2"], 3, family)
        result, cost = limit_ne(lim, CFG)
        flow = [float(v) for v in result.flow.values()]
        assert flow[0] == pytest.approx(2 / 3, abs=1e-8)
        assert flow[1] == pytest.approx(1 / 3, abs=1e-8)
        assert cost == pytest.approx(8 / 27, abs=1e-8)

    def test_linear_limit_even_split(self):
        family = two_commodity_family()
        lim = limit_game(family.base, ["od1"], 1, family)
        result, cost = limit_ne(lim, CFG)
        flow = [float(v) for v in result.flow.values()]
        assert flow == pytest.approx([0.5, 0.5], abs=1e-8)
        assert cost == pytest.approx(0.5, abs=1e-9)

    def test_single_arc_limit(self):
        game = Game({"a": poly(1, 0)}, [Group("g", (("a",),), (Fraction(1),))])
        family = DemandFamily(base=game, laws={
            "g": DemandLaw(c=Fraction(1), gamma=1.0, user_demand=Fraction(1))})
        lim = limit_game(game, ["g"], 1, family)
        result, cost = limit_ne(lim, CFG)
        assert float(result.flow.values()[0]) == pytest.approx(1.0)
        assert cost == pytest.approx(1.0)


class TestPrediction:
    def test_two_commodity_ratios_drift_to_one(self):
        family = two_commodity_family()
        report = decomposition_prediction(family, [100, 1000, 10000], CFG)
        # prediction = 2 n^2 (linear class) + (128/27) n^2 (cubic class)
        for row in report.rows:
            n = row.n
            assert row.predicted == pytest.approx(2 * n**2 + 128 / 27 * n**2, rel=1e-6)
        nonat = [abs(row.nonatomic_ratio - 1) for row in report.rows]
        atomic = [abs(row.atomic_ratio - 1) for row in report.rows]
        assert nonat[0] > nonat[1] > nonat[2]
        # integer granularity makes the atomic drift wiggle, so only the
        # head-to-tail contraction is asserted, not per-step monotonicity
        assert atomic[-1] < atomic[0] / 4
        assert nonat[-1] <= 1e-6
        assert atomic[-1] <= 5e-3
        assert not any(row.atomic_is_lower_bound for row in report.rows)

    def test_total_demand_separation_on_grid(self):
        family = two_commodity_family()
        report = decomposition_prediction(family, [100, 1000, 10000], CFG)
        seps = []
        for row in report.rows:
            t1 = 2.0 * row.n
            t2 = 2.0 * math.sqrt(row.n)
            seps.append(t2 / t1)
        assert seps[0] > seps[1] > seps[2]
        assert seps[-1] <= 0.01 * (1 + 1e-12)

    def test_single_class_family_matches_direct_solve(self):
        game = Game({"a": poly(1, 0), "b": poly(3, 0)},
                    [Group("g", (("a",), ("b",)), (Fraction(1),))])
        family = DemandFamily(base=game, laws={
            "g": DemandLaw(c=Fraction(1), gamma=1.0, user_demand=Fraction(1))})
        report = decomposition_prediction(family, [64, 512], CFG)
        drift = [abs(row.nonatomic_ratio - 1) for row in report.rows]
        assert drift[-1] <= drift[0]
        assert drift[-1] <= 1e-6

    def test_irregular_group_rides_along(self):
        # A bounded-demand group adds O(1) cost that the prediction ignores;
        # the ratio must still drift to 1 as the regular classes dominate.
        game = Game({"a": poly(1, 0), "b": poly(1, 0), "c": poly(2), "d": poly(3)},
                    [Group("grow", (("a",), ("b",)), (Fraction(1),)),
                     Group("flat", (("c",), ("d",)), (Fraction(1),))])
        family = DemandFamily(base=game, laws={
            "grow": DemandLaw(c=Fraction(1), gamma=1.0, user_demand=Fraction(1)),
            "flat": DemandLaw(c=Fraction(3), gamma=0.0, user_demand=Fraction(1)),
        })
        report = decomposition_prediction(family, [10, 100, 1000], CFG)
        assert report.irregular == ["flat"]
        assert [cls.gids for cls in report.classes] == [["grow"]]
        drift = [abs(row.nonatomic_ratio - 1) for row in report.rows]
        assert drift[0] > drift[-1]
        assert drift[-1] <= 2e-2  # the flat group's 3-unit cost over n^2/2

    def test_grid_validation(self):
        family = two_commodity_family()
        with pytest.raises(ValueError):
            decomposition_prediction(family, [100, 100], CFG)
        with pytest.raises(ValueError):
            decomposition_prediction(family, [], CFG)


class TestFamilyDocuments:
    def test_load_family_round_trip(self):
        doc = {
            "arcs": [{"id": "a", "coeffs": [1, 0]}, {"id": "b", "coeffs": [2, 0]}],
            "groups": [{"id": "g", "paths": [["a"], ["b"]], "users": [{"demand": 1}]}],
            "demand_laws": {"g": {"c": 2, "gamma": 1, "user_demand": 1}},
        }
        family = load_family(doc)
        game = family.instantiate(3)
        assert game.total_demand == 6
        assert game.groups[0].n_users == 6

    def test_user_count_law(self):
        doc = {
            "arcs": [{"id": "a", "coeffs": [1, 0]}, {"id": "b", "coeffs": [1, 1]}],
            "groups": [{"id": "g", "paths": [["a"], ["b"]], "users": [{"demand": 1}]}],
            "demand_laws": {"g": {"c": 1, "gamma": 0,
                                  "user_count": {"c": 4, "gamma": 1}}},
        }
        family = load_family(doc)
        game = family.instantiate(5)
        assert game.total_demand == 1
        assert game.groups[0].n_users == 20
        assert game.groups[0].demands[0] == Fraction(1, 20)

    def test_remainder_user(self):
        base = Game({"a": poly(1, 0)}, [Group("g", (("a",),), (Fraction(1),))])
        family = DemandFamily(base=base, laws={
            "g": DemandLaw(c=Fraction(5, 2), gamma=1.0, user_demand=Fraction(1))})
        game = family.instantiate(1)
        assert game.groups[0].demands == (1, 1, Fraction(1, 2))
        assert game.d_max <= 1
