"""Smoke test for the pyrulesim extension. Run directly or under pytest."""

import pyrulesim as rs


def test_catalog_and_parse():
    names = rs.list_scenarios()
    assert len(names) == 14
    s = rs.Scenario.builtin("eq1-detector")
    again = rs.Scenario.parse(s.format())
    assert again.components == s.components
    codes = {d["code"] for d in s.validate()}
    assert "rule-4" in codes


def test_parse_error_is_value_error():
    try:
        rs.Scenario.parse("scenario x\ncomponent a weight banana env e\n")
    except ValueError as e:
        assert "2:20" in str(e)
    else:
        raise AssertionError("expected ValueError")


def test_regimes_agree():
    s = rs.Scenario.builtin("eq5-terminal-observer")
    a = rs.enumerate(s, rs.RuleSet("observer"), slices=32)
    b = rs.enumerate(s, rs.RuleSet("objective"), slices=32)
    assert abs(a.total() - 1.0) < 1e-12
    verdict = rs.compare(a, b)
    assert verdict["equal"] and verdict["total_variation"] < 1e-9
    probs = dict(a.probabilities())
    assert sorted(round(p, 12) for p in probs.values()) == [0.3, 0.7]


def test_monte_carlo_and_mutant():
    s = rs.Scenario.builtin("outside-terminal-observer")
    good = rs.run_trials(s, rs.RuleSet("observer"), 2000, seed=1)
    bad = rs.run_trials(s, rs.RuleSet("objective", rule4=False), 2000, seed=2)
    assert good.samples == 2000
    assert not rs.compare(good, bad, mode="mc")["equal"]
    assert good.to_csv().startswith("record,probability")


def test_nondemolition():
    for regime in ("observer", "objective"):
        rec = rs.run_nondemolition(rs.RuleSet(regime), seed=7)
        assert rec["final_labels"] == ["J2=0|D_11"]
    stages = rs.nondemolition_stages()
    assert [st["stage"] for st in stages] == ["prepare", "O", "A", "B", "P"]
    assert rs.eligibility() == {"O": True, "A": False, "B": False, "P": True}


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
