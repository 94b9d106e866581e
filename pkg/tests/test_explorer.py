import pytest
from dataclasses import replace

from bftlab.checkers import run_checkers
from bftlab.explorer import (
    ExploreConfig,
    ExplorerError,
    explore,
    export_counterexample,
    validate_config,
)
from bftlab.netsim import run_scenario
from bftlab.scenarios import loads

PFAB_SMALL = ExploreConfig(protocol="pfab", f=1, t=0, values=("A", "B"), max_views=2,
                           menu=("equivocate", "withhold"))


def test_config_validation():
    with pytest.raises(ExplorerError, match="unknown protocol"):
        validate_config(replace(PFAB_SMALL, protocol="raft"))
    with pytest.raises(ExplorerError, match="exactly one Byzantine"):
        validate_config(replace(PFAB_SMALL, byzantine=(0, 1)))
    with pytest.raises(ExplorerError, match="menu"):
        validate_config(replace(PFAB_SMALL, menu=("bribe",)))
    with pytest.raises(ExplorerError, match="value domain"):
        validate_config(replace(PFAB_SMALL, values=()))
    with pytest.raises(ExplorerError, match="client requests"):
        validate_config(ExploreConfig(protocol="zyzzyva"))
    with pytest.raises(ExplorerError, match="positive"):
        validate_config(replace(PFAB_SMALL, max_views=0))


def test_pfab_two_values_get_stuck():
    res = explore(PFAB_SMALL)
    assert res.stats["found"] and not res.stats["budget_exhausted"]
    ce = res.counterexample
    assert ce.verdict.property == "stuck" and ce.verdict.status == "occurred"
    # the exported scenario is a valid, canonical scenario document
    sc = export_counterexample(ce)
    assert loads(sc.to_json()).to_json() == sc.to_json()
    # replaying it independently reproduces the verdict
    verdicts = run_checkers(run_scenario(sc).records, ["stuck"])
    assert verdicts[0].status == "occurred"


def test_pfab_single_value_cannot_get_stuck():
    res = explore(ExploreConfig(protocol="pfab", values=("A",), max_views=2))
    assert res.counterexample is None and not res.stats["budget_exhausted"]


def test_dedup_changes_statistics_not_outcomes():
    # exhaustion case
    base = ExploreConfig(protocol="fab5", values=("A",), max_views=2)
    on, off = explore(base), explore(replace(base, dedup=False))
    assert on.counterexample is None and off.counterexample is None
    assert off.stats["states"] > on.stats["states"]
    # found case
    on, off = explore(PFAB_SMALL), explore(replace(PFAB_SMALL, dedup=False))
    assert on.counterexample.scenario.script == off.counterexample.scenario.script


def test_exploration_is_deterministic():
    a, b = explore(PFAB_SMALL), explore(PFAB_SMALL)
    assert a.stats["states"] == b.stats["states"]
    assert a.counterexample.scenario.to_json() == b.counterexample.scenario.to_json()


def test_parallel_search_matches_sequential():
    seq = explore(PFAB_SMALL)
    par = explore(PFAB_SMALL, parallel=2)
    assert par.counterexample.scenario.script == seq.counterexample.scenario.script


def test_budget_exhaustion_reports_no_counterexample():
    res = explore(replace(PFAB_SMALL, max_states=50))
    assert res.counterexample is None and res.stats["budget_exhausted"]
