import pytest

from bftlab.checkers import run_checkers
from bftlab.netsim import SimError, Simulation, Trace, run_scenario
from bftlab.scenarios import Scenario, get_builtin, validate


def _bare(protocol="zyzzyva", **kw):
    base = dict(name="t", protocol=protocol, f=1, t=0, byzantine=[],
                clients=[{"id": 1, "op": "a"}], inputs={}, script=[], expected=[])
    base.update(kw)
    return validate(Scenario(**base))


def test_traces_are_byte_identical_across_runs():
    sc = get_builtin("zyzzyva-cc-priority")
    a = run_scenario(sc).to_jsonl()
    b = run_scenario(sc).to_jsonl()
    assert a == b


def test_trace_round_trips_through_jsonl():
    trace = run_scenario(get_builtin("pfab-stuck"))
    assert Trace.parse(trace.to_jsonl()) == trace.records


def test_deliver_unmatched_pattern_is_an_error():
    sc = _bare(script=[{"do": "deliver", "match": {"type": "order_req"}}])
    with pytest.raises(SimError, match="matched nothing"):
        run_scenario(sc)


def test_drop_unmatched_pattern_is_a_noop():
    sc = _bare(script=[{"do": "drop", "match": {"type": "order_req"}}])
    trace = run_scenario(sc)
    assert trace.records[-1]["kind"] == "drop" and trace.records[-1]["mids"] == []


def test_unknown_pattern_field_rejected():
    sc = _bare(script=[
        {"do": "client_request", "client": 1, "to": "r0"},
        {"do": "deliver", "match": {"sender": "c1"}},
    ])
    with pytest.raises(SimError, match="unknown pattern fields"):
        run_scenario(sc)


def test_empty_script_produces_header_only_trace():
    trace = run_scenario(_bare())
    assert len(trace.records) == 1
    assert trace.records[0]["kind"] == "scenario"


def test_adversary_requires_byzantine_actor():
    sc = _bare(script=[{"do": "adversary", "actor": 1,
                        "action": {"kind": "spec_response", "view": 1, "log": ["a"], "to": "c1"}}],
               byzantine=[0])
    with pytest.raises(SimError, match="not Byzantine"):
        run_scenario(sc)


def test_adversary_cannot_fabricate_unobserved_requests():
    # op "a" was never delivered to the byzantine node, so no stored artifact
    sc = _bare(byzantine=[0], script=[
        {"do": "adversary", "actor": 0,
         "action": {"kind": "order_req", "view": 1, "sends": [{"to": "r1", "log": ["a"]}]}},
    ])
    with pytest.raises(SimError, match="stored requests"):
        run_scenario(sc)


def test_view_change_signal_rejects_byzantine_targets():
    sc = _bare(byzantine=[0], script=[{"do": "view_change", "view": 2, "nodes": ["r0"]}])
    with pytest.raises(SimError, match="correct replicas"):
        run_scenario(sc)


def test_ordinals_distinguish_repeated_sends():
    sc = get_builtin("zyzzyva-longest-cc")
    trace = run_scenario(sc)
    reqs = [
        m
        for r in trace.records[1:]
        for m in r.get("emitted") or []
        if m["type"] == "order_req" and m["dst"] == "r1"
    ]
    assert [m["body"]["log"] for m in reqs] == [["a1"], ["a1", "a2"]]


def test_delivered_tokens_always_verify():
    # runtime authentication assertion: a hand-built bad message cannot pass
    sc = _bare(script=[{"do": "client_request", "client": 1, "to": "r0"}])
    sim = Simulation(sc)
    sim.run_script()
    entry = sim.pool[0]
    object.__setattr__(entry.msg.token, "value", "0" * 64)
    with pytest.raises(SimError, match="token verification"):
        sim._deliver_entry(entry)


def test_omniscient_commits_fire_on_sends_not_deliveries():
    # responses are emitted but never delivered to the client; the quorum of
    # sent prepares still commits the request
    sc = _bare(script=[
        {"do": "client_request", "client": 1, "to": "r0"},
        {"do": "deliver", "match": {"type": "request"}},
        {"do": "deliver", "match": {"type": "order_req"}},
    ])
    trace = run_scenario(sc)
    commits = [c for r in trace.records for c in r.get("commits") or []]
    assert [c["by"] for c in commits] == ["quorum"]
    verdicts = run_checkers(trace.records, ["agreement", "validity"])
    assert all(v.status == "holds" for v in verdicts)


def test_delay_all_except_freezes_everything_else():
    sc = _bare(script=[
        {"do": "client_request", "client": 1, "to": "r0"},
        {"do": "delay_all_except"},
        {"do": "drop", "match": {}},
    ])
    trace = run_scenario(sc)
    delay = [r for r in trace.records if r["kind"] == "delay"][0]
    assert delay["mids"] == [1]
    drop = [r for r in trace.records if r["kind"] == "drop"][0]
    assert drop["mids"] == []  # already delayed, nothing pending


def test_correct_replicas_prepare_once_per_view():
    # trace assertion: one accepted value per (correct replica, view)
    for name in ("pfab-benign", "pfab-stuck", "fab5-benign"):
        records = run_scenario(get_builtin(name)).records
        byz = set(records[0]["byzantine"])
        seen = {}
        for rec in records[1:]:
            for m in rec.get("emitted") or []:
                if m["type"] != "accepted" or m["src"] in byz:
                    continue
                key = (m["src"], m["view"])
                value = m["body"]["value"]
                assert seen.setdefault(key, value) == value, name


def test_agreement_witnesses_suffice_to_rederive_the_verdict():
    records = run_scenario(get_builtin("zyzzyva-cc-priority")).records
    verdict = run_checkers(records, ["agreement"])[0]
    assert verdict.status == "violated"
    witnessed = [records[0]] + [r for r in records if r["seq"] in verdict.witnesses]
    again = run_checkers(witnessed, ["agreement"])[0]
    assert again.status == "violated"
    assert again.details["positions"] == verdict.details["positions"]


def test_withhold_drops_only_the_actors_messages():
    sc = validate(Scenario(
        name="withhold", protocol="zyzzyva", f=1, byzantine=[0],
        clients=[{"id": 1, "op": "a"}],
        script=[
            {"do": "client_request", "client": 1, "to": "r0"},
            {"do": "deliver", "match": {"type": "request"}},
            {"do": "adversary", "actor": 0,
             "action": {"kind": "order_req", "view": 1,
                        "sends": [{"to": "r1", "log": ["a"]}, {"to": "r2", "log": ["a"]}]}},
            {"do": "adversary", "actor": 0,
             "action": {"kind": "withhold", "match": {"dst": "r2"}}},
            {"do": "deliver", "match": {"type": "order_req"}},
        ],
    ))
    trace = run_scenario(sc)
    delivered = [r["node"] for r in trace.records if r["kind"] == "deliver"
                 and r["msg"]["type"] == "order_req"]
    assert delivered == ["r1"]


def test_delay_all_except_pattern_spares_matches():
    sc = _bare(clients=[{"id": 1, "op": "a"}, {"id": 2, "op": "b"}], script=[
        {"do": "client_request", "client": 1, "to": "r0"},
        {"do": "client_request", "client": 2, "to": "r0"},
        {"do": "delay_all_except", "match": {"src": "c1"}},
        {"do": "deliver", "match": {"type": "request"}},
    ])
    trace = run_scenario(sc)
    delivered = [r for r in trace.records if r["kind"] == "deliver"]
    assert len(delivered) == 1 and delivered[0]["msg"]["src"] == "c1"
