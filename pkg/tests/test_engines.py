import pytest

from dsmsim.checkers import History, audit_apply_log, check_convergence, check_linearizable, check_sequential
from dsmsim.engines import EngineKind
from dsmsim.errors import ProtocolViolation
from dsmsim.scenario import parse_op
from dsmsim.simulation import Simulation
from dsmsim.types import Message, TaggedValue, UpdateTag

from helpers import of_kind, run_events, scenario


def responses(events, client):
    return [(e["op"], e["value"]) for e in of_kind(events, "respond") if e["client"] == client]


def final_values(events):
    return [{k: v[0] for k, v in s["vars"].items()} for s in of_kind(events, "final")[0]["states"]]


def test_engine_kind_parse():
    assert EngineKind.parse("causal+") is EngineKind.CAUSAL_PLUS
    with pytest.raises(ValueError, match="'lin', 'sc', 'causal\\+', 'eventual'"):
        EngineKind.parse("strong")


@pytest.mark.parametrize("model", ["lin", "sc", "causal+", "eventual"])
def test_single_node_write_then_read(model):
    ev = run_events(scenario(model, [["W X 3", "R X"]], seed=1))
    assert responses(ev, 0) == [(0, None), (1, 3)]


def test_lin_read_after_completed_remote_write_sees_it():
    checked = 0
    for seed in range(40):
        ev = run_events(scenario("lin", [["W X 1"], ["L 0", "L 0", "R X"]], seed=seed))
        done = next(e["t"] for e in of_kind(ev, "respond") if e["client"] == 0)
        read = next(e for e in of_kind(ev, "invoke") if e["client"] == 1 and e["kind"] == "R")
        if read["t"] > done:
            checked += 1
            assert responses(ev, 1)[-1] == (2, 1)
            assert check_linearizable(History.from_trace(ev)).ok
    assert checked > 0


def test_lin_remote_read_delivery_leaves_state_alone():
    sim = Simulation(scenario("lin", [[], [], []]))
    before = sim.replicas[2].state.copy()
    sim.replicas[2].on_read(Message("read", 0, {"var": "X", "op": 0, "origin": 0}))
    assert sim.replicas[2].state == before
    assert len(sim.queue) == 0


def test_sc_fresh_read_returns_initial_value():
    assert responses(run_events(scenario("sc", [["R X"]])), 0) == [(0, 0)]


def test_sc_stale_read_is_sequential_but_not_linearizable():
    # Replica 0 is the sequencer, so its own write applies at once; replica 1 hears late.
    sc = scenario("sc", [["W X 1"], ["L 0", "L 0", "L 0", "R X"]], seed=2, link_latency={"0->1": 40})
    ev = run_events(sc)
    w_done = next(e["t"] for e in of_kind(ev, "respond") if e["client"] == 0)
    read = next(e for e in of_kind(ev, "invoke") if e["client"] == 1 and e["kind"] == "R")
    assert read["t"] > w_done
    assert responses(ev, 1)[-1] == (3, 0)
    h = History.from_trace(ev)
    assert check_sequential(h).ok
    assert not check_linearizable(h).ok


def test_sc_single_writer_reads_own_write():
    for seed in range(10):
        ev = run_events(scenario("sc", [["W X 1", "R X"], ["R X", "R X"]], seed=seed))
        assert responses(ev, 0)[1] == (1, 1)


@pytest.mark.parametrize("model", ["causal+", "eventual"])
def test_single_writer_converges_to_last_value(model):
    for seed in range(10):
        ev = run_events(scenario(model, [["W X 1", "W X 2", "W X 3"], ["R X"], ["R X"]], seed=seed))
        assert final_values(ev) == [{"X": 3}] * 3


def test_causal_concurrent_writes_resolve_to_higher_tag():
    concurrent = 0
    for seed in range(20):
        ev = run_events(scenario("causal+", [["W X 1"], ["W X 2"]], seed=seed))
        tags = {e["client"]: e["tag"] for e in of_kind(ev, "respond")}
        if tags == {0: [1, 0], 1: [1, 1]}:
            concurrent += 1
            assert final_values(ev) == [{"X": 2}, {"X": 2}]
    assert concurrent > 0


def _read_then_write(model, seed):
    # Client 1 reads X then writes Y; the direct 0->2 link is slow.
    programs = [["W X 1"], ["L 0", "L 0", "R X", "W Y 7"], []]
    return run_events(scenario(model, programs, seed=seed, link_latency={"0->2": 40}))


def _y_before_x(events, node):
    x = 0
    for e in of_kind(events, "apply"):
        if e["node"] != node or not e["stored"]:
            continue
        if e["var"] == "X":
            x = e["value"]
        elif e["value"] == 7 and x != 1:
            return True
    return False


def test_causal_chain_respected_under_causal_plus():
    chains = 0
    for seed in range(20):
        ev = _read_then_write("causal+", seed)
        if responses(ev, 1)[2] == (2, 1):
            chains += 1
            assert not any(_y_before_x(ev, node) for node in range(3))
            assert audit_apply_log(ev) == []
    assert chains > 0


def test_causal_chain_may_break_under_eventual():
    broken = 0
    for seed in range(20):
        ev = _read_then_write("eventual", seed)
        if responses(ev, 1)[2] == (2, 1) and _y_before_x(ev, 2):
            broken += 1
            assert audit_apply_log(ev, causal=True)
            assert audit_apply_log(ev, causal=False) == []
            assert check_convergence(of_kind(ev, "final")[0]["states"]).ok
    assert broken > 0


def test_eventual_transient_disagreement_then_convergence():
    disagreed = 0
    for seed in range(30):
        ev = run_events(scenario("eventual", [["W X 1", "W X 3"], ["W X 2", "W X 4"], ["R X"]], seed=seed))
        seen = [0, 0, 0]
        for e in of_kind(ev, "apply"):
            if e["stored"]:
                seen[e["node"]] = e["value"]
            if len(set(seen)) > 1 and 0 not in seen:
                disagreed += 1
                break
        assert check_convergence(of_kind(ev, "final")[0]["states"]).ok
    assert disagreed > 0


def test_own_write_losing_tag_is_still_acked():
    sim = Simulation(scenario("causal+", [["W X 1"], []]))
    rep = sim.replicas[0]
    rep.state.vars["X"] = TaggedValue(9, (0, 1), UpdateTag(9, 1))
    msg = Message("write", 0, {"var": "X", "value": 1, "op": 0, "origin": 0, "vts": (1, 0), "tag": UpdateTag(1, 0), "index": 1})
    rep.on_write(msg)
    assert rep.state.read("X").value == 9
    assert len(sim.queue) == 1  # the ack to the client
    assert sim.queue.pop().action[4][0].kind == "ack"


def test_empty_program_finishes_immediately():
    ev = run_events(scenario("lin", [[], ["W X 1"]]))
    assert of_kind(ev, "final")[0]["clients"][0]["pc"] == 0
    assert responses(ev, 0) == []


@pytest.mark.parametrize("model", ["lin", "sc", "causal+", "eventual"])
def test_three_op_program_gets_three_acks(model):
    ev = run_events(scenario(model, [["W X 1", "R X", "W Y 2"], ["R Y"]], seed=5))
    assert [op for op, _ in responses(ev, 0)] == [0, 1, 2]
    assert of_kind(ev, "final")[0]["clients"][0]["pc"] == 3


def test_ack_for_non_pending_op_is_protocol_violation():
    sim = Simulation(scenario("lin", [["W X 1"]]))
    with pytest.raises(ProtocolViolation):
        sim.clients[0].on_ack(Message("ack", 0, {"op": 3}))


def test_second_request_while_incomplete_is_protocol_violation():
    sim = Simulation(scenario("lin", [["W X 1", "W X 2"]]))
    rep = sim.replicas[0]
    rep.receive(Message("client_request", 0, {"op": parse_op("W X 1", 0)}))
    with pytest.raises(ProtocolViolation):
        rep.receive(Message("client_request", 0, {"op": parse_op("W X 2", 1)}))


def test_total_order_tags_agree_across_replicas():
    ev = run_events(scenario("lin", [["W X 1", "W Y 2"], ["W X 3"], ["W Y 4"]], seed=8))
    logs = {}
    for e in of_kind(ev, "apply"):
        logs.setdefault(e["node"], []).append((e["origin"], e["index"], tuple(e["tag"])))
    assert len({tuple(v) for v in logs.values()}) == 1


def test_causal_stored_vectors_bounded_by_replica_vector():
    from dsmsim.scenario import generate_scenario
    from dsmsim.types import ReplicaState, vts_leq

    for seed in range(30):
        ev = run_events(generate_scenario(EngineKind.CAUSAL_PLUS, 4, seed))
        for s in of_kind(ev, "final")[0]["states"]:
            state = ReplicaState.from_json(s)
            assert all(vts_leq(tv.vts, state.vts) for tv in state.vars.values())
