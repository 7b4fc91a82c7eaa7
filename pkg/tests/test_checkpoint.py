import json

import pytest

from dsmsim.checkpoint import (
    CheckpointCostReport,
    CheckpointManager,
    CheckpointRecord,
    cost_report,
    load_record,
    save_record,
)
from dsmsim.engines import EngineKind
from dsmsim.errors import CheckpointFormatError, MarkerAuditError
from dsmsim.simulation import Simulation
from dsmsim.types import Message, ReplicaState, parse_op

from helpers import of_kind, run_events, scenario

MODELS = ["lin", "sc", "causal+", "eventual"]


def complete_records(events):
    return [e["record"] for e in of_kind(events, "checkpoint_complete")]


def incremental_indices(record):
    return [[w["index"] for w in lst] for lst in record["incrementals"]]


def oracle_incremental_count(events, epoch):
    """Own writes issued by each j at marker delivery minus what the initiator had applied."""
    start = next(e for e in of_kind(events, "checkpoint_start") if e["epoch"] == epoch)
    v_init = start["vts"]
    total = 0
    for e in of_kind(events, "marker"):
        if e["epoch"] == epoch and e["node"] != start["node"]:
            total += e["vts"][e["node"]] - v_init[e["node"]]
    return total


@pytest.mark.parametrize("model", MODELS)
def test_quiescent_checkpoint_records_next_ops(model):
    programs = [["W X 1", "R X"], ["W Y 2"], ["R Y", "R X", "W X 3"]]
    ev = run_events(scenario(model, programs, seed=3, checkpoint_at=[10_000]))
    (rec,) = complete_records(ev)
    assert [c["pc"] for c in rec["clients"]] == [2, 1, 3]
    assert incremental_indices(rec) == [[], [], []]
    cost = of_kind(ev, "checkpoint_complete")[0]["cost"]
    state_bytes = len(json.dumps(rec["initiator_state"], sort_keys=True, separators=(",", ":")))
    assert cost == {"full_replica_states_recorded": 1, "incremental_update_count": 0, "bytes_estimate": state_bytes}


def test_lin_in_flight_write_excluded_and_pc_names_it():
    sc = scenario("lin", [[], ["W X 1", "R X"]], seed=1, checkpoint_at=[3], link_latency={"1->0": 20})
    ev = run_events(sc)
    (rec,) = complete_records(ev)
    assert rec["initiator_state"]["vars"] == {}
    assert rec["clients"][1]["pc"] == 0
    # The write did complete later in the run.
    assert of_kind(ev, "final")[0]["states"][0]["vars"]["X"][0] == 1


@pytest.mark.parametrize("model", ["lin", "sc"])
def test_total_order_models_record_only_initiator_state(model):
    for seed in range(10):
        sc = scenario(model, [["W X 1", "W Y 2"], ["W X 3", "R Y"], ["R X"]], seed=seed, checkpoint_at=[4])
        for rec in complete_records(run_events(sc)):
            assert incremental_indices(rec) == [[], [], []]
            assert rec["initiator_state"] is not None


def test_causal_incrementals_are_writes_after_initiator_view():
    sc = scenario("causal+", [[], ["W X 1", "W X 2", "W X 3"]], seed=1, checkpoint_at=[9], link_latency={"1->0": 10})
    ev = run_events(sc)
    assert of_kind(ev, "checkpoint_start")[0]["vts"] == [0, 1]
    (rec,) = complete_records(ev)
    assert incremental_indices(rec) == [[], [2, 3]]
    assert [w["value"] for w in rec["incrementals"][1]] == [2, 3]


def test_causal_five_unpropagated_writes():
    programs = [[], ["W X 1", "W X 2", "W Y 3"], ["W Y 4", "W X 5"]]
    sc = scenario("causal+", programs, seed=1, checkpoint_at=[18], link_latency={"1->0": 30, "2->0": 30})
    ev = run_events(sc)
    cost = of_kind(ev, "checkpoint_complete")[0]["cost"]
    assert cost["full_replica_states_recorded"] == 1
    assert cost["incremental_update_count"] == 5 == oracle_incremental_count(ev, 1)


@pytest.mark.parametrize("model", ["causal+", "eventual"])
def test_incremental_count_matches_vector_oracle(model):
    for seed in range(30):
        programs = [["W X 1", "W Y 2"], ["W X 3", "R Y", "W Y 4"], ["W X 5", "W X 6"]]
        ev = run_events(scenario(model, programs, seed=seed, checkpoint_at=[2 + seed % 9]))
        for e in of_kind(ev, "checkpoint_complete"):
            assert e["cost"]["incremental_update_count"] == oracle_incremental_count(ev, e["epoch"])


def test_causal_caught_up_replica_records_empty_list():
    ev = run_events(scenario("causal+", [["W X 1"], ["W Y 2"]], seed=0, checkpoint_at=[10_000]))
    start = of_kind(ev, "checkpoint_start")[0]
    assert start["vts"] == [1, 1]
    assert incremental_indices(complete_records(ev)[0]) == [[], []]


def test_eventual_duplicate_marker_recorded_once():
    programs = [["W X 1"], ["W X 2", "W Y 1"], ["W Y 3"]]
    ev = run_events(scenario("eventual", programs, seed=4, checkpoint_at=[3]))
    dups = of_kind(ev, "marker_duplicate")
    assert {e["node"] for e in dups} >= {1, 2}
    for node in (1, 2):
        assert len([e for e in of_kind(ev, "marker") if e["node"] == node]) == 1
    (rec,) = complete_records(ev)
    assert oracle_incremental_count(ev, 1) == sum(map(len, rec["incrementals"]))


def _marker_fixture(program, pc=0):
    sim = Simulation(scenario("lin", [program]))
    client = sim.clients[0]
    client.state.pc = pc
    return sim, client, Message("marker", 0, {"epoch": 1})


def test_idle_client_records_next_op():
    sim, client, marker = _marker_fixture(["R X"] * 6, pc=5)
    assert sim.checkpoints.client_on_marker(client, marker)[1] == 5


def test_waiting_client_records_incomplete_op():
    sim, client, marker = _marker_fixture(["R X"] * 6, pc=5)
    client.awaiting = client.program[5]
    assert sim.checkpoints.client_on_marker(client, marker)[1] == 5


def test_client_mid_local_computation_finishes_first():
    sim, client, marker = _marker_fixture(["L 4", "R X"])
    client.in_local = client.program[0]
    local_state, pc = sim.checkpoints.client_on_marker(client, marker)
    assert pc == 1 and local_state["ops_done"] == 1 and local_state["last_response"] == 4
    assert client.in_local is None


def test_overlapping_checkpoint_rejected():
    ev = run_events(scenario("lin", [["W X 1", "W X 2"], ["R X"]], seed=1, checkpoint_at=[2, 3]))
    assert len(of_kind(ev, "checkpoint_rejected")) == 1
    assert [e["epoch"] for e in of_kind(ev, "checkpoint_complete")] == [1]


def test_crash_after_n_minus_one_reports_targets_prior_epoch(monkeypatch):
    sc = scenario("lin", [["W X 1", "W X 2", "W X 3"], ["W Y 1", "R X", "W Y 2"], ["R Y"]], seed=7, checkpoint_at=[3, 45])
    seen = {}
    original = CheckpointManager.on_checkpoint_done

    def spy(self, replica, msg):
        original(self, replica, msg)
        if self.current is not None and self.current.epoch == 2 and len(self._reported) == self.n - 1:
            seen.setdefault("events", self.sim.events_processed)

    monkeypatch.setattr(CheckpointManager, "on_checkpoint_done", spy)
    dry = run_events(sc)
    assert "events" in seen
    monkeypatch.undo()

    first = complete_records(dry)[0]
    ev = run_events(sc.with_(crash_at=seen["events"]))
    crash = of_kind(ev, "crash")[0]
    assert crash["target_epoch"] == 1 and crash["discarded_epoch"] == 2
    rollback = of_kind(ev, "rollback")[0]
    assert all(s == first["initiator_state"] for s in rollback["states"])
    assert rollback["pcs"] == [c["pc"] for c in first["clients"]]
    # Epoch numbering resumes after the restored checkpoint.
    assert of_kind(ev, "checkpoint_complete")[0]["epoch"] == 1


def test_rollback_without_checkpoint_restores_initial_state():
    ev = run_events(scenario("causal+", [["W X 1", "W X 2"], ["W Y 3"]], seed=2, crash_at=6))
    rb = of_kind(ev, "rollback")[0]
    assert rb["epoch"] == 0 and rb["pcs"] == [0, 0]
    assert all(s == {"vars": {}, "vts": [0, 0], "lamport": 0} for s in rb["states"])


def test_lin_rollback_with_no_later_ops_restores_checkpoint_instant():
    sc = scenario("lin", [["W X 1"], ["W Y 2"]], seed=1, checkpoint_at=[10_000], crash_at=10_001)
    ev = run_events(sc)
    rec = complete_records(ev)[0]
    rb = of_kind(ev, "rollback")[0]
    assert all(s == rec["initiator_state"] for s in rb["states"])
    assert of_kind(ev, "final")[0]["states"] == rb["states"]


def test_op_completed_after_checkpoint_is_undone_then_redone():
    sc = scenario("lin", [[], ["W X 1", "R X"]], seed=1, checkpoint_at=[3], crash_at=20, link_latency={"1->0": 20})
    ev = run_events(sc)
    rb = of_kind(ev, "rollback")[0]
    assert rb["pcs"] == [0, 0]
    assert all(s["vars"] == {} for s in rb["states"])
    after = [e for e in of_kind(ev, "respond") if e["seq"] > rb["seq"]]
    assert [(e["client"], e["op"]) for e in after] == [(1, 0), (1, 1)]


def test_causal_rollback_replays_incrementals_everywhere():
    sc = scenario("causal+", [[], ["W X 1", "W X 2", "W X 3"]], seed=1, checkpoint_at=[9], crash_at=40, link_latency={"1->0": 10})
    ev = run_events(sc)
    rb = of_kind(ev, "rollback")[0]
    assert rb["epoch"] == 1
    assert rb["states"][0] == rb["states"][1]
    assert rb["states"][0]["vars"]["X"][0] == 3
    assert rb["states"][0]["vts"] == [0, 3]


def test_fifo_marker_trips_causal_audit():
    programs = [[], ["W X 1", "W X 2", "W X 3"], []]
    sc = scenario("causal+", programs, seed=1, checkpoint_at=[6], link_latency={"1->2": 30, "0->2": 1})
    run_events(sc)
    with pytest.raises(MarkerAuditError):
        run_events(sc, marker_transport="fifo")


def test_record_round_trip(tmp_path):
    sc = scenario("causal+", [[], ["W X 1", "W X 2", "W X 3"]], seed=1, checkpoint_at=[9], link_latency={"1->0": 10})
    data = complete_records(run_events(sc))[0]
    rec = CheckpointRecord.from_json(data)
    path = tmp_path / "ckpt.json"
    save_record(rec, path)
    again = load_record(path)
    assert again.to_json() == data
    assert cost_report(again) == CheckpointCostReport(**of_kind(run_events(sc), "checkpoint_complete")[0]["cost"])


@pytest.mark.parametrize(
    "text",
    ['{"format": "other"}', '{"format": "dsmsim-checkpoint", "version": 99}', '{"format": "dsmsim-checkpoint", "version": 1}', "{not json"],
)
def test_bad_checkpoint_files(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(CheckpointFormatError):
        load_record(path)


def test_incomplete_record_guards():
    sim = Simulation(scenario("lin", [["W X 1"], []]))
    mgr = sim.checkpoints
    mgr.initiate_checkpoint(0)
    with pytest.raises(ValueError):
        mgr.mark_complete(1)
    with pytest.raises(ValueError):
        mgr.rollback(CheckpointRecord(5, 0, EngineKind.LINEARIZABLE, 2, ReplicaState(2)))
    with pytest.raises(ValueError):
        cost_report(CheckpointRecord(5, 0, EngineKind.LINEARIZABLE, 2, ReplicaState(2)))


def test_initial_record_is_complete_epoch_zero():
    rec = CheckpointRecord.initial(EngineKind.EVENTUAL, 3)
    assert rec.complete and rec.epoch == 0
    assert [pc for _, pc in rec.clients] == [0, 0, 0]
    assert cost_report(rec).incremental_update_count == 0
