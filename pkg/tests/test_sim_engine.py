import pandas as pd
import pytest

from Step1_Topology_Clustering.clustering import collect_hello
from Step1_Topology_Clustering.core_model import BROADCAST, DataPayload, Message, MessageKind, ROOT_ID, SimConfig
from Step1_Topology_Clustering.radio_energy import RadioConstants, neighbor_matrix, rx_energy, tx_energy
from Step2_Attack_Detection.quarantine import RttEstimate, detain
from Step3_Simulation_Metrics import sim_engine
from Step3_Simulation_Metrics.sim_engine import Clock, Event, EventKind, Outcome, Simulation, run
from tests.conftest import make_thing

RC = RadioConstants()


def _data(src, dst, flood=False):
    return Message(MessageKind.DATA, src, dst, 512, 0.0, DataPayload(flood))


def _pair_sim(**overrides):
    cfg = SimConfig(n_nodes=4, area_width=100.0, area_height=100.0, **overrides)
    things = [make_thing(0, 0, 0), make_thing(1, 10, 0), make_thing(2, 20, 0), make_thing(3, 100, 0)]
    return Simulation(cfg, things=things)


def test_events_order_by_time_then_insertion():
    events = [Event(2.0, 1, EventKind.CBR_TICK), Event(1.0, 3, EventKind.FLOOD_TICK),
              Event(1.0, 2, EventKind.WINDOW_CLOSE)]
    assert [e.seq for e in sorted(events)] == [2, 3, 1]


def test_clock_never_runs_backwards():
    clock = Clock()
    clock.advance(3.0)
    with pytest.raises(RuntimeError):
        clock.advance(2.0)


def test_in_range_hop_charges_both_ends():
    sim = _pair_sim()
    assert sim.deliver(_data(1, 2), (1, 2)) is Outcome.DELIVERED
    assert sim.consumed[1] == pytest.approx(tx_energy(4096, 10.0, RC))
    assert sim.consumed[2] == pytest.approx(rx_energy(4096, RC))


def test_out_of_range_hop_charges_only_the_sender():
    sim = _pair_sim()
    assert sim.deliver(_data(2, 3), (2, 3)) is Outcome.OUT_OF_RANGE
    assert sim.consumed[2] == pytest.approx(tx_energy(4096, 80.0, RC))
    assert sim.consumed[3] == 0.0


def test_dead_ends_are_reported():
    sim = _pair_sim()
    sim.dead.add(1)
    assert sim.deliver(_data(1, 2), (1, 2)) is Outcome.SENDER_DEAD
    assert sim.consumed[1] == 0.0
    assert sim.deliver(_data(2, 1), (2, 1)) is Outcome.RECEIVER_DEAD
    assert sim.consumed[1] == 0.0


def test_receive_capacity_is_enforced_per_second():
    sim = _pair_sim(rx_capacity=2)
    outcomes = [sim.deliver(_data(1, 2), (1, 2)) for _ in range(3)]
    assert outcomes == [Outcome.DELIVERED, Outcome.DELIVERED, Outcome.CONGESTION]
    assert sim.deliver(_data(1, ROOT_ID), (1, ROOT_ID)) is Outcome.DELIVERED


def test_detained_sender_is_rejected_without_rx_cost():
    sim = _pair_sim()
    sim.detention.install(detain(1, 0.0, RttEstimate()))
    assert sim.deliver(_data(1, 2, flood=True), (1, 2)) is Outcome.DETAINED
    assert sim.consumed[2] == 0.0


def test_lossy_channel_drops_everything_at_full_loss():
    sim = _pair_sim(loss_prob=1.0)
    assert sim.deliver(_data(1, 2), (1, 2)) is Outcome.LOST


def test_every_message_is_delivered_or_dropped(tiny_cfg):
    result = run(tiny_cfg.with_overrides(intruder_ratio=0.2))
    for label, t in result.metrics.tallies.items():
        assert t['sent'] == t['delivered'] + t['dropped'], label
    assert result.metrics.tallies['Flood']['sent'] > 0


def test_runs_replay_identically(tiny_cfg):
    cfg = tiny_cfg.with_overrides(intruder_ratio=0.2)
    first, second = run(cfg), run(cfg)
    assert first.trace_csv() == second.trace_csv()
    assert first.detections.equals(second.detections)
    assert first.metrics.to_dict() == second.metrics.to_dict()


def test_quiet_network_delivers_everything():
    cfg = SimConfig(n_nodes=20, area_width=40.0, area_height=40.0, sim_duration=30.0, intruder_ratio=0.0)
    result = run(cfg)
    assert result.metrics.pdr == 100.0
    assert result.metrics.fpr == 0.0
    assert result.metrics.dr is None
    assert result.detentions.empty


def test_baseline_never_detains(tiny_cfg):
    result = run(tiny_cfg.with_overrides(intruder_ratio=0.2, detection_enabled=False))
    assert result.detentions.empty
    assert result.detections.empty
    assert result.metrics.dr == 0.0
    assert result.metrics.fpr == 0.0


def _flood_cluster_things():
    # the thing next to the root leads; thing 3 floods its head
    return [make_thing(0, 50, 50), make_thing(1, 50, 55), make_thing(2, 45, 65),
            make_thing(3, 55, 65, attacker=True)]


FLOOD_CLUSTER = SimConfig(n_nodes=4, area_width=100.0, area_height=100.0, sim_duration=40.0,
                          jitter=0.0, f0=4.0)


def _transitions(result, node):
    rows = result.detentions[result.detentions['accused'] == node]
    return list(zip(rows['time'], rows['transition']))


def test_flooder_is_detained_then_detained_again():
    sim = Simulation(FLOOD_CLUSTER, things=_flood_cluster_things())
    result = sim.run()
    assert sim.dodag.heads == (1,)

    transitions = _transitions(result, 3)
    detained_at = next(t for t, what in transitions if what == 'detained')
    assert 10.0 < detained_at < 20.0
    assert 'redetained' in [what for _, what in transitions]
    assert _transitions(result, 2) == []

    floods = result.trace[(result.trace['kind'] == 'Flood') & (result.trace['src'] == 3)]
    held = floods[(floods['time'] > detained_at) & (floods['time'] < 20.0)]
    assert len(held) > 0
    assert set(held['outcome']) == {'detained'}
    assert (result.metrics.dr, result.metrics.fpr) == (100.0, 0.0)


class QuietAfterDetention(Simulation):
    def _on_flood_tick(self, node):
        if node not in self.detention.ever_detained:
            super()._on_flood_tick(node)


def test_flooder_that_goes_quiet_is_released():
    sim = QuietAfterDetention(FLOOD_CLUSTER, things=_flood_cluster_things())
    result = sim.run()
    transitions = [what for _, what in _transitions(result, 3)]
    assert transitions[0] == 'detained'
    assert 'released' in transitions
    assert 'redetained' not in transitions
    assert 3 not in sim.detention
    assert result.metrics.tallies['Release']['delivered'] >= 1


def test_confusion_counts_cover_every_thing(tiny_cfg):
    cfg = tiny_cfg.with_overrides(intruder_ratio=0.3)
    sim = Simulation(cfg)
    metrics = sim.run().metrics
    c = metrics.confusion
    assert c.tp + c.fn == len(sim.attackers) == cfg.attacker_count
    assert c.fp + c.tn == cfg.n_nodes - 1 - cfg.attacker_count
    if c.attackers:
        assert metrics.dr + metrics.fnr == pytest.approx(100.0)


HOP_OUTCOMES = {'delivered', 'out_of_range', 'lost', 'receiver_dead', 'detained', 'congestion'}


def _rebuilt_energy(sim, trace):
    # tx for every hop that entered the channel, rx only where it was accepted
    cfg, rc = sim.cfg, sim.rc
    dist = neighbor_matrix([t.position for t in sim.things])
    heads = sim.dodag.heads
    sizes = {'Data': cfg.packet_size, 'Flood': cfg.flood_size}
    total = 0.0
    for row in trace.itertuples(index=False):
        bits = 8 * sizes.get(row.kind, cfg.control_size)
        if row.outcome == 'broadcast' and row.kind == 'DIO':
            hearers = int((dist[row.src] <= cfg.tx_range).sum()) - 1
            total += tx_energy(bits, cfg.tx_range, rc) + hearers * rx_energy(bits, rc)
        elif row.outcome == 'broadcast':
            reach = max(float(dist[ROOT_ID, h]) for h in heads)
            total += tx_energy(bits, reach, rc) + len(heads) * rx_energy(bits, rc)
        elif row.outcome in HOP_OUTCOMES and row.dst != BROADCAST:
            total += tx_energy(bits, float(dist[row.src, row.dst]), rc)
            if row.outcome == 'delivered':
                total += rx_energy(bits, rc)
    hello = collect_hello(sim.things, cfg, rc)
    total += sum(hello.debits.values()) + len(hello.entries) * rx_energy(8 * cfg.control_size, rc)
    return total


@pytest.mark.parametrize('engine', [Simulation, QuietAfterDetention])
def test_consumed_energy_matches_the_trace(engine):
    sim = engine(FLOOD_CLUSTER, things=_flood_cluster_things())
    result = sim.run()
    assert sim.dodag.heads == (1,)
    assert not sim.dead and sim.rotations == 0
    assert sim.consumed.sum() == pytest.approx(_rebuilt_energy(sim, result.trace), abs=1e-9)


class BriefFlood(Simulation):
    '''
        floods during the first window of the attack only; the first `lose` warnings
        heading for the root are lost on the way
    '''

    def __init__(self, cfg, things, lose=0):
        super().__init__(cfg, things=things)
        self.lose = lose

    def _on_flood_tick(self, node):
        if self.clock.now < 15.0:
            super()._on_flood_tick(node)

    def deliver(self, msg, hop, origin=None, logical=False):
        if msg.kind is MessageKind.WARNING and hop[1] == ROOT_ID and self.lose:
            self.lose -= 1
            return self._hop_result(msg.kind.value, hop, Outcome.LOST)
        return super().deliver(msg, hop, origin, logical)


def test_lost_warning_is_retried_once_only():
    result = BriefFlood(FLOOD_CLUSTER, _flood_cluster_things(), lose=2).run()
    warnings = result.trace[result.trace['kind'] == 'Warning']
    assert list(warnings['time']) == [15.0, 20.0]
    assert set(warnings['outcome']) == {'lost'}
    assert result.metrics.tallies['Warning'] == {'sent': 2, 'delivered': 0, 'dropped': 2}
    assert result.detentions.empty
    # the head's verdict alone makes the flooder a detected attacker
    assert result.metrics.dr == 100.0


def test_retried_warning_detains_at_the_next_window():
    result = BriefFlood(FLOOD_CLUSTER, _flood_cluster_things(), lose=1).run()
    detained_at, what = _transitions(result, 3)[0]
    assert what == 'detained'
    assert 20.0 < detained_at < 21.0
    assert result.metrics.tallies['Warning'] == {'sent': 3, 'delivered': 2, 'dropped': 1}


TWO_CLUSTERS = SimConfig(n_nodes=7, area_width=100.0, area_height=100.0, sim_duration=19.0,
                         jitter=0.0, f0=4.0)


def _two_cluster_things(attackers=(3, 6)):
    coords = {0: (50, 50), 1: (40, 40), 2: (30, 35), 3: (35, 30), 4: (60, 60), 5: (70, 65), 6: (65, 70)}
    return [make_thing(i, x, y, attacker=i in attackers) for i, (x, y) in coords.items()]


@pytest.fixture
def heads_one_and_four(monkeypatch):
    monkeypatch.setattr(sim_engine, 'elect_heads', lambda ledger, cfg, rc: [1, 4])


def test_two_heads_detain_their_flooders_in_the_same_window(heads_one_and_four):
    sim = Simulation(TWO_CLUSTERS, things=_two_cluster_things())
    result = sim.run()
    assert sim.dodag.heads == (1, 4)

    detained = result.detentions[result.detentions['transition'] == 'detained']
    assert sorted(detained['accused']) == [3, 6]
    assert detained['time'].between(15.0, 16.0).all()
    for flooder in (3, 6):
        floods = result.trace[(result.trace['kind'] == 'Flood') & (result.trace['src'] == flooder)
                              & (result.trace['time'] > 16.0)]
        assert len(floods) > 0
        assert set(floods['outcome']) == {'detained'}
    # the other cluster's head rejects them too
    for flooder, other_head in ((3, 4), (6, 1)):
        assert sim.deliver(_data(flooder, other_head, flood=True), (flooder, other_head)) is Outcome.DETAINED


class HeadReported(Simulation):
    '''
        head 4 reports head 1 at t = 10; heads and rejected things are compared after
        every rotation check
    '''

    def __init__(self, cfg, things):
        super().__init__(cfg, things=things)
        self.overlaps = []

    def _on_window_close(self):
        if self.clock.now == 10.0:
            self._send_warning(4, 1, retry=False)
        super()._on_window_close()

    def _on_rotation_check(self):
        super()._on_rotation_check()
        if self.dodag is not None:
            self.overlaps.append(set(self.dodag.heads) & self.detention.rejecting())


def test_detained_head_hands_its_role_over(heads_one_and_four):
    sim = HeadReported(TWO_CLUSTERS, things=_two_cluster_things(attackers=()))
    result = sim.run()
    detained_at, what = _transitions(result, 1)[0]
    assert what == 'detained' and 10.0 < detained_at < 11.0
    assert sim.rotations == 1
    assert 1 not in sim.dodag.heads
    assert 4 in sim.dodag.heads
    assert sim.overlaps and not any(sim.overlaps)
    assert sim.dodag.children(1) == []


class FalseAlarm(Simulation):
    '''
        the first head reports one of its normal members at t = 15
    '''

    def __init__(self, cfg, things):
        super().__init__(cfg, things=things)
        self.target = None

    def _on_window_close(self):
        if self.clock.now == 15.0:
            head = self.dodag.heads[0]
            self.target = min(self.views[head].members)
            self._send_warning(head, self.target, retry=False)
        super()._on_window_close()


def test_released_thing_routes_like_a_never_accused_one():
    things = [make_thing(0, 50, 50), make_thing(1, 50, 55), make_thing(2, 45, 65), make_thing(3, 55, 65)]
    accused = FalseAlarm(FLOOD_CLUSTER, things=things)
    after_release = accused.run()
    plain = Simulation(FLOOD_CLUSTER, things=things)
    untouched = plain.run()

    transitions = _transitions(after_release, accused.target)
    assert [what for _, what in transitions][0] == 'detained'
    released_at = next(t for t, what in transitions if what == 'released')
    assert released_at < FLOOD_CLUSTER.sim_duration

    def data_after(result):
        trace = result.trace
        return trace[(trace['kind'] == 'Data') & (trace['time'] > released_at)].reset_index(drop=True)

    assert len(data_after(untouched)) > 0
    pd.testing.assert_frame_equal(data_after(after_release), data_after(untouched))
    assert dict(accused.dodag) == dict(plain.dodag)
    assert accused.route(accused.target) == plain.route(accused.target)


def test_head_counts_ten_floods_per_data_packet():
    cfg = FLOOD_CLUSTER.with_overrides(detection_enabled=False)
    sim = Simulation(cfg, things=_flood_cluster_things())
    trace = sim.run().trace
    assert sim.dodag.heads == (1,)
    at_head = trace[(trace['dst'] == 1) & (trace['outcome'] == 'delivered') & (trace['time'] >= cfg.attack_start)]
    floods = int(((at_head['kind'] == 'Flood') & (at_head['src'] == 3)).sum())
    data = int(((at_head['kind'] == 'Data') & (at_head['src'] == 2)).sum())
    assert (floods, data) == (300, 30)
    assert floods / data == pytest.approx(cfg.cbr_interval / cfg.flood_interval)


def test_receive_load_keeps_only_the_current_second():
    sim = _pair_sim(rx_capacity=1)
    assert sim.deliver(_data(1, 2), (1, 2)) is Outcome.DELIVERED
    assert sim.deliver(_data(1, 2), (1, 2)) is Outcome.CONGESTION
    sim.clock.advance(1.5)
    assert sim.deliver(_data(2, 1), (2, 1)) is Outcome.DELIVERED
    assert sim.deliver(_data(1, 2), (1, 2)) is Outcome.DELIVERED
    assert dict(sim.rx_load) == {1: 1, 2: 1}
