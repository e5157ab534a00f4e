"""Simulated-network specifics: latency cohorts, conservation, determinism,
fault injection."""

from __future__ import annotations

import pytest

from netmbt.adapter import Interest
from netmbt.errors import AdapterError, ErrorKind
from netmbt.rng import SeededRng
from netmbt.simnet import FaultKind, FaultSpec, LatencyModel, SimBackend


def session(net):
    srv = net.open_server()
    port = net.bind(srv, 0)
    cli = net.connect(port)
    sc = net.accept(srv)
    net.configure_blocking(sc, False)
    net.configure_blocking(cli, False)
    return srv, cli, sc


class TestLatency:
    def test_fixed_latency_two_steps(self):
        # Write 5 bytes at latency 2: invisible after one advance, fully
        # delivered after two.
        net = SimBackend(SeededRng(0), LatencyModel(choices=(2,), split=False))
        _, cli, sc = session(net)
        net.write(cli, b"12345")
        assert net.read(sc, 10).count == 0
        net.advance()
        assert net.read(sc, 10).count == 0
        net.advance()
        assert net.read(sc, 10).data == b"12345"

    def test_zero_latency_immediate_without_advance(self):
        net = SimBackend(SeededRng(0), LatencyModel.zero())
        _, cli, sc = session(net)
        net.write(cli, b"now")
        assert net.read(sc, 10).data == b"now"

    def test_split_cohort_read_sequence_sums(self):
        # Seed 2 is known to split an 8-byte write into 5 + 3 at latency 0.
        net = SimBackend(SeededRng(2), LatencyModel(choices=(0,), split=True))
        _, cli, sc = session(net)
        net.write(cli, b"ABCDEFGH")
        first = net.read(sc, 16)
        assert first.data == b"ABCDE"
        net.advance()
        second = net.read(sc, 16)
        assert second.data == b"FGH"
        assert first.count + second.count == 8

    def test_fifo_across_interleaved_latencies(self):
        # A slow write must not be overtaken by a fast one.
        net = SimBackend(SeededRng(0), LatencyModel(choices=(2,), split=False))
        _, cli, sc = session(net)
        net.write(cli, b"first")
        net.latency = LatencyModel(choices=(0,), split=False)
        net.write(cli, b"second")
        collected = b""
        for _ in range(5):
            net.advance()
            collected += net.read(sc, 64).data
        assert collected == b"firstsecond"

    def test_blocking_read_advances_until_delivery(self):
        net = SimBackend(SeededRng(0), LatencyModel(choices=(2,), split=False))
        _, cli, sc = session(net)
        net.configure_blocking(sc, True)
        net.write(cli, b"later")
        assert net.read(sc, 10).data == b"later"

    def test_fixed_seed_identical_cohorts(self):
        def run():
            net = SimBackend(SeededRng(77), LatencyModel.default())
            _, cli, sc = session(net)
            out = []
            for i in range(10):
                net.write(cli, bytes([i]) * (i + 1))
                net.advance()
                out.append(net.read(sc, 64).data)
            return out

        assert run() == run()

    def test_read_key_absent_until_delivery(self):
        # bytes in flight are not readable, so the flow must not be READ-ready
        net = SimBackend(SeededRng(0), LatencyModel(choices=(2,), split=False))
        _, cli, sc = session(net)
        sel = net.open_selector()
        key = net.register(sel, sc, Interest.READ)
        net.write(cli, b"soon")
        net.select_now(sel)
        assert not key.ready & Interest.READ
        net.advance()
        net.advance()
        net.select_now(sel)
        assert key.ready & Interest.READ

    def test_connect_latency_delays_acceptability(self):
        # With latency pinned to 2 the queued connection is not acceptable
        # (nor ACCEPT-ready) until the clock advances twice.
        net = SimBackend(SeededRng(0), LatencyModel(choices=(2,), split=False))
        srv = net.open_server()
        port = net.bind(srv, 0)
        net.configure_blocking(srv, False)
        sel = net.open_selector()
        key = net.register(sel, srv, Interest.ACCEPT)
        net.connect(port)
        assert net.accept(srv) is None
        assert key not in net.select_now(sel)
        net.advance()
        net.advance()
        assert key in net.select_now(sel)
        assert net.accept(srv) is not None


class TestConservation:
    def test_random_operation_sequences_conserve_bytes(self):
        # For every flow: written + duplicated = read + delivered + in-flight
        # + lost + dropped; without faults or closes, lost and dropped are 0.
        driver_rng = SeededRng(31415)
        for round_ in range(500):
            net = SimBackend(SeededRng(driver_rng.next_u64()), LatencyModel.default())
            _, cli, sc = session(net)
            chans = [cli, sc]
            for _ in range(30):
                op = driver_rng.below(4)
                ch = chans[driver_rng.below(2)]
                try:
                    if op == 0:
                        net.write(ch, bytes(driver_rng.below(256) for _ in range(driver_rng.randint(1, 32))))
                    elif op == 1:
                        net.read(ch, driver_rng.randint(1, 32))
                    elif op == 2:
                        net.advance()
                    else:
                        net.shutdown_output(ch)
                except AdapterError:
                    pass
                for stats in net.flow_stats():
                    assert stats["written"] + stats["duplicated"] == (
                        stats["read"] + stats["delivered_unread"] + stats["in_flight"]
                        + stats["lost"] + stats["dropped"]
                    )
                    assert stats["lost"] == 0 and stats["dropped"] == 0

    def test_fifo_content_is_prefix_of_written(self):
        rng = SeededRng(999)
        net = SimBackend(SeededRng(5), LatencyModel.default())
        _, cli, sc = session(net)
        written = b""
        read_back = b""
        for _ in range(200):
            if rng.below(2):
                chunk = rng.payload(rng.randint(1, 16))
                net.write(cli, chunk)
                written += chunk
            else:
                net.advance()
                read_back += net.read(sc, rng.randint(1, 16)).data
        assert read_back == written[: len(read_back)]


class TestDeterminism:
    def test_identical_seed_and_calls_identical_results(self):
        def run():
            net = SimBackend(SeededRng(4242), LatencyModel.default())
            srv, cli, sc = session(net)
            sel = net.open_selector()
            key = net.register(sel, sc, Interest.READ | Interest.WRITE)
            log = []
            for i in range(40):
                net.write(cli, bytes([i % 251]) * ((i % 7) + 1))
                net.advance()
                ready = net.select_now(sel)
                log.append((key in ready, int(key.ready)))
                log.append(net.read(sc, 8).data)
            return log

        assert run() == run()


class TestFaults:
    def test_duplicate_bytes_breaks_accounting(self):
        net = SimBackend(SeededRng(1), LatencyModel.zero(),
                         FaultSpec(FaultKind.DUPLICATE_BYTES, trigger_step=0))
        _, cli, sc = session(net)
        net.write(cli, b"12345")
        net.advance()
        result = net.read(sc, 64)
        assert result.data == b"1234512345"  # more than was ever written
        assert net.fault_fired
        assert any("duplicated" in e for e in net.fault_events)

    def test_drop_bytes_is_silent_underdelivery(self):
        net = SimBackend(SeededRng(1), LatencyModel(choices=(1,), split=False),
                         FaultSpec(FaultKind.DROP_BYTES, trigger_step=0))
        _, cli, sc = session(net)
        net.write(cli, b"12345")
        net.advance()
        assert net.read(sc, 64).count == 0  # vanished without a trace
        stats = net.flow_stats()
        assert any(s["dropped"] == 5 for s in stats)

    def test_phantom_readiness_reports_read_on_empty_flow(self):
        net = SimBackend(SeededRng(1), LatencyModel.zero(),
                         FaultSpec(FaultKind.PHANTOM_READINESS, trigger_step=0))
        _, cli, sc = session(net)
        sel = net.open_selector()
        key = net.register(sel, sc, Interest.READ)
        ready = net.select_now(sel)
        assert key in ready and key.ready & Interest.READ
        assert net.read(sc, 16).count == 0  # the lie the oracle catches
        # one-shot: the next select is honest again
        assert key not in net.select_now(sel)

    def test_fault_fires_exactly_once(self):
        net = SimBackend(SeededRng(1), LatencyModel.zero(),
                         FaultSpec(FaultKind.DUPLICATE_BYTES, trigger_step=0))
        _, cli, sc = session(net)
        net.write(cli, b"aa")
        net.advance()
        net.write(cli, b"bb")
        net.advance()
        assert net.read(sc, 64).data == b"aaaabb"
        assert len(net.fault_events) == 1

    def test_inject_fault_only_before_traffic(self):
        net = SimBackend(SeededRng(1), LatencyModel.zero())
        net.inject_fault(FaultSpec(FaultKind.DROP_BYTES))
        with pytest.raises(ValueError):
            net.inject_fault(FaultSpec(FaultKind.DROP_BYTES))  # one plan only
        fresh = SimBackend(SeededRng(1), LatencyModel.zero())
        session(fresh)
        with pytest.raises(ValueError):
            fresh.inject_fault(FaultSpec(FaultKind.DROP_BYTES))  # traffic exists


class TestAbortiveVsGraceful:
    def test_listener_close_resets_queued_connections(self):
        net = SimBackend(SeededRng(0), LatencyModel.zero())
        srv = net.open_server()
        port = net.bind(srv, 0)
        cli = net.connect(port)
        net.close_server(srv)
        with pytest.raises(AdapterError) as e:
            net.read(cli, 8)
        assert e.value.kind is ErrorKind.PEER_CLOSED

    def test_graceful_close_delivers_pending_then_eof(self):
        net = SimBackend(SeededRng(0), LatencyModel(choices=(1,), split=False))
        _, cli, sc = session(net)
        net.write(cli, b"pending")
        net.close_conn(cli)  # nothing unread at cli: graceful
        net.advance()
        assert net.read(sc, 64).data == b"pending"
        assert net.read(sc, 64).is_eof
