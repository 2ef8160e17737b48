import io

import numpy as np
import pytest

from oracles import random_problem

from cliqueadmm.functions import L1Norm, Quadratic, SplitSum, Zero
from cliqueadmm.graph import CliqueFamily, Graph, edge_cliques, enumerate_maximal_cliques, erdos_renyi
from cliqueadmm.problem import CliqueBlock, CliqueProblem, build_consensus_problem
from cliqueadmm.runtime import (OWNER, REPLICATED, LocalityViolation, Network, message_stats,
                                runtime_stepper)
from cliqueadmm.solvers import ADMM, FLIP, SolverState, cl_admm_step, cl_flip_admm_step, run, suggest_params

K3 = Graph.from_edges(3, [(1, 2), (2, 3), (1, 3)])


def consensus(g, d=2, seed=0, cliques=enumerate_maximal_cliques):
    rng = np.random.default_rng(seed)
    f = [SplitSum(Zero(d), Quadratic(np.eye(d) + 0.1 * rng.standard_normal((d, d)), rng.standard_normal(d)))
         for _ in g.nodes]
    return build_consensus_problem(cliques(g), d, f, [L1Norm(d, 0.05)] * g.n)


def trajectory(p, params, method, mode, rounds=30, order=None, state=None):
    net = Network(p, params, method, mode, state=state, order=order)
    out = []
    for _ in range(rounds):
        out.append(net.run_round().state().flat())
    return np.array(out), net


class TestEquivalence:
    @pytest.mark.parametrize("method", [ADMM, FLIP])
    def test_matches_sequential_steps_exactly(self, method):
        rng = np.random.default_rng(1)
        step = cl_flip_admm_step if method == FLIP else cl_admm_step
        for _ in range(5):
            p = consensus(erdos_renyi(8, 0.4, rng), seed=int(rng.integers(1000)))
            params = suggest_params(p, method)
            st = SolverState.initial(p, rng)
            for mode in (REPLICATED, OWNER):
                traj, _ = trajectory(p, params, method, mode, state=st)
                ref = st
                for k in range(len(traj)):
                    ref = step(p, params, ref)
                    assert np.array_equal(traj[k], ref.flat())

    def test_general_blocks(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            p = random_problem(rng)
            params = suggest_params(p)
            st = SolverState.initial(p, rng)
            a, _ = trajectory(p, params, ADMM, REPLICATED, state=st)
            b, _ = trajectory(p, params, ADMM, OWNER, state=st)
            assert np.array_equal(a, b)

    def test_schedule_independence(self):
        rng = np.random.default_rng(3)
        p = consensus(erdos_renyi(9, 0.4, rng))
        params = suggest_params(p)
        base, _ = trajectory(p, params, ADMM, OWNER)
        for _ in range(3):
            order = [int(i) + 1 for i in rng.permutation(p.n)]
            other, _ = trajectory(p, params, ADMM, OWNER, order=order)
            assert np.array_equal(base, other)

    def test_stepper_in_run(self):
        p = consensus(erdos_renyi(6, 0.5, np.random.default_rng(4)))
        params = suggest_params(p)
        a, sa = run(p, ADMM, params, 40)
        b, sb = run(p, ADMM, params, 40, stepper=runtime_stepper(OWNER))
        assert [r["residual"] for r in a] == [r["residual"] for r in b]
        assert np.array_equal(sa.flat(), sb.flat())


class TestLocality:
    def test_non_neighbor_send(self):
        path = Graph.from_edges(3, [(1, 2), (2, 3)])
        net = Network(consensus(path), suggest_params(consensus(path)))
        with pytest.raises(LocalityViolation):
            net.mailbox.send(1, 3, "x", np.zeros(2))
        with pytest.raises(LocalityViolation):
            net.mailbox.send(1, 1, "x", np.zeros(2))

    def test_read_without_delivery(self):
        p = consensus(K3)
        net = Network(p, suggest_params(p))
        del net.agents[1].x_cache[2]
        with pytest.raises(LocalityViolation):
            net.run_round()

    def test_messages_only_along_edges(self):
        g = erdos_renyi(10, 0.3, np.random.default_rng(5))
        p = consensus(g)
        _, net = trajectory(p, suggest_params(p), ADMM, OWNER, rounds=5)
        assert all(g.adjacent(src, dst) for _, _, src, dst, _ in net.mailbox.log)


class TestMessages:
    def test_triangle_counts(self):
        p = consensus(K3, d=2)
        _, rep = trajectory(p, suggest_params(p), ADMM, REPLICATED, rounds=3)
        _, own = trajectory(p, suggest_params(p), ADMM, OWNER, rounds=3)
        assert message_stats(rep)["per_round"] == [6, 6, 6]
        stats = message_stats(own)
        assert stats["x_messages_per_round"] == 6 and stats["yu_messages_per_round"] == 2
        # agent 1 owns the clique: per round 2 x messages (2 floats) and 2 yu messages (6 + 6 floats)
        assert stats["payload_per_agent"] == {1: 3 * (2 * 2 + 2 * 12), 2: 3 * 4, 3: 3 * 4}

    def test_single_agent_is_silent(self):
        g = Graph.from_edges(1, [])
        blk = CliqueBlock(np.eye(1), -np.eye(1), np.zeros(1), Zero(1))
        p = CliqueProblem(CliqueFamily(g, [(1,)]), 1, [Zero(1)], [blk])
        for mode in (REPLICATED, OWNER):
            _, net = trajectory(p, suggest_params(p), ADMM, mode, rounds=4)
            assert net.mailbox.log == [] and net.rounds == [0] * 4

    def test_trace_lines(self):
        p = consensus(Graph.from_edges(3, [(1, 2), (2, 3)]), cliques=edge_cliques)
        buf = io.StringIO()
        net = Network(p, suggest_params(p), mode=OWNER, trace=buf)
        net.run_round()
        lines = buf.getvalue().splitlines()
        assert len(lines) == len(net.mailbox.log) == 4 + 2
        assert lines[0] == "0,x,1,2,2"
        for line in lines:
            rnd, phase, src, dst, size = line.split(",")
            assert rnd == "0" and phase in ("x", "yu") and int(size) > 0


class TestErrors:
    def test_bad_mode_and_order(self):
        p = consensus(K3)
        params = suggest_params(p)
        with pytest.raises(ValueError):
            Network(p, params, mode="broadcast")
        with pytest.raises(ValueError):
            Network(p, params, order=[1, 2])
        with pytest.raises(ValueError):
            Network(p, params, order=[1, 1, 2])
