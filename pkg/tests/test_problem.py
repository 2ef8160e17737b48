import math

import numpy as np
import pytest

from oracles import dense_selection, random_problem

from cliqueadmm.functions import ConsensusCliqueFn, L1Norm, Quadratic, SplitSum, Zero, ZeroIndicator
from cliqueadmm.graph import CliqueFamily, Graph, edge_cliques, enumerate_maximal_cliques, erdos_renyi
from cliqueadmm.problem import (CliqueBlock, CliqueProblem, aggregate, build_consensus_problem,
                                consensus_objective, objective, residual, stack)

K3 = Graph.from_edges(3, [(1, 2), (2, 3), (1, 3)])
PATH = Graph.from_edges(3, [(1, 2), (2, 3)])


def zeros(n, d):
    return [Zero(d) for _ in range(n)]


class TestConsensusBuilder:
    def test_triangle(self):
        d = 2
        p = build_consensus_problem(enumerate_maximal_cliques(K3), d, zeros(3, d))
        (blk,) = p.blocks
        np.testing.assert_array_equal(blk.A, np.eye(3 * d))
        np.testing.assert_array_equal(blk.B, -np.eye(3 * d))
        np.testing.assert_array_equal(blk.c, np.zeros(3 * d))
        assert isinstance(blk.g, ConsensusCliqueFn) and p.is_consensus()

    def test_path_edges(self):
        p = build_consensus_problem(edge_cliques(PATH), 3, zeros(3, 3))
        assert [b.A.shape for b in p.blocks] == [(6, 6), (6, 6)]

    def test_regularizer_weights(self):
        h = [L1Norm(1, 0.6), L1Norm(1, 0.3), Zero(1)]
        p = build_consensus_problem(edge_cliques(PATH), 1, zeros(3, 1), h)
        # agent 2 sits in both edges, so each copy carries half its weight
        assert [c.coef for c in p.blocks[0].g.components] == [0.6, 0.15]
        assert p.blocks[0].g.rbar.coef == pytest.approx(0.75)

    def test_paper_scale_instance_builds(self):
        rng = np.random.default_rng(0)
        g = erdos_renyi(50, 0.1, rng)
        f = [Quadratic(np.eye(4) + 0.1 * rng.standard_normal((4, 4)), rng.standard_normal(4)) for _ in range(50)]
        p = build_consensus_problem(enumerate_maximal_cliques(g), 4, f, [L1Norm(4, 0.001)] * 50)
        assert p.n == 50 and all(fam_count > 0 for fam_count in map(p.family.count, g.nodes))

    def test_errors(self):
        with pytest.raises(ValueError):
            build_consensus_problem(CliqueFamily(PATH, []), 1, zeros(3, 1))
        with pytest.raises(ValueError):
            build_consensus_problem(edge_cliques(PATH), 2, zeros(3, 1))
        with pytest.raises(ValueError):
            build_consensus_problem(CliqueFamily(PATH, [(1, 2)]), 1, zeros(3, 1))
        with pytest.raises(ValueError):
            build_consensus_problem(edge_cliques(PATH), 1, zeros(3, 1), [ZeroIndicator(1)] * 3)

    def test_block_shape_errors(self):
        with pytest.raises(ValueError):
            CliqueBlock(np.eye(2), np.eye(3), np.zeros(2), Zero(3))
        with pytest.raises(ValueError):
            CliqueBlock(np.eye(2), np.eye(2), np.zeros(2), Zero(3))
        fam = edge_cliques(PATH)
        blocks = [CliqueBlock(np.eye(2), -np.eye(2), np.zeros(2), Zero(2))] * 2
        with pytest.raises(ValueError):
            CliqueProblem(fam, 2, zeros(3, 2), blocks)


class TestAggregate:
    def test_single_clique(self):
        g = Graph.from_edges(1, [])
        p = CliqueProblem(CliqueFamily(g, [(1,)]), 2, zeros(1, 2),
                          [CliqueBlock(np.eye(2), np.eye(2), np.zeros(2), Zero(2))])
        agg = aggregate(p)
        np.testing.assert_array_equal(agg.W, np.eye(2))
        np.testing.assert_array_equal(agg.A, np.eye(2))

    def test_path_rows(self):
        p = build_consensus_problem(edge_cliques(PATH), 1, zeros(3, 1))
        np.testing.assert_array_equal(aggregate(p).W, np.eye(3)[[0, 1, 1, 2]])

    def test_dense_matches_per_clique(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            p = random_problem(rng)
            agg = aggregate(p)
            np.testing.assert_array_equal(agg.W, dense_selection(p.family, p.d))
            for _ in range(100):
                x = rng.standard_normal((p.n, p.d))
                y = [rng.standard_normal(b.q) for b in p.blocks]
                parts, total = residual(p, x, y)
                dense = agg.residual(x, stack(y))
                np.testing.assert_allclose(stack(parts), dense, atol=1e-12)
                assert total == pytest.approx(np.linalg.norm(dense), abs=1e-12)

    def test_split_helpers(self):
        p = random_problem(np.random.default_rng(2))
        agg = aggregate(p)
        y = [np.arange(b.q, dtype=float) for b in p.blocks]
        assert all(np.array_equal(a, b) for a, b in zip(agg.split_y(stack(y)), y))

    def test_size_cap(self):
        p = build_consensus_problem(edge_cliques(PATH), 5, zeros(3, 5))
        with pytest.raises(ValueError):
            aggregate(p, cap=10)


class TestResidualAndObjective:
    def consensus(self, g=K3, d=2):
        h = [L1Norm(d, 0.5) for _ in g.nodes]
        return build_consensus_problem(enumerate_maximal_cliques(g), d, zeros(g.n, d), h)

    def test_feasible_point(self):
        p = self.consensus()
        x = np.tile([1.0, -2.0], (3, 1))
        y = [p.gather(x, l) for l in range(len(p.blocks))]
        assert residual(p, x, y)[1] == 0.0
        # h_i summed over agents: 3 * 0.5 * 3
        assert objective(p, x, y) == pytest.approx(4.5)
        assert consensus_objective(p, x) == pytest.approx(4.5)

    def test_zero_functions(self):
        p = build_consensus_problem(edge_cliques(PATH), 1, zeros(3, 1))
        x, y, _ = p.zero_state()
        assert objective(p, x, y) == 0.0

    def test_infeasible_consensus_copy(self):
        p = self.consensus()
        x = np.zeros((3, 2))
        y = [np.arange(6, dtype=float)]
        assert math.isinf(objective(p, x, y))

    def test_least_squares_at_origin(self):
        rng = np.random.default_rng(3)
        b = [rng.standard_normal(3) for _ in range(3)]
        f = [Quadratic(np.eye(3), bi) for bi in b]
        p = build_consensus_problem(enumerate_maximal_cliques(PATH), 3, f)
        x, y, _ = p.zero_state()
        assert objective(p, x, y) == pytest.approx(sum(0.5 * bi @ bi for bi in b))

    def test_feasible_iff_consensus(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            g = erdos_renyi(int(rng.integers(2, 8)), 0.5, rng)
            p = self.consensus(g, d=1)
            x = np.full((g.n, 1), float(rng.standard_normal()))
            y = [p.gather(x, l) for l in range(len(p.blocks))]
            assert residual(p, x, y)[1] == 0.0 and math.isfinite(objective(p, x, y))
            x[int(rng.integers(g.n))] += 1.0
            y = [p.gather(x, l) for l in range(len(p.blocks))]
            assert math.isinf(objective(p, x, y))

    def test_convex_along_segments(self):
        rng = np.random.default_rng(5)
        fns = [L1Norm(3, 0.7), Quadratic(rng.standard_normal((3, 3)), rng.standard_normal(3)),
               SplitSum(L1Norm(3, 0.2), Quadratic(np.eye(3), np.ones(3))), Zero(3)]
        for fn in fns:
            for _ in range(50):
                a, b, t = rng.standard_normal(3), rng.standard_normal(3), rng.random()
                assert fn.value(t * a + (1 - t) * b) <= t * fn.value(a) + (1 - t) * fn.value(b) + 1e-9
