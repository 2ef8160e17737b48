"""
Synchronous message-passing execution of the clique-based solvers.

Each agent only holds its own objective, the blocks of the cliques it belongs
to, and whatever its neighbors delivered through the mailbox. A round has
four barrier-separated phases:

1. every agent updates ``x_i`` from its cache,
2. every agent sends ``x_i`` to all its neighbors,
3. clique variables ``(y_l, u_l)`` are updated, either by every member
   (``replicated``) or by the lowest-labeled member, which then sends the
   result to the other members (``owner``),
4. caches are refreshed from delivered messages.
"""

from dataclasses import dataclass, field

import numpy as np

from .graph import neighbor_set, position
from .solvers import (FLIP, SolverState, _guard, agent_x_update, clique_dual_term,
                      clique_yu_update)

REPLICATED = "replicated"
OWNER = "owner"


class LocalityViolation(RuntimeError):
    pass


class CopyDivergence(RuntimeError):
    pass


@dataclass
class Message:
    round: int
    phase: str
    src: int
    dst: int
    payload: object

    @property
    def size(self):
        if isinstance(self.payload, tuple):
            return sum(np.size(v) for v in self.payload[1:])
        return int(np.size(self.payload))


class RoundMailbox:
    """Per-edge queues; refuses any message between non-neighbors."""

    def __init__(self, graph, trace=None):
        self.graph = graph
        self.round = 0
        self.queues = {}
        self.log = []
        self.trace = trace

    def send(self, src, dst, phase, payload):
        if dst == src or not self.graph.adjacent(src, dst):
            raise LocalityViolation(f"agent {src} tried to send to non-neighbor {dst}")
        msg = Message(self.round, phase, src, dst, payload)
        self.queues.setdefault(dst, []).append(msg)
        self.log.append((msg.round, phase, src, dst, msg.size))
        if self.trace is not None:
            self.trace.write(f"{msg.round},{phase},{src},{dst},{msg.size}\n")

    def deliver(self, dst):
        return self.queues.pop(dst, [])

    def pending(self):
        return sum(len(q) for q in self.queues.values())


@dataclass
class AgentNode:
    id: int
    f: object
    alpha: float
    neighbors: frozenset
    cliques: dict
    x: np.ndarray
    # latest x of each neighbor, filled only from delivered messages
    x_cache: dict = field(default_factory=dict)
    y: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)

    def read_x(self, j):
        if j == self.id:
            return self.x
        if j not in self.x_cache:
            raise LocalityViolation(f"agent {self.id} has no delivered value for agent {j}")
        return self.x_cache[j]

    def clique_x(self, l):
        members, _ = self.cliques[l]
        return np.concatenate([self.read_x(j) for j in members])


@dataclass
class _CliqueView:
    members: tuple
    block: object
    coeffs: tuple


class Network:
    """
    The agents of a :class:`~cliqueadmm.problem.CliqueProblem` wired to a
    mailbox.

    Parameters
    ----------
    p : CliqueProblem
    params : SolverParams
    method : {"admm", "flip"}
    mode : {"replicated", "owner"}
    state : SolverState, optional
        Initial iterate; clique copies start identical across members.
    order : sequence of int, optional
        Agent scheduling order within each phase.
    trace : file-like, optional
        Receives one ``round,phase,from,to,size`` line per message.
    """

    def __init__(self, p, params, method="admm", mode=REPLICATED, state=None, order=None, trace=None):
        if mode not in (REPLICATED, OWNER):
            raise ValueError(f"unknown mode {mode!r}")
        self.problem = p
        self.method = method
        self.mode = mode
        self.mailbox = RoundMailbox(p.graph, trace)
        self.k = 0
        self.order = list(p.graph.nodes) if order is None else list(order)
        if sorted(self.order) != list(p.graph.nodes):
            raise ValueError("order must be a permutation of the agents")
        state = SolverState.initial(p) if state is None else state
        self.k = state.k
        coeffs = params.coefficients(p)
        self.views = {l: _CliqueView(p.members(l), blk, coeffs[l]) for l, blk in enumerate(p.blocks)}
        self.agents = {}
        for i in p.graph.nodes:
            mine = {l: (self.views[l].members, position(self.views[l].members, i))
                    for l in p.family.cliques_of(i)}
            node = AgentNode(i, p.f[i - 1], float(params.alpha[i - 1]),
                             neighbor_set(p.graph, i) - {i}, mine, state.x[i - 1].copy())
            for l in mine:
                node.y[l] = state.y[l].copy()
                node.u[l] = state.u[l].copy()
            self.agents[i] = node
        # neighbors start out knowing each other's x^0
        for i, node in self.agents.items():
            for j in node.neighbors:
                node.x_cache[j] = self.agents[j].x.copy()
        self.rounds = []

    def owner(self, l):
        return self.views[l].members[0]

    def run_round(self):
        """Advance every agent by one iteration."""
        p = self.problem
        flip = self.method == FLIP
        self.mailbox.round = self.k
        sent_before = len(self.mailbox.log)

        new_x = {}
        for i in self.order:
            node = self.agents[i]
            acc = np.zeros(p.d)
            for l, (members, pos) in node.cliques.items():
                view = self.views[l]
                z = clique_dual_term(view.block, node.clique_x(l), node.y[l], node.u[l], view.coeffs[1])
                acc += z[(pos - 1) * p.d:pos * p.d]
            new_x[i] = agent_x_update(node.f, node.x, acc, node.alpha, flip)
        for i in self.order:
            self.agents[i].x = new_x[i]

        for i in self.order:
            for j in sorted(self.agents[i].neighbors):
                self.mailbox.send(i, j, "x", new_x[i])
        for i in self.order:
            node = self.agents[i]
            for msg in self.mailbox.deliver(i):
                node.x_cache[msg.src] = msg.payload

        if self.mode == REPLICATED:
            for i in self.order:
                node = self.agents[i]
                for l in node.cliques:
                    self._update_clique(node, l, flip)
            self._check_copies()
        else:
            for i in self.order:
                node = self.agents[i]
                for l in node.cliques:
                    if self.owner(l) != i:
                        continue
                    self._update_clique(node, l, flip)
                    for j in self.views[l].members[1:]:
                        self.mailbox.send(i, j, "yu", (l, node.y[l], node.u[l]))
            for i in self.order:
                node = self.agents[i]
                for msg in self.mailbox.deliver(i):
                    l, y, u = msg.payload
                    node.y[l], node.u[l] = y, u

        if self.mailbox.pending():
            raise RuntimeError("undelivered messages at the end of a round")
        self.k += 1
        self.rounds.append(len(self.mailbox.log) - sent_before)
        return self

    def _update_clique(self, node, l, flip):
        view = self.views[l]
        beta, gamma, phi = view.coeffs
        node.y[l], node.u[l] = clique_yu_update(view.block, node.clique_x(l), node.y[l], node.u[l],
                                                beta, gamma, phi, flip)

    def _check_copies(self):
        for l, view in self.views.items():
            ref = self.agents[view.members[0]]
            for j in view.members[1:]:
                other = self.agents[j]
                if not (np.array_equal(other.y[l], ref.y[l]) and np.array_equal(other.u[l], ref.u[l])):
                    raise CopyDivergence(f"clique {l}: copies held by {ref.id} and {j} differ")

    def state(self):
        """Assemble a :class:`SolverState` (y, u taken from each clique's lowest member)."""
        p = self.problem
        x = np.stack([self.agents[i].x for i in p.graph.nodes])
        y = [self.agents[self.owner(l)].y[l] for l in range(len(p.blocks))]
        u = [self.agents[self.owner(l)].u[l] for l in range(len(p.blocks))]
        st = SolverState(self.k, x, y, u)
        _guard(st)
        return st


def run_round(net):
    return net.run_round()


def message_stats(net):
    """
    Message counts per round and payload volume (floats sent) per agent.
    """
    volume = {i: 0 for i in net.agents}
    for _, _, src, _, size in net.mailbox.log:
        volume[src] += size
    x_msgs = sum(1 for entry in net.mailbox.log if entry[1] == "x")
    yu_msgs = len(net.mailbox.log) - x_msgs
    rounds = max(len(net.rounds), 1)
    return {
        "per_round": list(net.rounds),
        "x_messages_per_round": x_msgs / rounds,
        "yu_messages_per_round": yu_msgs / rounds,
        "payload_per_agent": volume,
    }


def runtime_stepper(mode=REPLICATED, method="admm", order=None, trace=None):
    """
    A ``stepper`` for :func:`cliqueadmm.solvers.run` that drives a
    :class:`Network` (built lazily on the first call).
    """
    box = {}

    def step(p, params, state):
        net = box.get("net")
        if net is None:
            net = box["net"] = Network(p, params, method, mode, state, order, trace)
        net.run_round()
        st = net.state()
        st.prev = (state.x, state.y, state.u)
        return st

    step.box = box
    return step
