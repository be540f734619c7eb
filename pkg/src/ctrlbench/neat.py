"""NEAT: evolve feed-forward network topology together with its weights.

Genomes start from the smallest useful structure (inputs and bias feeding a
single hidden unit that feeds every output) and grow via add-connection and
add-node mutations. Connection genes carry innovation numbers handed out by
a run-wide registry, so crossover aligns genes without graph matching.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import _kernels as K

INPUT, BIAS, HIDDEN, OUTPUT = "input", "bias", "hidden", "output"


class CycleError(RuntimeError):
    pass


@dataclass
class NeatConfig:
    pop_size: int = 150
    weight_mutate_rate: float = 0.8
    weight_perturb_std: float = 0.5
    weight_reset_rate: float = 0.1
    add_conn_prob: float = 0.05
    add_node_prob: float = 0.03
    crossover_rate: float = 0.75
    disabled_stays_disabled: float = 0.75
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.4
    compat_threshold: float = 3.0
    survival: float = 0.2
    stagnation: int = 15
    elitism: int = 1
    elitism_min_size: int = 5
    init_weight_std: float = 1.0


@dataclass
class NodeGene:
    id: int
    kind: str
    activation: str = "tanh"


@dataclass
class ConnectionGene:
    innovation: int
    in_id: int
    out_id: int
    weight: float
    enabled: bool = True

    def copy(self) -> "ConnectionGene":
        return ConnectionGene(self.innovation, self.in_id, self.out_id, self.weight, self.enabled)


class InnovationRegistry:
    """Run-wide historical markings; safe to call from several threads."""

    def __init__(self, first_node_id: int):
        self._lock = threading.Lock()
        self._by_signature: Dict[tuple, int] = {}
        self._split_node: Dict[int, int] = {}
        self.next_innovation = 1
        self.next_node_id = first_node_id

    def connection(self, in_id: int, out_id: int) -> int:
        with self._lock:
            key = (in_id, out_id)
            if key not in self._by_signature:
                self._by_signature[key] = self.next_innovation
                self.next_innovation += 1
            return self._by_signature[key]

    def split_node(self, innovation: int, taken) -> int:
        """Node id for splitting connection ``innovation``; reused across genomes."""
        with self._lock:
            node = self._split_node.get(innovation)
            if node is None or node in taken:
                node = self.next_node_id
                self.next_node_id += 1
                self._split_node.setdefault(innovation, node)
            return node


@dataclass
class CompiledNet:
    n_in: int
    ptr: np.ndarray
    src: np.ndarray
    w: np.ndarray
    out_pos: np.ndarray


class Genome:
    def __init__(self, n_inputs: int, n_outputs: int):
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.nodes: Dict[int, NodeGene] = {}
        self.conns: Dict[int, ConnectionGene] = {}
        self.fitness: Optional[float] = None
        self._compiled: Optional[CompiledNet] = None

    @property
    def input_ids(self):
        return list(range(self.n_inputs))

    @property
    def bias_id(self) -> int:
        return self.n_inputs

    @property
    def output_ids(self):
        return list(range(self.n_inputs + 1, self.n_inputs + 1 + self.n_outputs))

    def copy(self) -> "Genome":
        g = Genome(self.n_inputs, self.n_outputs)
        g.nodes = {k: NodeGene(n.id, n.kind, n.activation) for k, n in self.nodes.items()}
        g.conns = {k: c.copy() for k, c in self.conns.items()}
        g.fitness = self.fitness
        return g

    def touch(self):
        self._compiled = None
        self.fitness = None

    def innovations(self):
        return sorted(self.conns)

    def structure(self):
        """Hashable topology: node ids/kinds plus (innovation, in, out, enabled)."""
        return (tuple(sorted((n.id, n.kind) for n in self.nodes.values())),
                tuple((c.innovation, c.in_id, c.out_id, c.enabled)
                      for c in sorted(self.conns.values(), key=lambda c: c.innovation)))

    def descendants(self) -> Dict[int, set]:
        """Every node reachable from each node over all connection genes (itself included)."""
        succ: Dict[int, List[int]] = {n: [] for n in self.nodes}
        for c in self.conns.values():
            succ[c.in_id].append(c.out_id)
        memo: Dict[int, set] = {}
        for n in reversed(self.topological_order(enabled_only=False)):
            reach = {n}
            for m in succ[n]:
                reach |= memo[m]
            memo[n] = reach
        return memo

    def topological_order(self, enabled_only: bool = True) -> List[int]:
        indeg = {n: 0 for n in self.nodes}
        succ: Dict[int, List[int]] = {n: [] for n in self.nodes}
        for c in self.conns.values():
            if c.enabled or not enabled_only:
                succ[c.in_id].append(c.out_id)
                indeg[c.out_id] += 1
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
        if len(order) != len(self.nodes):
            raise CycleError("genome contains a directed cycle")
        return order

    def is_acyclic(self) -> bool:
        try:
            self.topological_order(enabled_only=False)
        except CycleError:
            return False
        return True

    def compile(self) -> CompiledNet:
        if self._compiled is not None:
            return self._compiled
        order = self.topological_order()
        fixed = self.input_ids + [self.bias_id]
        rest = [n for n in order if n not in set(fixed)]
        pos = {n: i for i, n in enumerate(fixed + rest)}
        incoming: Dict[int, List[ConnectionGene]] = {}
        for c in self.conns.values():
            if c.enabled:
                incoming.setdefault(c.out_id, []).append(c)
        ptr = np.zeros(len(pos) + 1, dtype=np.int64)
        src, w = [], []
        for n in fixed + rest:
            edges = sorted(incoming.get(n, ()), key=lambda c: c.innovation) if n in rest else ()
            for c in edges:
                src.append(pos[c.in_id])
                w.append(c.weight)
            ptr[pos[n] + 1] = len(src)
        self._compiled = CompiledNet(self.n_inputs, ptr, np.array(src, dtype=np.int64),
                                     np.array(w, dtype=np.float64),
                                     np.array([pos[o] for o in self.output_ids], dtype=np.int64))
        return self._compiled


def _registry_for(n_inputs: int, n_outputs: int) -> InnovationRegistry:
    return InnovationRegistry(first_node_id=n_inputs + 1 + n_outputs)


def initial_genome(n_inputs: int, n_outputs: int, rng: np.random.Generator,
                   registry: InnovationRegistry, weight_std: float = 1.0) -> Genome:
    """Inputs and bias feed one hidden unit, which feeds every output."""
    g = Genome(n_inputs, n_outputs)
    for i in g.input_ids:
        g.nodes[i] = NodeGene(i, INPUT, "identity")
    g.nodes[g.bias_id] = NodeGene(g.bias_id, BIAS, "identity")
    for o in g.output_ids:
        g.nodes[o] = NodeGene(o, OUTPUT, "tanh")
    hidden = registry.split_node(0, ())
    g.nodes[hidden] = NodeGene(hidden, HIDDEN, "tanh")
    for i in g.input_ids + [g.bias_id]:
        inn = registry.connection(i, hidden)
        g.conns[inn] = ConnectionGene(inn, i, hidden, float(rng.normal(0.0, weight_std)))
    for o in g.output_ids:
        inn = registry.connection(hidden, o)
        g.conns[inn] = ConnectionGene(inn, hidden, o, float(rng.normal(0.0, weight_std)))
    return g


def activate_raw(genome: Genome, x) -> np.ndarray:
    """Output-node activations (tanh, so in [-1, 1])."""
    net = genome.compile()
    x = np.ascontiguousarray(x, dtype=np.float64)
    vals = np.zeros(net.ptr.shape[0] - 1)
    out = np.empty(genome.n_outputs)
    K.neat_forward(net.n_in, net.ptr, net.src, net.w, net.out_pos, x, vals, out)
    return out


def activate(genome: Genome, x, low, high) -> np.ndarray:
    """Network output squashed by tanh and mapped affinely onto [low, high]."""
    raw = activate_raw(genome, x)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    return low + 0.5 * (raw + 1.0) * (high - low)


def mutate(genome: Genome, rng: np.random.Generator, registry: InnovationRegistry,
           cfg: NeatConfig) -> Genome:
    """Mutate ``genome`` in place (and return it)."""
    if rng.random() < cfg.weight_mutate_rate:
        for inn in sorted(genome.conns):
            c = genome.conns[inn]
            if rng.random() < cfg.weight_reset_rate:
                c.weight = float(rng.normal(0.0, cfg.init_weight_std))
            else:
                c.weight += float(rng.normal(0.0, cfg.weight_perturb_std))
    if rng.random() < cfg.add_conn_prob:
        add_connection(genome, rng, registry, cfg)
    if rng.random() < cfg.add_node_prob:
        add_node(genome, rng, registry)
    genome.touch()
    return genome


def add_connection(genome: Genome, rng, registry: InnovationRegistry, cfg: NeatConfig) -> bool:
    existing = {(c.in_id, c.out_id) for c in genome.conns.values()}
    sources = sorted(n.id for n in genome.nodes.values() if n.kind != OUTPUT)
    sinks = sorted(n.id for n in genome.nodes.values() if n.kind in (HIDDEN, OUTPUT))
    below = genome.descendants()
    # a -> b keeps the graph acyclic unless b already reaches a
    candidates = [(a, b) for a in sources for b in sinks
                  if a != b and (a, b) not in existing and a not in below[b]]
    if not candidates:
        return False
    a, b = candidates[int(rng.integers(len(candidates)))]
    inn = registry.connection(a, b)
    genome.conns[inn] = ConnectionGene(inn, a, b, float(rng.normal(0.0, cfg.init_weight_std)))
    genome.touch()
    return True


def add_node(genome: Genome, rng, registry: InnovationRegistry) -> bool:
    enabled = sorted(inn for inn, c in genome.conns.items() if c.enabled)
    if not enabled:
        return False
    old = genome.conns[enabled[int(rng.integers(len(enabled)))]]
    old.enabled = False
    node = registry.split_node(old.innovation, genome.nodes)
    genome.nodes[node] = NodeGene(node, HIDDEN, "tanh")
    inn_a = registry.connection(old.in_id, node)
    inn_b = registry.connection(node, old.out_id)
    genome.conns[inn_a] = ConnectionGene(inn_a, old.in_id, node, 1.0)
    genome.conns[inn_b] = ConnectionGene(inn_b, node, old.out_id, old.weight)
    genome.touch()
    return True


def crossover(parent_a: Genome, parent_b: Genome, rng: np.random.Generator,
              cfg: Optional[NeatConfig] = None) -> Genome:
    """Child of ``parent_a`` (the fitter one) and ``parent_b``.

    The child carries exactly the fitter parent's genes; matching genes take
    their weight from a random parent.
    """
    cfg = cfg or NeatConfig()
    child = Genome(parent_a.n_inputs, parent_a.n_outputs)
    child.nodes = {k: NodeGene(n.id, n.kind, n.activation) for k, n in parent_a.nodes.items()}
    for inn in sorted(parent_a.conns):
        ga = parent_a.conns[inn]
        gb = parent_b.conns.get(inn)
        gene = (gb if (gb is not None and rng.random() < 0.5) else ga).copy()
        gene.in_id, gene.out_id = ga.in_id, ga.out_id
        disabled = (not ga.enabled) or (gb is not None and not gb.enabled)
        if disabled:
            gene.enabled = not (rng.random() < cfg.disabled_stays_disabled)
        child.conns[inn] = gene
    return child


def compatibility(a: Genome, b: Genome, c1: float = 1.0, c2: float = 1.0, c3: float = 0.4) -> float:
    ia, ib = set(a.conns), set(b.conns)
    if not ia and not ib:
        return 0.0
    max_a = max(ia) if ia else 0
    max_b = max(ib) if ib else 0
    cut = min(max_a, max_b)
    excess = disjoint = 0
    for inn in ia ^ ib:
        if inn > cut:
            excess += 1
        else:
            disjoint += 1
    matching = ia & ib
    wbar = (sum(abs(a.conns[i].weight - b.conns[i].weight) for i in matching) / len(matching)
            if matching else 0.0)
    n = max(len(ia), len(ib))
    if n < 20:
        n = 1
    return c1 * excess / n + c2 * disjoint / n + c3 * wbar


@dataclass
class Species:
    id: int
    representative: Genome
    members: List[Genome] = field(default_factory=list)
    best_fitness: float = -math.inf
    last_improved: int = 0
    adjusted_fitness_sum: float = 0.0

    def stagnation(self, generation: int) -> int:
        return generation - self.last_improved


def largest_remainder(shares: Sequence[float], total: int) -> List[int]:
    shares = np.asarray(shares, dtype=np.float64)
    if shares.sum() <= 0:
        shares = np.ones_like(shares)
    quota = shares / shares.sum() * total
    counts = np.floor(quota).astype(int)
    rest = total - counts.sum()
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts.tolist()


class Population:
    """A NEAT population and its speciation state."""

    def __init__(self, n_inputs: int, n_outputs: int, rng: np.random.Generator,
                 cfg: Optional[NeatConfig] = None):
        self.cfg = cfg or NeatConfig()
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.registry = _registry_for(n_inputs, n_outputs)
        self.genomes = [initial_genome(n_inputs, n_outputs, rng, self.registry,
                                       self.cfg.init_weight_std)
                        for _ in range(self.cfg.pop_size)]
        self.species: List[Species] = []
        self.generation = 0
        self.best: Optional[Genome] = None
        self._next_species_id = 1
        self.reseeds = 0

    def speciate(self):
        cfg = self.cfg
        for s in self.species:
            s.members = []
        for g in self.genomes:
            for s in self.species:
                if compatibility(s.representative, g, cfg.c1, cfg.c2, cfg.c3) < cfg.compat_threshold:
                    s.members.append(g)
                    break
            else:
                s = Species(self._next_species_id, g, [g], last_improved=self.generation)
                self._next_species_id += 1
                self.species.append(s)
        self.species = [s for s in self.species if s.members]

    def tell(self, fitnesses: Sequence[float], rng: np.random.Generator) -> List[Genome]:
        """Record fitnesses for ``self.genomes`` and breed the next generation."""
        cfg = self.cfg
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        if fitnesses.shape != (len(self.genomes),):
            raise ValueError("one fitness per genome required")
        if not np.all(np.isfinite(fitnesses)):
            raise ValueError("non-finite NEAT fitness")
        for g, f in zip(self.genomes, fitnesses):
            g.fitness = float(f)
        champion = max(self.genomes, key=lambda g: g.fitness)
        if self.best is None or champion.fitness >= self.best.fitness:
            self.best = champion.copy()
        self.speciate()

        for s in self.species:
            top = max(m.fitness for m in s.members)
            if top > s.best_fitness:
                s.best_fitness = top
                s.last_improved = self.generation
        survivors = [s for s in self.species
                     if s.stagnation(self.generation) < cfg.stagnation or champion in s.members]
        if not survivors:
            return self._reseed(rng)
        self.species = survivors

        fmin, fmax = fitnesses.min(), fitnesses.max()
        span = fmax - fmin
        for s in self.species:
            scaled = [(m.fitness - fmin) / span if span > 0 else 1.0 for m in s.members]
            s.adjusted_fitness_sum = sum(v / len(s.members) for v in scaled)
        counts = largest_remainder([s.adjusted_fitness_sum for s in self.species], cfg.pop_size)

        children: List[Genome] = []
        champion_kept = False
        for s, k in zip(self.species, counts):
            if k <= 0:
                continue
            members = sorted(s.members, key=lambda m: m.fitness, reverse=True)
            n_elite = min(cfg.elitism, k) if len(members) >= cfg.elitism_min_size else 0
            for e in members[:n_elite]:
                children.append(e.copy())
                champion_kept |= e is champion
            pool = members[:max(1, int(math.ceil(cfg.survival * len(members))))]
            for _ in range(k - n_elite):
                if len(pool) >= 2 and rng.random() < cfg.crossover_rate:
                    i, j = rng.choice(len(pool), size=2, replace=False)
                    pa, pb = pool[min(i, j)], pool[max(i, j)]
                    child = crossover(pa, pb, rng, cfg)
                else:
                    child = pool[int(rng.integers(len(pool)))].copy()
                children.append(mutate(child, rng, self.registry, cfg))
        if not champion_kept:
            children[-1] = champion.copy()
        for s in self.species:
            s.representative = max(s.members, key=lambda m: m.fitness)
        for c in children:
            c.fitness = None
        self.genomes = children
        self.generation += 1
        return children

    def _reseed(self, rng) -> List[Genome]:
        self.reseeds += 1
        base = self.best
        children = [base.copy()]
        while len(children) < self.cfg.pop_size:
            children.append(mutate(base.copy(), rng, self.registry, self.cfg))
        for c in children:
            c.fitness = None
        self.species = []
        self.genomes = children
        self.generation += 1
        return children


def evolve_generation(population: Population, fitness_fn: Callable[[Genome], float],
                      rng: np.random.Generator) -> List[Genome]:
    fitnesses = [fitness_fn(g) for g in population.genomes]
    return population.tell(fitnesses, rng)


def dumps(genome: Genome) -> str:
    lines = ["neat-genome 1", f"inputs {genome.n_inputs} outputs {genome.n_outputs}"]
    for n in sorted(genome.nodes.values(), key=lambda n: n.id):
        lines.append(f"node {n.id} {n.kind} {n.activation}")
    for c in sorted(genome.conns.values(), key=lambda c: c.innovation):
        lines.append(f"conn {c.innovation} {c.in_id} {c.out_id} {c.weight!r} {int(c.enabled)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Genome:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0][:1] != ["neat-genome"]:
        raise ValueError("not a serialized NEAT genome")
    head = lines[1]
    g = Genome(int(head[1]), int(head[3]))
    for parts in lines[2:]:
        if parts[0] == "node":
            g.nodes[int(parts[1])] = NodeGene(int(parts[1]), parts[2], parts[3])
        elif parts[0] == "conn":
            inn = int(parts[1])
            g.conns[inn] = ConnectionGene(inn, int(parts[2]), int(parts[3]), float(parts[4]),
                                          parts[5] == "1")
        else:
            raise ValueError(f"unexpected genome line: {' '.join(parts)}")
    return g
