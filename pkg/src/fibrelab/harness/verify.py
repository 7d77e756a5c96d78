"""End-to-end verification suites.

Each suite returns a :class:`VerificationReport`; failures are recorded,
never raised.  Every failure carries a self-contained JSON repro that
:func:`replay` re-checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fibrelab.compatible import build_compatible, check_compatibility, cube_points, transport_iso
from fibrelab.compiler import GAT, GNN, TRANSFORMER, compile_network, compile_transformer, token_features
from fibrelab.errors import FibrelabError
from fibrelab.extraction import CharacteristicPredicate, characteristic_formula, extract_theorem3_formula, psi_formula
from fibrelab.feedforward import NetworkInstance, NeuralArchitecture
from fibrelab.fibred import FibredNetwork, FibringArchitecture, classify_fibred, evaluate_fibred
from fibrelab.graphnets import FeaturedGraph, TokenSequence, classify_node, classify_token, forward
from fibrelab.harness.generate import (
    InstanceGenConfig,
    all_assignments,
    case_rng,
    complete_tables,
    random_fibred,
    random_formula,
    random_gnn,
    random_graph,
    random_sequence,
    table_filler_for,
)
from fibrelab.linalg import RMatrix, format_vector
from fibrelab.modal import IN, ComponentId, check_satisfaction, print_formula
from fibrelab import serialize as ser

TIE_BREAKS = ("least", "greatest")


@dataclass
class VerificationReport:
    theorem: str
    seed: int
    cases: int = 0
    checks: int = 0
    failures: list = field(default_factory=list)
    divergences: list = field(default_factory=list)  # tie-break disagreements, reported apart from failures
    populations: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def population(self, name: str) -> dict:
        return self.populations.setdefault(name, {"cases": 0, "checks": 0, "failures": 0})

    def fail(self, population: str, case: int, expected, got, repro: dict, **extra):
        self.population(population)["failures"] += 1
        self.failures.append({"population": population, "case": case, "expected": expected, "got": got,
                              "repro": repro, **extra})

    def to_dict(self, with_repros: bool = True) -> dict:
        """Deterministic content; wall time is deliberately left out."""
        fails = self.failures if with_repros else [{k: v for k, v in f.items() if k != "repro"} for f in self.failures]
        return {
            "theorem": self.theorem,
            "seed": self.seed,
            "cases": self.cases,
            "checks": self.checks,
            "passed": self.passed,
            "failures": fails,
            "divergences": self.divergences,
            "populations": dict(sorted(self.populations.items())),
        }

    def to_json(self, with_repros: bool = True) -> str:
        return ser.dumps(self.to_dict(with_repros))

    def summary_line(self) -> str:
        pops = ", ".join(f"{k}: {v['failures']}/{v['cases']} failing" for k, v in sorted(self.populations.items()))
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.theorem} {verdict} cases={self.cases} checks={self.checks} failures={len(self.failures)} [{pops}]"

    def write(self, out_dir) -> Path:
        """Write the report and one file per repro; repro paths are recorded in the report."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, f in enumerate(self.failures):
            p = out / f"{self.theorem}-repro-{i}.json"
            p.write_text(ser.dumps(f["repro"]))
            f["repro_path"] = p.name
        path = out / f"{self.theorem}-report.json"
        path.write_text(self.to_json(with_repros=False))
        return path


# ---------------------------------------------------------------------------
# compiler soundness: compiled fibred output vs direct forward pass


def _graph_repro(mode, inst, graph, u, features, seq=None) -> dict:
    data = {"kind": "thm2", "mode": mode, "network": ser.encode_gnn(inst), "vertex": u}
    if seq is not None:
        data["sequence"] = ser.encode_sequence(seq)
    else:
        data["graph"] = ser.encode_graph(graph.with_features(features))
    return data


def check_theorem2(inst, graph: FeaturedGraph, u: str, mode: str, mutate: Callable | None = None):
    """``(expected, got)`` for one compiled instance on the graph's own features."""
    compiled = compile_network(inst, graph, u, mode)
    fnet = compiled.fibred(graph.features)
    if mutate is not None:
        fnet = mutate(fnet)
    got, _ = evaluate_fibred(fnet, compiled.root_input(graph.features))
    expected = forward(inst, graph).final_h(u)
    return expected, got


def verify_theorem2(cfg: InstanceGenConfig, cases: int, modes=(GNN, GAT, TRANSFORMER),
                    mutate: Callable | None = None) -> VerificationReport:
    """``mutate`` rewrites the compiled fibred network before evaluation (mutation testing)."""
    start = time.perf_counter()
    rep = VerificationReport("thm2", cfg.seed)
    for mode in modes:
        for i in range(cases):
            rng = case_rng(cfg.seed, f"thm2-{mode}", i)
            inst = random_gnn(rng, cfg, attention=mode != GNN)
            seq = None
            if mode == TRANSFORMER:
                seq = random_sequence(rng, cfg, inst.dims[0])
                graph = seq.to_graph()
                u = str(rng.randrange(seq.length))
            else:
                graph = random_graph(rng, cfg, inst.dims[0])
                u = rng.choice(graph.nodes)
            rep.cases += 1
            rep.checks += 1
            rep.population(mode)["cases"] += 1
            rep.population(mode)["checks"] += 1
            try:
                expected, got = check_theorem2(inst, graph, u, mode, mutate)
                ok = expected == got
                expected, got = format_vector(expected), format_vector(got)
            except FibrelabError as e:
                ok, expected, got = False, "evaluation", f"error: {e}"
            if not ok:
                rep.fail(mode, i, expected, got, _graph_repro(mode, inst, graph, u, graph.features, seq))
    rep.wall_time = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# compatible models: non-emptiness and closure under relabelling


def _box_targets(C, arch):
    """Non-empty components a box may address from a component of a given node."""
    nonempty = [cid for cid, comp in sorted(C.model.components.items()) if comp.worlds]
    below = {}
    for v in arch.nodes():
        sub = set(arch.subtree(v).nodes())
        below[v] = [cid for cid in nonempty if cid.node in sub]

    def targets(ctx):
        return below[ctx.node]

    return nonempty, targets


def verify_prop1(cfg: InstanceGenConfig, cases: int, formulas: int = 20) -> VerificationReport:
    start = time.perf_counter()
    rep = VerificationReport("prop1", cfg.seed)
    for i in range(cases):
        rng = case_rng(cfg.seed, "fibred", i)
        fnet = random_fibred(rng, cfg)
        xrng = case_rng(cfg.seed, "prop1", i)
        x = xrng.choice(cube_points(fnet.input_dim))
        rep.cases += 1
        pop = rep.population("fibred")
        pop["cases"] += 1
        repro = {"kind": "prop1", "fibred": ser.encode_fibred(fnet), "x": ser.encode_vector(x)}
        try:
            C = build_compatible(fnet, x)
            report = check_compatibility(C, fnet, x)
        except FibrelabError as e:
            rep.fail("fibred", i, "model", f"error: {e}", repro)
            continue
        rep.checks += 1
        pop["checks"] += 1
        if not report.ok:
            rep.fail("fibred", i, "compatible", [f"{r.condition}@{r.scope}" for r in report.failures], repro)
            continue
        nonempty, targets = _box_targets(C, fnet.architecture)
        comp = xrng.choice(nonempty)
        worlds = list(C.model.components[comp].worlds)
        shuffled = ["~" + w for w in worlds]
        xrng.shuffle(shuffled)
        relabel = dict(zip(worlds, shuffled))
        T = transport_iso(C, comp, relabel)
        after = check_compatibility(T, fnet, x)
        rep.checks += 1
        pop["checks"] += 1
        if after.ok != report.ok:
            rep.fail("fibred", i, "verdict preserved", [f"{r.condition}@{r.scope}" for r in after.failures],
                     {**repro, "component": str(comp)})
            continue

        def moved(w):
            return relabel.get(w, w)

        for j in range(formulas):
            at = xrng.choice(nonempty)
            w = xrng.choice(C.model.components[at].worlds)
            phi = random_formula(xrng, fnet.input_dim, targets, depth=3, context=at)
            rep.checks += 1
            pop["checks"] += 1
            try:
                a = check_satisfaction(C.model, (at, w), phi)
                b = check_satisfaction(T.model, (at, moved(w)), phi)
            except FibrelabError as e:
                rep.fail("fibred", i, "formula evaluates", f"error: {e}", {**repro, "formula": print_formula(phi)})
                continue
            if a != b:
                rep.fail("fibred", i, a, b, {**repro, "formula": print_formula(phi), "world": w, "component": str(at)})
    rep.wall_time = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# root formula truth vs fibred classification


def theorem1_formula(fnet: FibredNetwork, offset=None):
    phi = characteristic_formula(CharacteristicPredicate(fnet.root_instance, offset))
    return psi_formula(phi, fnet.architecture)


def theorem1_truth(fnet: FibredNetwork, x, psi, tie_break: str = "least", offset=None) -> bool:
    C = build_compatible(fnet, x, offset=offset)
    root = fnet.architecture.root
    return check_satisfaction(C.model, (ComponentId(root, IN), C.root_world(root)), psi, tie_break)


def theorem1_mismatch(fnet: FibredNetwork, x) -> bool:
    try:
        psi = theorem1_formula(fnet)
        return theorem1_truth(fnet, x, psi) != classify_fibred(fnet, x)
    except FibrelabError:
        return False


def _drop_subtree(fnet: FibredNetwork, child: str) -> FibredNetwork:
    arch = fnet.architecture
    gone = set(arch.subtree(child).nodes())
    sub = FibringArchitecture(
        arch.root,
        {v: a for v, a in arch.node_arch.items() if v not in gone},
        {e: lab for e, lab in arch.edges.items() if e[1] not in gone},
    )
    return FibredNetwork(fnet.root_instance, sub, {e: r for e, r in fnet.rules.items() if e[1] not in gone})


def _with_root(fnet: FibredNetwork, root_instance) -> FibredNetwork:
    arch = fnet.architecture
    nodes = dict(arch.node_arch)
    nodes[arch.root] = root_instance.architecture
    new_arch = FibringArchitecture(arch.root, nodes, arch.edges)
    return FibredNetwork(root_instance, new_arch, fnet.rules)


def _drop_input_bit(fnet: FibredNetwork, k: int):

    inst = fnet.root_instance
    arch = inst.architecture
    if arch.input_dim < 2:
        return None
    W = inst.weights[0]
    rows = [tuple(c for j, c in enumerate(r) if j != k) for r in W.to_rows()]
    new_arch = NeuralArchitecture((arch.input_dim - 1,) + arch.dims[1:], arch.activations)
    new = NetworkInstance(new_arch, (RMatrix.from_rows(rows, arch.input_dim - 1),) + inst.weights[1:], inst.biases)
    return _with_root(fnet, new)


def _shrink_coefficients(fnet: FibredNetwork):

    inst = fnet.root_instance
    for l, W in enumerate(inst.weights):
        for i, row in enumerate(W.to_rows()):
            for j, c in enumerate(row):
                for smaller in (0, 1 if c > 0 else -1):
                    if c == smaller or (c.denominator == 1 and abs(c) <= 1 and smaller != 0):
                        continue
                    rows = [list(r) for r in W.to_rows()]
                    rows[i][j] = smaller
                    weights = list(inst.weights)
                    weights[l] = RMatrix.from_rows(rows, W.cols)
                    yield _with_root(fnet, NetworkInstance(inst.architecture, tuple(weights), inst.biases))


def shrink_theorem1(fnet: FibredNetwork, x, rng, cfg: InstanceGenConfig):
    """Greedy shrinking: drop subtrees, then input bits, then root coefficient magnitudes.

    Candidates whose tables no longer cover the cube are completed with fresh
    entries; a candidate is kept only if it still fails at some cube point.
    """

    def still_fails(cand):
        try:
            cand = complete_tables(cand, table_filler_for(cand, rng, cfg))
        except (FibrelabError, RuntimeError):
            return None
        for z in cube_points(cand.input_dim):
            if theorem1_mismatch(cand, z):
                return cand, z
        return None

    changed = True
    while changed:
        changed = False
        for child in sorted(fnet.architecture.nodes()[1:], key=lambda c: -len(fnet.architecture.subtree(c).nodes())):
            hit = still_fails(_drop_subtree(fnet, child))
            if hit:
                (fnet, x), changed = hit, True
                break
        if changed:
            continue
        for k in range(fnet.input_dim):
            cand = _drop_input_bit(fnet, k)
            hit = still_fails(cand) if cand is not None else None
            if hit:
                (fnet, x), changed = hit, True
                break
        if changed:
            continue
        for cand in _shrink_coefficients(fnet):
            hit = still_fails(cand)
            if hit:
                (fnet, x), changed = hit, True
                break
    return fnet, x


def _thm1_repro(fnet, x, psi) -> dict:
    return {"kind": "thm1", "fibred": ser.encode_fibred(fnet), "x": ser.encode_vector(x), "formula": print_formula(psi)}


def _theorem1_population(rep: VerificationReport, cfg: InstanceGenConfig, cases: int, suite: str, name: str, shrink: bool):
    pop = rep.population(name)
    for i in range(cases):
        rng = case_rng(cfg.seed, suite, i)
        fnet = random_fibred(rng, cfg)
        rep.cases += 1
        pop["cases"] += 1
        psi = theorem1_formula(fnet)
        first_bad = None
        for x in cube_points(fnet.input_dim):
            rep.checks += 1
            pop["checks"] += 1
            expected = classify_fibred(fnet, x)
            got = {t: theorem1_truth(fnet, x, psi, t) for t in TIE_BREAKS}
            if got["least"] != got["greatest"]:
                rep.divergences.append({"population": name, "case": i, "x": format_vector(x),
                                        "least": got["least"], "greatest": got["greatest"]})
            if got["least"] != expected and first_bad is None:
                first_bad = (x, expected, got["least"])
        if first_bad is not None:
            x, expected, got = first_bad
            small, sx = (fnet, x)
            if shrink:
                small, sx = shrink_theorem1(fnet, x, case_rng(cfg.seed, "shrink-" + suite, i), cfg)
            spsi = theorem1_formula(small)
            rep.fail(name, i, expected, got, _thm1_repro(small, sx, spsi),
                     x=format_vector(x), shrunk_nodes=len(small.architecture.nodes()), shrunk_n=small.input_dim)


def verify_theorem1(cfg: InstanceGenConfig, cases: int, shrink: bool = True, non_f_cases: int = 0) -> VerificationReport:
    """``cases`` networks with class-F roots (population "fibred"), then ``non_f_cases``
    networks with unrestricted roots (population "fibred-non-F")."""
    start = time.perf_counter()
    rep = VerificationReport("thm1", cfg.seed)
    _theorem1_population(rep, cfg, cases, "fibred", "fibred", shrink)
    if non_f_cases:
        free = InstanceGenConfig.from_dict({**cfg.to_dict(), "class_f_root": False})
        _theorem1_population(rep, free, non_f_cases, "fibred-non-F", "fibred-non-F", shrink)
    rep.wall_time = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# extracted formula vs graph-network classification


def check_theorem3(compiled, features, expected: bool) -> tuple[bool, bool]:
    psi = extract_theorem3_formula(compiled)
    fnet = compiled.fibred(features)
    x = compiled.root_input(features)
    got = theorem1_truth(fnet, x, psi, offset=compiled.offset)
    return expected, got


def verify_theorem3(cfg: InstanceGenConfig, gnn_cases: int, transformer_cases: int, max_layers: int | None = None) -> VerificationReport:
    """GNN graphs and Transformer sequences are kept within ``cfg.max_bits`` feature bits
    so that every assignment is enumerated."""
    start = time.perf_counter()
    rep = VerificationReport("thm3", cfg.seed)
    layers = cfg.max_layers if max_layers is None else min(max_layers, cfg.max_layers)
    for i in range(gnn_cases):
        rng = case_rng(cfg.seed, "thm3-gnn", i)
        inst = random_gnn(rng, cfg, d_out=1, layers=rng.randint(1, layers))
        d0 = inst.dims[0]
        nv = rng.randint(1, max(1, min(cfg.max_nodes, cfg.max_bits // d0)))
        graph = random_graph(rng, cfg, d0, nodes=nv)
        u = rng.choice(graph.nodes)
        compiled = compile_network(inst, graph, u, GNN)
        psi = extract_theorem3_formula(compiled)
        rep.cases += 1
        pop = rep.population(GNN)
        pop["cases"] += 1
        bad = None
        for feats in all_assignments(graph.nodes, d0):
            rep.checks += 1
            pop["checks"] += 1
            g = graph.with_features(feats)
            expected = classify_node(inst, g, u)
            got = theorem1_truth(compiled.fibred(feats), compiled.root_input(feats), psi)
            if got != expected and bad is None:
                bad = (g, expected, got)
        if bad is not None:
            g, expected, got = bad
            repro = {"kind": "thm3", "mode": GNN, "network": ser.encode_gnn(inst), "graph": ser.encode_graph(g),
                     "vertex": u, "formula": print_formula(psi)}
            rep.fail(GNN, i, expected, got, repro)
    for i in range(transformer_cases):
        rng = case_rng(cfg.seed, "thm3-transformer", i)
        inst = random_gnn(rng, cfg, attention=True, d_out=1, layers=rng.randint(1, layers))
        d0 = inst.dims[0]
        s = rng.randint(1, max(1, min(cfg.max_seq_len, cfg.max_bits // d0)))
        base = random_sequence(rng, cfg, d0, length=s)
        t = rng.randrange(s)
        compiled = compile_transformer(inst, base, t)
        psi = extract_theorem3_formula(compiled)
        rep.cases += 1
        pop = rep.population(TRANSFORMER)
        pop["cases"] += 1
        bad = None
        for vecs in all_assignments(base.tokens, d0):
            rep.checks += 1
            pop["checks"] += 1
            seq = TokenSequence(base.tokens, vecs)
            expected = classify_token(inst, seq, t)
            feats = token_features(seq)
            got = theorem1_truth(compiled.fibred(feats), compiled.root_input(feats), psi, offset=compiled.offset)
            if got != expected and bad is None:
                bad = (seq, expected, got)
        if bad is not None:
            seq, expected, got = bad
            repro = {"kind": "thm3", "mode": TRANSFORMER, "network": ser.encode_gnn(inst),
                     "sequence": ser.encode_sequence(seq), "vertex": str(t), "formula": print_formula(psi)}
            rep.fail(TRANSFORMER, i, expected, got, repro)
    rep.wall_time = time.perf_counter() - start
    return rep


# ---------------------------------------------------------------------------
# repro replay


def replay(repro: dict) -> dict:
    """Re-run a repro; ``failing`` is True when the counterexample still stands."""
    kind = repro.get("kind")
    if kind == "thm2":
        inst = ser.decode_gnn(repro["network"])
        if "sequence" in repro:
            graph = ser.decode_sequence(repro["sequence"]).to_graph()
        else:
            graph = ser.decode_graph(repro["graph"])
        expected, got = check_theorem2(inst, graph, repro["vertex"], repro["mode"])
        return {"failing": expected != got, "expected": format_vector(expected), "got": format_vector(got)}
    if kind == "thm1":
        fnet = ser.decode_fibred(repro["fibred"])
        x = ser.decode_vector(repro["x"])
        psi = theorem1_formula(fnet)
        expected = classify_fibred(fnet, x)
        got = theorem1_truth(fnet, x, psi)
        return {"failing": expected != got, "expected": expected, "got": got, "formula": print_formula(psi)}
    if kind == "thm3":
        inst = ser.decode_gnn(repro["network"])
        u = repro["vertex"]
        if "sequence" in repro:
            seq = ser.decode_sequence(repro["sequence"])
            compiled = compile_transformer(inst, seq, int(u))
            feats = token_features(seq)
            expected = classify_token(inst, seq, int(u))
        else:
            graph = ser.decode_graph(repro["graph"])
            compiled = compile_network(inst, graph, u, GNN)
            feats = graph.features
            expected = classify_node(inst, graph, u)
        psi = extract_theorem3_formula(compiled)
        got = theorem1_truth(compiled.fibred(feats), compiled.root_input(feats), psi, offset=compiled.offset)
        return {"failing": expected != got, "expected": expected, "got": got, "formula": print_formula(psi)}
    if kind == "prop1":
        fnet = ser.decode_fibred(repro["fibred"])
        x = ser.decode_vector(repro["x"])
        report = check_compatibility(build_compatible(fnet, x), fnet, x)
        return {"failing": not report.ok, "violations": [f"{r.condition}@{r.scope}" for r in report.failures]}
    raise ValueError(f"unknown repro kind {kind!r}")
