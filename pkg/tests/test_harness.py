import dataclasses

from fibrelab import serialize as ser
from fibrelab.compiler import GNN
from fibrelab.fibred import ConstantRule, FibredNetwork
from fibrelab.harness.generate import InstanceGenConfig, case_rng, random_fibred, random_gnn, random_graph
from fibrelab.harness.verify import replay, verify_prop1, verify_theorem1, verify_theorem2


def test_same_seed_same_stream():
    a = [ser.dumps(ser.encode_fibred(random_fibred(case_rng(5, "fibred", i), InstanceGenConfig()))) for i in range(5)]
    b = [ser.dumps(ser.encode_fibred(random_fibred(case_rng(5, "fibred", i), InstanceGenConfig()))) for i in range(5)]
    assert a == b
    c = [ser.dumps(ser.encode_fibred(random_fibred(case_rng(6, "fibred", i), InstanceGenConfig()))) for i in range(5)]
    assert a != c


def test_bounds_respected():
    cfg = InstanceGenConfig(max_layers=1, max_dim=1, max_nodes=2)
    for i in range(30):
        rng = case_rng(1, "bounds", i)
        inst = random_gnn(rng, cfg)
        g = random_graph(rng, cfg, inst.dims[0])
        assert inst.depth == 1 and max(inst.dims) == 1 and len(g.nodes) <= 2
        for m in inst.A + inst.B:
            for row in m.to_rows():
                assert all(-2 <= c <= 2 and c.denominator in (1, 2) for c in row)
        fnet = random_fibred(rng, InstanceGenConfig())
        assert fnet.input_dim <= 4 and fnet.architecture.depth() <= 2


def test_compiler_soundness_passes_and_mutation_is_caught():
    cfg = InstanceGenConfig(seed=3)
    assert verify_theorem2(cfg, 10, modes=(GNN,)).passed

    def corrupt(fnet: FibredNetwork) -> FibredNetwork:
        rules = dict(fnet.rules)
        for e, r in sorted(rules.items()):
            if isinstance(r, ConstantRule) and r.input:
                rules[e] = ConstantRule(r.instance, tuple(c + 5 for c in r.input))
        return dataclasses.replace(fnet, rules=rules)

    rep = verify_theorem2(cfg, 10, modes=(GNN,), mutate=corrupt)
    assert not rep.passed
    f = rep.failures[0]
    assert f["expected"] != f["got"] and f["repro"]["kind"] == "thm2"
    assert replay(f["repro"])["failing"] is False  # the repro holds the clean instance


def test_compatible_model_suite_passes():
    rep = verify_prop1(InstanceGenConfig(seed=9), 10)
    assert rep.passed and rep.checks > 10


def test_root_formula_single_node_case():
    cfg = InstanceGenConfig(seed=2, max_tree_depth=0)
    rep = verify_theorem1(cfg, 10)
    assert rep.passed and rep.cases == 10


def test_reports_are_deterministic():
    cfg = InstanceGenConfig(seed=4)
    assert verify_prop1(cfg, 5).to_json() == verify_prop1(cfg, 5).to_json()
    assert verify_theorem1(cfg, 5).to_json() == verify_theorem1(cfg, 5).to_json()


def test_root_formula_repros_replay(tmp_path):
    rep = verify_theorem1(InstanceGenConfig(seed=0), 8)
    rep.write(tmp_path)
    for f in rep.failures:
        assert replay(f["repro"])["failing"]
        assert (tmp_path / f["repro_path"]).exists()


def test_root_formula_reports_unrestricted_roots_separately():
    rep = verify_theorem1(InstanceGenConfig(seed=3), 4, non_f_cases=4)
    assert rep.populations["fibred"]["cases"] == 4
    assert rep.populations["fibred-non-F"]["cases"] == 4
    for f in rep.failures:
        assert replay(f["repro"])["failing"]
