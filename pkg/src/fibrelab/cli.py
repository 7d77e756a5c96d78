"""Command-line interface: ``fibrelab eval|compile|model-check|build-compatible|verify``.

Exit codes: 0 pass, 1 counterexample or violation, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from fibrelab import serialize as ser
from fibrelab.compatible import build_compatible, check_compatibility
from fibrelab.compiler import GAT, GNN, MODES, TRANSFORMER, compile_network, compile_transformer, token_features
from fibrelab.dot import fibring_dot, model_dot, unravel_dot
from fibrelab.errors import FibrelabError
from fibrelab.extraction import extract_theorem3_formula
from fibrelab.fibred import evaluate_fibred
from fibrelab.graphnets import forward
from fibrelab.harness.generate import InstanceGenConfig
from fibrelab.harness.verify import replay, verify_prop1, verify_theorem1, verify_theorem2, verify_theorem3
from fibrelab.linalg import format_vector, parse_rational
from fibrelab.modal import IN, ComponentId, check_satisfaction, parse_formula, print_formula

OK, COUNTEREXAMPLE, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _load(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}") from None


def _parse_vec(text: str) -> tuple:
    text = text.strip().strip("()")
    try:
        return tuple(parse_rational(p.strip()) for p in text.split(",")) if text else ()
    except ValueError as e:
        raise UsageError(str(e)) from None


def _out_dir(args) -> Path | None:
    if not args.out:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _emit(out: Path | None, name: str, text: str):
    if out is None:
        sys.stdout.write(text)
    else:
        (out / name).write_text(text)


def _component(text: str) -> ComponentId:
    node, _, layer = text.rpartition(",")
    if not node:
        raise UsageError(f"component must look like NODE,in or NODE,LAYER: {text!r}")
    return ComponentId(node, IN if layer == "in" else int(layer))


# ---------------------------------------------------------------------------
# commands


def cmd_eval(args) -> int:
    data = _load(args.file)
    if "root_instance" in data:
        if args.x is None:
            raise UsageError("--x is required for fibred networks")
        fnet = ser.decode_fibred(data)
        out, trace = evaluate_fibred(fnet, _parse_vec(args.x))
        print(f"output {format_vector(out)}")
        if len(out) == 1:
            print(f"class {str(out[0] > 0).lower()}")
        if args.emit_json:
            stages = {v: [{"child": s.child, "layer": s.layer, "x": format_vector(s.x), "y": format_vector(s.y),
                           "h": format_vector(s.h)} for s in t.stages] for v, t in trace.nodes.items()}
            _emit(_out_dir(args), "trace.json", ser.dumps(stages))
        return OK
    if "network" in data:
        inst = ser.decode_gnn(data["network"])
        graph = ser.decode_sequence(data["sequence"]).to_graph() if "sequence" in data else ser.decode_graph(data["graph"])
        res = forward(inst, graph)
        nodes = [data["vertex"]] if "vertex" in data else list(graph.nodes)
        for u in nodes:
            h = res.final_h(u)
            line = f"{u} h={format_vector(h)}"
            if len(h) == 1:
                line += f" class={str(h[0] > 0).lower()}"
            print(line)
        return OK
    raise UsageError("file is neither a fibred network nor a graph-network problem")


def _compile_from(data):
    inst = ser.decode_gnn(data["network"])
    u = str(data["vertex"])
    if "sequence" in data:
        seq = ser.decode_sequence(data["sequence"])
        return compile_transformer(inst, seq, int(u)), token_features(seq)
    graph = ser.decode_graph(data["graph"])
    mode = data.get("mode", GAT if inst.attention is not None else GNN)
    if mode not in MODES or mode == TRANSFORMER:
        raise UsageError(f"mode must be {GNN} or {GAT} for graph inputs")
    return compile_network(inst, graph, u, mode), graph.features


def cmd_compile(args) -> int:
    compiled, feats = _compile_from(_load(args.file))
    out = _out_dir(args)
    psi = extract_theorem3_formula(compiled, max_bits=args.max_cube)
    print(f"mode {compiled.mode}; {len(compiled.architecture.nodes())} tree nodes")
    if out is None or not (args.emit_json or args.emit_dot):
        print(print_formula(psi))
    if out is not None:
        (out / "formula.txt").write_text(print_formula(psi) + "\n")
    if args.emit_json:
        _emit(out, "architecture.json", ser.dumps({
            "root_instance": ser.encode_instance(compiled.root_instance),
            "architecture": ser.encode_fibring(compiled.architecture),
            "mode": compiled.mode,
            "offset": ser.encode_vector(compiled.offset) if compiled.offset is not None else None,
        }))
        _emit(out, "rules.json", ser.dumps(ser.encode_rules(compiled.rules_for(feats))))
    if args.emit_dot:
        _emit(out, "unravel.dot", unravel_dot(compiled.tree))
        _emit(out, "fibring.dot", fibring_dot(compiled.architecture))
    return OK


def cmd_model_check(args) -> int:
    data = _load(args.model)
    M = ser.decode_compatible(data).model if "sidecar" in data else ser.decode_model(data)
    phi = parse_formula(args.formula)
    comp = _component(args.component)
    if comp not in M.components:
        raise UsageError(f"model has no component {comp}")
    worlds = [args.world] if args.world else list(M.components[comp].worlds)
    for w in worlds:
        if not M.has_world(w) or M.home(w) != comp:
            raise UsageError(f"world {w!r} is not in {comp}")
        print(f"{w} {str(check_satisfaction(M, (comp, w), phi, args.tie_break)).lower()}")
    return OK


def cmd_build_compatible(args) -> int:
    fnet = ser.decode_fibred(_load(args.file))
    x = _parse_vec(args.x)
    offset = _parse_vec(args.offset) if args.offset else None
    C = build_compatible(fnet, x, offset=offset, max_bits=args.max_cube)
    report = check_compatibility(C, fnet, x)
    out = _out_dir(args)
    if args.emit_json or out is not None:
        _emit(out, "model.json", ser.dumps(ser.encode_compatible(C)))
    if args.emit_dot:
        _emit(out, "model.dot", model_dot(C.model))
        _emit(out, "fibring.dot", fibring_dot(fnet.architecture))
    for cond, (p, f) in sorted(report.summary().items()):
        print(f"{cond}: {p} passed, {f} failed", file=sys.stderr if out is None and args.emit_json else sys.stdout)
    return OK if report.ok else COUNTEREXAMPLE


def cmd_verify(args) -> int:
    if args.repro:
        res = replay(_load(args.repro))
        print(json.dumps(res, sort_keys=True, default=str))
        return COUNTEREXAMPLE if res["failing"] else OK
    cfg = InstanceGenConfig.load(args.config) if args.config else InstanceGenConfig()
    if args.seed is not None:
        cfg = InstanceGenConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    which = args.theorem
    if which == "thm2":
        rep = verify_theorem2(cfg, args.cases or 200)
    elif which == "prop1":
        rep = verify_prop1(cfg, args.cases or 50)
    elif which == "thm1":
        n = args.cases or 50
        rep = verify_theorem1(cfg, n, non_f_cases=n)
    else:
        n = args.cases or 30
        rep = verify_theorem3(cfg, n, max(1, n // 3))
    print(rep.summary_line())
    out = _out_dir(args)
    if out is not None:
        path = rep.write(out)
        print(f"report written to {path}")
    elif args.emit_json:
        sys.stdout.write(rep.to_json())
    return OK if rep.passed else COUNTEREXAMPLE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fibrelab", description="Exact fibred-network and fibred-modal-logic workbench.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help="directory for emitted artifacts")
        sp.add_argument("--emit-json", action="store_true", help="emit JSON artifacts")
        sp.add_argument("--emit-dot", action="store_true", help="emit DOT renderings")
        sp.add_argument("--max-cube", type=int, help="override the input-cube guard (default 16 bits)")

    sp = sub.add_parser("eval", help="evaluate a fibred network or a graph network")
    sp.add_argument("file")
    sp.add_argument("--x", help="input vector, e.g. 1,0,1/2")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compile", help="compile a GNN/GAT/Transformer instance and extract its formula")
    sp.add_argument("file")
    common(sp)
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("model-check", help="check a formula on a model")
    sp.add_argument("model")
    sp.add_argument("--formula", required=True)
    sp.add_argument("--component", required=True, help="NODE,in or NODE,LAYER")
    sp.add_argument("--world", help="check only this world")
    sp.add_argument("--tie-break", choices=("least", "greatest"), default="least")
    sp.set_defaults(func=cmd_model_check)

    sp = sub.add_parser("build-compatible", help="build and check the compatible model of a fibred network")
    sp.add_argument("file")
    sp.add_argument("--x", required=True)
    sp.add_argument("--offset", help="shift of the input cube")
    common(sp)
    sp.set_defaults(func=cmd_build_compatible)

    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("theorem", choices=("thm1", "thm2", "thm3", "prop1"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cases", type=int)
    sp.add_argument("--config", help="JSON generator config")
    sp.add_argument("--repro", help="replay a repro file instead of generating cases")
    common(sp)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "max_cube", None) is not None and args.max_cube < 0:
        parser.error("--max-cube must be non-negative")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"fibrelab: {e}", file=sys.stderr)
        return USAGE
    except (FibrelabError, ValueError, KeyError) as e:
        print(f"fibrelab: {type(e).__name__}: {e}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
