#!/usr/bin/env python3
"""Convert an AUCS-style multiplex edge list into the mlgraph text format.

Inputs:
  edges   one edge per line: `node node layer`, comma or whitespace separated
  groups  one node per line: `node group`; every node in `edges` needs a group

Nodes are numbered in sorted order of their identifiers. Layers are written in
the order given by --layers; `leisure` is accepted as an alias of
`friendship`. Self loops and repeated edges are dropped.

Example:
  scripts/aucs_to_mlgraph.py aucs_edgelist.txt aucs_nodelist.txt -o data/aucs.txt
"""

import argparse
import re
import sys

LAYERS = ["work", "lunch", "facebook", "friendship", "coauthor"]
ALIASES = {"leisure": "friendship"}


def rows(path):
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                yield [t for t in re.split(r"[,\s]+", line) if t]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("edges")
    ap.add_argument("groups")
    ap.add_argument("-o", "--out", required=True)
    ap.add_argument("--layers", nargs="+", default=LAYERS)
    args = ap.parse_args()

    groups = {}
    for r in rows(args.groups):
        if len(r) < 2:
            sys.exit(f"bad group line: {' '.join(r)}")
        groups[r[0]] = r[1]

    edges = {name: set() for name in args.layers}
    for r in rows(args.edges):
        if len(r) < 3:
            sys.exit(f"bad edge line: {' '.join(r)}")
        a, b, layer = r[0], r[1], ALIASES.get(r[2], r[2])
        if layer not in edges:
            sys.exit(f"unknown layer {r[2]!r}; expected one of {args.layers}")
        if a != b:
            edges[layer].add((a, b))

    nodes = sorted(groups)
    index = {v: i for i, v in enumerate(nodes)}
    missing = {v for pairs in edges.values() for e in pairs for v in e} - index.keys()
    if missing:
        sys.exit(f"nodes without a group: {sorted(missing)}")
    names = sorted(set(groups.values()))
    label = {g: i for i, g in enumerate(names)}

    with open(args.out, "w", encoding="utf-8") as f:
        f.write(f"nodes {len(nodes)}\n")
        f.write("ids " + " ".join(nodes) + "\n")
        f.write("labels " + " ".join(str(label[groups[v]]) for v in nodes) + "\n")
        for name in args.layers:
            f.write(f"layer {name}\n")
            pairs = sorted({tuple(sorted((index[a], index[b]))) for a, b in edges[name]})
            for i, j in pairs:
                f.write(f"edge {i} {j}\n")
    print(f"{len(nodes)} nodes, {len(args.layers)} layers, {len(names)} groups -> {args.out}")


if __name__ == "__main__":
    main()
