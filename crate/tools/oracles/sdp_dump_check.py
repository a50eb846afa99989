"""Solve an SDP text dump with cvxpy: maximize the uniform diagonal slack t.

usage: python3 sdp_dump_check.py problem.sdp [trace_bound]
"""
import sys

import cvxpy as cp
import numpy as np


def read_dump(path):
    blocks, nfree, rows = [], 0, []
    for line in open(path):
        line = line.split("#")[0].split()
        if not line:
            continue
        if line[0] == "sdp":
            nfree = int(line[2])
        elif line[0] == "block":
            blocks.append(int(line[2]))
        elif line[0] == "row":
            rows.append({"rhs": float(line[3]), "g": [], "f": []})
        elif line[0] == "g":
            rows[int(line[1])]["g"].append((int(line[2]), int(line[3]), int(line[4]), float(line[5])))
        elif line[0] == "f":
            rows[int(line[1])]["f"].append((int(line[2]), float(line[3])))
    return blocks, nfree, rows


def main():
    blocks, nfree, rows = read_dump(sys.argv[1])
    bound = float(sys.argv[2]) if len(sys.argv) > 2 else None
    X = [cp.Variable((d, d), symmetric=True) for d in blocks]
    u = cp.Variable(nfree) if nfree else None
    t = cp.Variable()
    cons = [x - t * np.eye(x.shape[0]) >> 0 for x in X] + [t <= 1]
    for r in rows:
        lhs = 0
        for b, p, q, c in r["g"]:
            lhs = lhs + (c * X[b][p, q] if p == q else 2 * c * X[b][p, q])
        for k, c in r["f"]:
            lhs = lhs + c * u[k]
        cons.append(lhs == r["rhs"])
    if bound is not None:
        cons.append(sum(cp.trace(x) for x in X) <= bound)
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    print(prob.status, t.value)


if __name__ == "__main__":
    main()
