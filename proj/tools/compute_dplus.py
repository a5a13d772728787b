#!/usr/bin/env python3
"""Density of the tetrahedral cone: area of T cap B(0, 1).

Each of the six faces is the planar cone over the arc between two tetrahedron
vertices, so the exact area is 6 * (1/2) * acos(-1/3). The Monte Carlo
estimate samples the bounding square of each face plane and counts points
that are non-negative combinations of the two vertices inside the unit disk.
"""
import argparse
import math

import numpy as np


def vertices():
    s2, s6 = math.sqrt(2.0), math.sqrt(6.0)
    return np.array([[1.0, 0.0, 0.0],
                     [-1.0 / 3, 2 * s2 / 3, 0.0],
                     [-1.0 / 3, -s2 / 3, s6 / 3],
                     [-1.0 / 3, -s2 / 3, -s6 / 3]])


def monte_carlo(samples, seed):
    rng = np.random.default_rng(seed)
    A = vertices()
    faces = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    per_face = samples // len(faces)
    total = 0.0
    for i, j in faces:
        e1 = A[i]
        e2 = A[j] - A[j].dot(e1) * e1
        e2 /= np.linalg.norm(e2)
        # vertices in the (e1, e2) frame
        M = np.array([[A[i].dot(e1), A[j].dot(e1)], [A[i].dot(e2), A[j].dot(e2)]])
        Minv = np.linalg.inv(M)
        hits = 0
        done = 0
        while done < per_face:
            n = min(1_000_000, per_face - done)
            p = rng.uniform(-1.0, 1.0, size=(2, n))
            st = Minv @ p
            inside = (st[0] >= 0) & (st[1] >= 0) & (p[0] ** 2 + p[1] ** 2 <= 1.0)
            hits += int(inside.sum())
            done += n
        total += 4.0 * hits / per_face
    return total


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()
    exact = 3.0 * math.acos(-1.0 / 3.0)
    mc = monte_carlo(args.samples, args.seed)
    print(f"quadrature  {exact:.15f}")
    print(f"monte_carlo {mc:.6f}  (rel. diff {abs(mc - exact) / exact:.2e}, {args.samples} samples)")


if __name__ == "__main__":
    main()
