"""Independent holonomy-sum oracle for the tautological sphere bundle.

Builds the icosahedron with one round of edge-midpoint splitting, optional
barycentric refinements, and sums the Berry phases of the rank-one
projections p(x) = (1 + x . sigma) / 2 at the normalized vertex positions.
Uses numpy only.
"""

import itertools
import sys

import numpy as np


def icosphere(level):
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return [np.array(v) for v in verts], faces


def oriented_outward(tri):
    a, b, c = tri
    return np.dot(np.cross(b - a, c - a), a + b + c) > 0


def barycentric(triangles, depth):
    """Triangles as position triples (not normalized), refined `depth` times."""
    for _ in range(depth):
        out = []
        for a, b, c in triangles:
            center = (a + b + c) / 3.0
            mids = {(0, 1): (a + b) / 2, (1, 2): (b + c) / 2, (0, 2): (a + c) / 2}
            pts = (a, b, c)
            for i, j in itertools.permutations(range(3), 2):
                if i < j:
                    m = mids[(i, j)]
                    out.append((pts[i], m, center))
                    out.append((m, pts[j], center))
        triangles = out
    return triangles


def state(x):
    """Unit vector spanning the range of (1 + x . sigma) / 2."""
    x = x / np.linalg.norm(x)
    p = 0.5 * np.array([[1 + x[2], x[0] - 1j * x[1]], [x[0] + 1j * x[1], 1 - x[2]]])
    w, v = np.linalg.eigh(p)
    return v[:, np.argmax(w)]


def chern(level=1, depth=0):
    verts, faces = icosphere(level)
    tris = barycentric([tuple(verts[i] for i in f) for f in faces], depth)
    total = 0.0
    for tri in tris:
        if not oriented_outward(tri):
            tri = (tri[0], tri[2], tri[1])
        u = [state(x) for x in tri]
        loop = np.vdot(u[0], u[1]) * np.vdot(u[1], u[2]) * np.vdot(u[2], u[0])
        total += np.angle(loop)
    # Each loop phase is half the solid angle of the triangle, so the sum is
    # 2 pi over the outward-oriented sphere. Sign convention: the range of
    # p(x) counts as +1, matching rankhom.
    return total / (2.0 * np.pi)


if __name__ == "__main__":
    depth = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    print(f"{chern(1, depth):.12f}")
