"""Slow, independent reference implementations used only by the tests.

Each oracle follows the textbook definition as directly as possible (loops,
enumeration, closed forms) and shares no code with the package beyond the
data types.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


# -- geometry ------------------------------------------------------------------


def tri_hit(origin, direction, a, b, c, eps=1e-15):
    """Ray parameter of a hit on triangle abc, or None (plain barycentric solve)."""
    m = np.column_stack([b - a, c - a, -direction])
    if abs(np.linalg.det(m)) < eps:
        return None
    u, v, t = np.linalg.solve(m, origin - a)
    if u >= 0 and v >= 0 and u + v <= 1 and t > 1e-12:
        return float(t)
    return None


def brute_first_hit(origin, direction, tri_points):
    """Exhaustive scan over every triangle."""
    best = None
    for a, b, c in tri_points:
        t = tri_hit(origin, direction, a, b, c)
        if t is not None and (best is None or t < best):
            best = t
    return best


def tilted_cylinder_half_angle(radius, height):
    """Tilt at which the free surface runs from one rim edge through the
    center to the opposite base edge: the cylinder then holds half."""
    return math.atan2(height, 2 * radius)


def convex_prism_regions(camera, polygon, height):
    """Region labels for an upright convex prism (polygon base, z in [0, height])
    by slab clipping each pixel ray against the prism's half-spaces.

    Inner: the ray enters through the top face going down. Outer: it
    enters through any other face. Neither: it misses.
    """
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    # outward half-spaces n.x <= d
    planes = [(np.array([0.0, 0.0, -1.0]), 0.0, "bottom"), (np.array([0.0, 0.0, 1.0]), height, "top")]
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        edge = q - p
        nrm = np.array([edge[1], -edge[0], 0.0])
        nrm /= np.linalg.norm(nrm)
        planes.append((nrm, float(nrm[:2] @ p), f"side{i}"))
    labels = np.zeros(camera.shape, dtype=np.uint8)
    origin = camera.position
    for v in range(camera.height):
        for u in range(camera.width):
            d = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
            d = camera.rotation @ d
            d /= np.linalg.norm(d)
            t_in, t_out, face = 0.0, np.inf, None
            ok = True
            for nrm, dist, name in planes:
                denom = nrm @ d
                num = dist - nrm @ origin
                if abs(denom) < 1e-15:
                    if num < 0:
                        ok = False
                        break
                    continue
                t = num / denom
                if denom < 0:  # entering
                    if t > t_in:
                        t_in, face = t, name
                elif t < t_out:
                    t_out = t
            if not ok or t_in > t_out or face is None:
                continue
            labels[v, u] = 1 if face == "top" else 2
    return labels


# -- filter --------------------------------------------------------------------


def all_paths(n_bins, steps):
    return itertools.product(range(n_bins), repeat=steps)


def path_weight(path, likes, trans, init):
    w = init[path[0]] * likes[0][path[0]]
    for t in range(1, len(path)):
        w *= trans[path[t - 1], path[t]] * likes[t][path[t]]
    return w


def brute_marginals(likes, trans, init):
    """Filtered marginals P(v_t | z_1..t) by summing over every state path."""
    n = len(init)
    out = []
    for t in range(1, len(likes) + 1):
        m = np.zeros(n)
        for path in all_paths(n, t):
            m[path[-1]] += path_weight(path, likes[:t], trans, init)
        out.append(m / m.sum())
    return out


def brute_viterbi(likes, trans, init):
    """Best path by enumeration; ties go to the lexicographically smallest
    path read from the last step backwards (lowest terminal bin first)."""
    n = len(init)
    best, best_w = None, -1.0
    for path in all_paths(n, len(likes)):
        w = path_weight(path, likes, trans, init)
        if w > best_w:
            best, best_w = path, w
    return list(best), best_w


# -- observation ---------------------------------------------------------------


def loglik_by_pixels(obs, exp, table):
    """Per-pixel sum in the definition's order (liquid = True)."""
    total = 0.0
    for o, e in zip(obs, exp):
        if e:
            p = table.liquid_given_liquid if o else table.not_liquid_given_liquid
        else:
            p = table.liquid_given_not_liquid if o else table.not_liquid_given_not_liquid
        total += math.log(p)
    return total


# -- baseline ------------------------------------------------------------------


def isotonic_brute(y, w=None):
    """Least-squares non-decreasing fit from the min-max formula:
    fit[i] = max over a <= i of min over b >= i of the weighted mean of y[a..b]."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    n = len(y)
    fit = np.empty(n)
    for i in range(n):
        fit[i] = max(
            min(np.sum(w[a : b + 1] * y[a : b + 1]) / np.sum(w[a : b + 1]) for b in range(i, n))
            for a in range(i + 1)
        )
    return fit
