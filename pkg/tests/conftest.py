import math

import numpy as np
import pytest


def random_convex(rng, n=None, center=None, scale=None):
    """Vertices on a random rotated ellipse at sorted random angles (hence convex)."""
    n = n or int(rng.integers(3, 9))
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    a, b = rng.uniform(0.5, 2.0, 2) * (scale or 1.0)
    rot = rng.uniform(0, np.pi)
    c = np.asarray(center if center is not None else rng.uniform(-1, 1, 2))
    x, y = a * np.cos(ang), b * np.sin(ang)
    pts = np.stack([x * np.cos(rot) - y * np.sin(rot), x * np.sin(rot) + y * np.cos(rot)], axis=1) + c
    return pts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def square(x=0.0, y=0.0, s=1.0):
    return np.array([[x, y], [x + s, y], [x + s, y + s], [x, y + s]], dtype=float)


def ctw_from_chains(top, bottom):
    """CTW1500 order: top chain left to right, then bottom chain right to left."""
    return np.vstack([top, np.asarray(bottom)[::-1]])


def rectangle14(w=140.0, h=30.0, x0=10.0, y0=20.0):
    xs = np.linspace(x0, x0 + w, 7)
    return ctw_from_chains(np.stack([xs, np.full(7, y0)], 1), np.stack([xs, np.full(7, y0 + h)], 1))


def arc_chains(span_deg, n, r_in=60.0, r_out=100.0):
    """Concentric arc ribbon bulging upward (y down), left end first."""
    start = math.radians(180 + (180 - span_deg) / 2)
    ang = np.linspace(start, start + math.radians(span_deg), n)
    unit = np.stack([np.cos(ang), np.sin(ang)], 1)
    return unit * r_out, unit * r_in


def tight_arc14():
    return ctw_from_chains(*arc_chains(270, 7))


def arc_with_one_redundant_pair():
    top, bot = arc_chains(270, 6)
    top = np.insert(top, 3, (top[2] + top[3]) / 2, axis=0)
    bot = np.insert(bot, 3, (bot[2] + bot[3]) / 2, axis=0)
    return ctw_from_chains(top, bot)


def random_ribbon14(rng):
    """Random curved ribbon with 7 pairs along a smooth centreline."""
    t = np.linspace(0, 1, 7)
    amp = rng.uniform(-0.4, 0.4)
    freq = rng.uniform(0.3, 1.2)
    cx = t * rng.uniform(100, 300)
    cy = amp * 100 * np.sin(np.pi * freq * t)
    d = np.gradient(np.stack([cx, cy], 1), axis=0)
    n = np.stack([d[:, 1], -d[:, 0]], 1)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    hw = rng.uniform(8, 25)
    c = np.stack([cx, cy], 1) + rng.uniform(0, 200, 2)
    return ctw_from_chains(c + hw * n, c - hw * n)


# -- acceptance reporting ----------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


class criterion:
    """Time a block and record one PASS/FAIL line for it.

    A block that raises, or runs past ``budget`` seconds, is a FAIL; the
    exception propagates so pytest reports it too.
    """

    def __init__(self, label, title, budget=None):
        self.label, self.title, self.budget = label, title, budget

    def __enter__(self):
        import time

        self._t0 = time.perf_counter()
        self.detail = ""
        return self

    def __exit__(self, exc_type, exc, tb):
        import time

        elapsed = time.perf_counter() - self._t0
        over = self.budget is not None and elapsed > self.budget
        ok = exc_type is None and not over
        why = f" ({exc_type.__name__}: {exc})" if exc_type is not None else ""
        if over:
            why += f" (over {self.budget:g} s budget)"
        line = f"{'PASS' if ok else 'FAIL'} [{self.label}] {self.title} - {elapsed:.2f} s{self.detail and ' - ' + self.detail}{why}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if over and exc_type is None:
            raise AssertionError(f"criterion {self.label} took {elapsed:.1f} s, budget {self.budget:g} s")
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
