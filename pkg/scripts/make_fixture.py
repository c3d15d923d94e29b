"""Regenerate the bundled plantation fixture and synthetic dataset.

The layout is a representative plantation of rectangular subsections in
rows separated by 4 m paths; subsections facing each other across a path
are neighbours.  The synthetic snapshot series is simulated from the
documented reference parameters, starting December 2014, with 38 training
months followed by 7 hold-out months.

    python scripts/make_fixture.py
"""

from pathlib import Path

import numpy as np

from sisabc.model import ParamSet, State, simulate
from sisabc.network import load_network, write_network, write_series

OUT = Path(__file__).resolve().parents[1] / "src" / "sisabc" / "data"

PATH = 4.0
WIDTH = 420.0
# (row height, block widths); widths are rescaled to fill the row
ROWS = [
    (38.0, [60, 55, 65, 50, 60, 58, 62]),
    (44.0, [70, 65, 72, 60, 75, 68]),
    (30.0, [95, 28, 28, 28, 28, 95, 90]),
    (40.0, [95, 122, 88, 90]),
    (30.0, [95, 28, 28, 28, 28, 95, 90]),
    (42.0, [55, 60, 70, 65, 60, 55, 50]),
    (36.0, [80, 70, 75, 70, 80]),
    (34.0, [50, 52, 55, 48, 56, 50, 54, 52]),
    (40.0, [60, 62, 58, 66, 60, 64, 58]),
]
# single block hanging below the bottom row: (x0, x1, height)
PENDANT = (300.0, 330.0, 20.0)
UNPLANTED = (7, 28, 52)

THETA_STAR = ParamSet(0.25, 0.30, 0.06, 0.04, 0.007, 0.006)
SEED = 20141201
START = "2014-12"
TRAIN_MONTHS = 38
HOLDOUT_MONTHS = 7
# size of the initial infected cluster, nearest the south-east corner
INITIAL_CLUSTER = 10


def layout():
    rects = []
    row_of = []
    y = 0.0
    for r, (h, widths) in enumerate(ROWS):
        w = np.array(widths, dtype=float)
        w *= (WIDTH - PATH * (len(w) - 1)) / w.sum()
        x = 0.0
        for wi in w:
            rects.append((round(x, 2), y - h, round(x + wi, 2), y))
            row_of.append(r)
            x += wi + PATH
        y -= h + PATH
    x0, x1, h = PENDANT
    rects.append((x0, y - h, x1, y))
    row_of.append(len(ROWS))
    return rects, row_of


def neighbours(rects, row_of):
    edges = []
    for i, a in enumerate(rects):
        for j in range(i + 1, len(rects)):
            b = rects[j]
            if row_of[i] == row_of[j]:
                if abs(b[0] - a[2]) <= PATH + 1e-9 or abs(a[0] - b[2]) <= PATH + 1e-9:
                    edges.append((i, j))
            elif abs(row_of[i] - row_of[j]) == 1:
                overlap = min(a[2], b[2]) - max(a[0], b[0])
                if overlap > PATH:
                    edges.append((i, j))
    return edges


def main():
    rects, row_of = layout()
    edges = neighbours(rects, row_of)
    n = len(rects)
    polys = [[(x0, y0), (x1, y0), (x1, y1), (x0, y1)] for x0, y0, x1, y1 in rects]
    meta = [(i, 0 if i in UNPLANTED else 1) for i in range(n)]
    net = load_network(edges, meta, polys)
    deg = net.degrees()
    print(f"{n} nodes, {len(edges)} edges, degree min {deg.min()} (node {deg.argmin()}) "
          f"max {deg.max()} (node {deg.argmax()})")
    print("histogram", net.degree_histogram())

    OUT.mkdir(parents=True, exist_ok=True)
    write_network(net, OUT / "fixture_edges.csv", OUT / "fixture_nodes.csv", OUT / "fixture_footprints.csv")

    centre = np.array([[(x0 + x1) / 2, (y0 + y1) / 2] for x0, y0, x1, y1 in rects])
    corner = np.array([WIDTH, centre[:, 1].min()])
    dist = np.hypot(*(centre - corner).T)
    dist[~net.planted] = np.inf
    init = np.zeros(n, dtype=bool)
    init[np.argsort(dist, kind="stable")[:INITIAL_CLUSTER]] = True
    horizon = TRAIN_MONTHS + HOLDOUT_MONTHS - 1
    traj = simulate(net, THETA_STAR, State.on(net, init), START, horizon, np.random.default_rng(SEED))
    write_series(traj.to_series(), OUT / "synthetic_snapshots.csv")
    print("infected per month", traj.states.sum(axis=0).tolist())

    # scattered infection coordinates for the first six snapshots
    rng = np.random.default_rng(SEED + 1)
    with open(OUT / "synthetic_points.csv", "w") as fh:
        fh.write("x,y,snapshot_index\n")
        for t in range(6):
            for v in np.flatnonzero(traj.states[:, t]):
                x0, y0, x1, y1 = rects[v]
                for _ in range(rng.integers(1, 4)):
                    px = rng.uniform(x0 + 0.5, x1 - 0.5)
                    py = rng.uniform(y0 + 0.5, y1 - 0.5)
                    fh.write(f"{px:.2f},{py:.2f},{t}\n")
        # two stray points on paths, outside every subsection
        fh.write(f"{rects[0][2] + 2.0:.2f},{rects[0][1] + 5.0:.2f},0\n")
        fh.write(f"{-10.0:.2f},{-10.0:.2f},3\n")


if __name__ == "__main__":
    main()
