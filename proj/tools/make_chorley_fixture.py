#!/usr/bin/env python3
"""Write a stand-in Chorley-Ribble case-control fixture to data/chorley/.

The original coordinates are not redistributable here, so this draws a
synthetic region of the same size and location (British National Grid, km)
with the documented counts: 978 lung cancer controls and 58 larynx cancer
cases, a disused incinerator at (354.5, 413.6) and a four-case cluster near
it. Coordinates are rounded to 0.1 km. Output is fixed by the seed.
"""

import argparse
import json
from pathlib import Path

import numpy as np
from shapely.geometry import Point, Polygon

CENTRE = np.array([355.0, 421.6])
INCINERATOR = (354.5, 413.6)
N_CONTROLS = 978
N_CASES = 58
N_CLUSTER = 4
# Town centres (km) with relative weight and spread of the population.
TOWNS = [
    ((354.0, 428.5), 0.30, 1.6),  # south Preston
    ((354.8, 422.0), 0.22, 1.3),  # Leyland
    ((358.6, 417.6), 0.28, 1.4),  # Chorley
    ((349.5, 419.5), 0.06, 1.2),
    ((361.5, 424.5), 0.06, 1.2),
]
BACKGROUND = 0.08


def boundary(rng):
    angles = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)
    radius = np.full_like(angles, 10.6)
    for k in (2, 3, 5):
        radius += rng.normal(0.0, 0.45) * np.cos(k * angles + rng.uniform(0, 2 * np.pi))
    # Squash slightly so the box is about 23 x 22 km.
    x = CENTRE[0] + 1.05 * radius * np.cos(angles)
    y = CENTRE[1] + radius * np.sin(angles)
    return Polygon(np.round(np.column_stack([x, y]), 2))


def population(rng, poly, n):
    weights = np.array([w for _, w, _ in TOWNS] + [BACKGROUND])
    weights /= weights.sum()
    minx, miny, maxx, maxy = poly.bounds
    out = []
    while len(out) < n:
        k = rng.choice(len(weights), p=weights)
        if k == len(TOWNS):
            p = rng.uniform([minx, miny], [maxx, maxy])
        else:
            p = rng.normal(TOWNS[k][0], TOWNS[k][2])
        p = np.round(p, 1)
        if poly.contains(Point(p)):
            out.append(p)
    return np.array(out)


def cluster(rng, poly, n):
    out = []
    while len(out) < n:
        p = np.round(rng.normal(INCINERATOR, 0.4), 1)
        if poly.contains(Point(p)):
            out.append(p)
    return np.array(out)


def write_csv(path, pts):
    with open(path, "w") as f:
        f.write("x,y\n")
        for x, y in pts:
            f.write(f"{x:.1f},{y:.1f}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "chorley"))
    ap.add_argument("--seed", type=int, default=19900101)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    poly = boundary(rng)
    assert poly.is_valid and poly.contains(Point(INCINERATOR))
    controls = population(rng, poly, N_CONTROLS)
    cases = np.vstack([population(rng, poly, N_CASES - N_CLUSTER), cluster(rng, poly, N_CLUSTER)])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ring = [list(c) for c in poly.exterior.coords]
    geo = {
        "type": "FeatureCollection",
        "features": [{"type": "Feature", "properties": {"name": "chorley"},
                      "geometry": {"type": "Polygon", "coordinates": [ring]}}],
    }
    (out / "boundary.geojson").write_text(json.dumps(geo, indent=1) + "\n")
    write_csv(out / "lung.csv", controls)
    write_csv(out / "larynx.csv", cases)
    (out / "incinerator.csv").write_text(f"x,y\n{INCINERATOR[0]},{INCINERATOR[1]}\n")
    minx, miny, maxx, maxy = poly.bounds
    print(f"boundary {maxx - minx:.1f} x {maxy - miny:.1f} km, area {poly.area:.1f} km2; "
          f"{len(controls)} controls, {len(cases)} cases")


if __name__ == "__main__":
    main()
