#!/usr/bin/env python3
"""Regenerates the manifold fixtures in data/.

Level offsets are solved from the crossing fields so that every declared B0 is
the exact intersection of its two lines.
"""
import json
import pathlib

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


def level(lid, l, nu, e0, mu, f1=2, f2=2, F=2):
    return {"id": lid, "labels": {"l": l, "F_tot": 2, "m_Ftot": 2, "F": F, "f1": f1, "f2": f2, "nu": nu},
            "energy_at_zero_mhz": e0, "magnetic_moment_mhz_per_g": mu}


def chain(ids, ls, nus, mus, fields, splittings, names, e0_first):
    levels, crossings = [], []
    e0 = e0_first
    for k, lid in enumerate(ids):
        levels.append(level(lid, ls[k], nus[k], e0, mus[k]))
        if k < len(fields):
            crossings.append({"id": names[k], "lower": ids[k + 1], "upper": lid,
                              "splitting_min_mhz": splittings[k], "b0_gauss": fields[k]})
            e0 = e0 + (mus[k] - mus[k + 1]) * fields[k]
    return levels, crossings


def write(name, doc):
    (DATA / name).write_text(json.dumps(doc, indent=2) + "\n")


FESHBACH_E0 = -24.0 - 3.0 * 1007.4

# crossing A alone
levels, crossings = chain(["feshbach", "s-1"], [0, 0], [-1, -2], [3.0, 0.2], [1001.4], [13.33210], ["A"],
                          FESHBACH_E0)
write("crossing_a.cfg", {"levels": levels, "crossings": crossings, "lifetime_ms": 280.0})

# A-K chain from the Feshbach level to the deep s-wave level at zero field.
ids = ["feshbach", "s-1", "d-2", "s-3", "d-4", "s-5", "d-6", "g-7", "d-8", "s-9", "s-10", "nu-5"]
ls = [0, 0, 2, 0, 2, 0, 2, 4, 2, 0, 0, 0]
nus = [-1, -2, -3, -3, -4, -4, -4, -5, -5, -5, -5, -5]
fields = [1001.4, 874.0, 845.8, 700.0, 466.1, 400.0, 350.0, 300.0, 260.0, 218.8, 60.0]
splittings = [13.33210, 7.0, 44.756, 1.0, 2.36, 0.8, 0.01, 1.2, 0.9, 110.48, 20.0]
names = list("ABCDEFGHIJK")
mus = [3.0, 5.8, 3.8, 1.8, 3.8, 1.8, 4.0, 2.0, 4.2, 2.2, 4.2]
e = FESHBACH_E0
for k in range(10):
    e += (mus[k] - mus[k + 1]) * fields[k]
mus.append(mus[10] - (-3600.0 - e) / fields[10])  # lands the last level on -3600 MHz at B = 0
levels, crossings = chain(ids, ls, nus, mus, fields, splittings, names, FESHBACH_E0)
levels[-1]["energy_at_zero_mhz"] = -3600.0
write("fig1_path.cfg", {"levels": levels, "crossings": crossings, "lifetime_ms": 280.0})

# A, then C with the d-wave crossing B sitting above it on the arrival level.
levels, crossings = chain(["feshbach", "s-1", "s-2"], [0, 0, 0], [-1, -2, -3], [3.0, 0.2, 0.5],
                          [1001.4, 845.8], [13.33210, 44.756], ["A", "C"], FESHBACH_E0)
s1 = levels[1]
d_mu = 2.2
d_e0 = s1["energy_at_zero_mhz"] + (s1["magnetic_moment_mhz_per_g"] - d_mu) * 874.0
levels.append(level("d-b", 2, -3, d_e0, d_mu, F=0))
crossings.insert(1, {"id": "B", "lower": "d-b", "upper": "s-1", "splitting_min_mhz": 7.0, "b0_gauss": 874.0})
write("crossing_bc.cfg", {"levels": levels, "crossings": crossings, "lifetime_ms": 280.0})
