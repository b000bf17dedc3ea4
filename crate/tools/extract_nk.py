#!/usr/bin/env python3
"""Convert refractiveindex.info database YAML entries into `wavelength_nm,n,k` CSV files.

The database is public domain (CC0). Tabulated data is written at its native
sample points; formula entries are sampled on a regular grid over their
validity range.

    python3 tools/extract_nk.py <database-root> <out-dir> NAME=shelf/book/page.yml ...
"""
import sys
import os
import numpy as np
import yaml


def eval_formula(kind, c, wl_um):
    c = list(c) + [0.0] * 20
    lam = wl_um
    if kind == 1:
        n2 = 1 + c[0]
        for i in range(1, 17, 2):
            if c[i] != 0:
                n2 = n2 + c[i] * lam**2 / (lam**2 - c[i + 1] ** 2)
        return np.sqrt(n2)
    if kind == 2:
        n2 = 1 + c[0]
        for i in range(1, 17, 2):
            if c[i] != 0:
                n2 = n2 + c[i] * lam**2 / (lam**2 - c[i + 1])
        return np.sqrt(n2)
    if kind == 3:
        n2 = c[0] + 0 * lam
        for i in range(1, 17, 2):
            if c[i] != 0:
                n2 = n2 + c[i] * lam ** c[i + 1]
        return np.sqrt(n2)
    if kind == 4:
        n2 = c[0] + c[1] * lam ** c[2] / (lam**2 - c[3] ** c[4]) + c[5] * lam ** c[6] / (lam**2 - c[7] ** c[8])
        for i in range(9, 17, 2):
            if c[i] != 0:
                n2 = n2 + c[i] * lam ** c[i + 1]
        return np.sqrt(n2)
    if kind == 5:
        n = c[0] + 0 * lam
        for i in range(1, 17, 2):
            if c[i] != 0:
                n = n + c[i] * lam ** c[i + 1]
        return n
    if kind == 6:
        n = 1 + c[0] + 0 * lam
        for i in range(1, 17, 2):
            if c[i] != 0:
                n = n + c[i] / (c[i + 1] - lam ** -2)
        return n
    raise ValueError(f"unsupported formula {kind}")


def load(path, step_nm=5.0):
    doc = yaml.safe_load(open(path))
    n_tab = k_tab = None
    for entry in doc["DATA"]:
        t = entry["type"]
        if t == "tabulated nk":
            a = np.loadtxt(entry["data"].splitlines())
            n_tab = (a[:, 0], a[:, 1])
            k_tab = (a[:, 0], a[:, 2])
        elif t == "tabulated n":
            a = np.loadtxt(entry["data"].splitlines())
            n_tab = (a[:, 0], a[:, 1])
        elif t == "tabulated k":
            a = np.loadtxt(entry["data"].splitlines())
            k_tab = (a[:, 0], a[:, 1])
        elif t.startswith("formula"):
            lo, hi = map(float, entry["wavelength_range"].split())
            coeffs = list(map(float, str(entry["coefficients"]).split()))
            grid = np.arange(np.ceil(lo * 1000 / step_nm) * step_nm, hi * 1000 + 1e-9, step_nm) / 1000
            n_tab = (grid, eval_formula(int(t.split()[1]), coeffs, grid))
        else:
            raise ValueError(f"{path}: unsupported entry {t}")
    wl = n_tab[0]
    if k_tab is not None:
        wl = np.union1d(n_tab[0], k_tab[0])
        lo = max(n_tab[0][0], k_tab[0][0])
        hi = min(n_tab[0][-1], k_tab[0][-1])
        wl = wl[(wl >= lo) & (wl <= hi)]
        n = np.interp(wl, *n_tab)
        k = np.interp(wl, *k_tab)
    else:
        n = n_tab[1]
        k = np.zeros_like(n)
    wl_nm, idx = np.unique(np.round(wl * 1000, 6), return_index=True)
    return wl_nm, n[idx], np.clip(k[idx], 0, None)


def main():
    root, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    for spec in sys.argv[3:]:
        name, rel = spec.split("=", 1)
        wl, n, k = load(os.path.join(root, rel))
        with open(os.path.join(out, f"{name}.csv"), "w") as f:
            f.write("wavelength_nm,n,k\n")
            for a, b, c in zip(wl, n, k):
                f.write(f"{a:.6g},{b:.6g},{c:.6g}\n")
        print(f"{name}: {len(wl)} samples, {wl[0]:.1f}-{wl[-1]:.1f} nm <- {rel}")


if __name__ == "__main__":
    main()
