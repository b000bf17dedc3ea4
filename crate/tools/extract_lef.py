#!/usr/bin/env python3
"""Write a photopic luminous efficiency table as `wavelength_nm,V` CSV.

Reads the tabulated functions shipped with colour-science
(colour/colorimetry/datasets/lefs.py) without importing the package.

    python3 tools/extract_lef.py <lefs.py> "<function name>" <out.csv>
"""
import ast
import sys


def main():
    src, name, out = sys.argv[1], sys.argv[2], sys.argv[3]
    tree = ast.parse(open(src).read())
    for node in tree.body:
        target = getattr(node, "target", None) or (node.targets[0] if hasattr(node, "targets") else None)
        if getattr(target, "id", None) == "DATA_LEFS_PHOTOPIC":
            data = ast.literal_eval(node.value)
            break
    else:
        raise SystemExit("DATA_LEFS_PHOTOPIC not found")
    table = data[name]
    with open(out, "w") as f:
        f.write("wavelength_nm,V\n")
        for wl in sorted(table):
            f.write(f"{wl},{table[wl]:.9g}\n")
    print(f"{name}: {len(table)} rows, {min(table)}-{max(table)} nm")


if __name__ == "__main__":
    main()
