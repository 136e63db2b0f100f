"""Regenerate data/chips.tsv from the Munsell renotation data in colour-science.

The table approximates the 330-chip naming grid: column 0 holds the ten
neutral chips (N9.5, N9 .. N2, N1.5) in rows A-J, columns 1-40 hold hues
2.5R .. 10RP at values 9 .. 2 (rows B-I), each at the highest renotation
chroma available for that hue/value, capped per value level to stay close
to the printed-chip gamut.

CIELAB is computed relative to illuminant C (the renotation illuminant).

    pip install colour-science
    python3 scripts/gen_chip_table.py > data/chips.tsv
"""
import colour
import numpy as np
from colour.notation.datasets.munsell import MUNSELL_COLOURS_REAL
from colour.notation.munsell import luminance_ASTMD1535

HUE_FAMILIES = ["R", "YR", "Y", "GY", "G", "BG", "B", "PB", "P", "RP"]
HUES = [f"{step}{fam}" for fam in HUE_FAMILIES for step in ("2.5", "5", "7.5", "10")]
ROWS = "ABCDEFGHIJ"
NEUTRAL_VALUES = [9.5, 9, 8, 7, 6, 5, 4, 3, 2, 1.5]
CHROMA_CAP = {9: 12, 8: 14, 7: 14, 6: 14, 5: 14, 4: 12, 3: 10, 2: 8}

WHITE_C = colour.xy_to_XYZ(np.array([0.31006, 0.31616]))


def lab_from_xyY(x, y, Y):
    XYZ = colour.xyY_to_XYZ(np.array([x, y, Y / 100.0]))
    return colour.XYZ_to_Lab(XYZ, colour.XYZ_to_xy(WHITE_C))


def main():
    table = {}
    for (hue, value, chroma), xyY in MUNSELL_COLOURS_REAL:
        table.setdefault((hue, float(value)), []).append((float(chroma), xyY))

    print("index\trow\tcol\tL\ta\tb")
    index = 0
    for r, row in enumerate(ROWS):
        value = NEUTRAL_VALUES[r]
        Y = float(luminance_ASTMD1535(value))
        # neutral chips sit on the achromatic axis
        XYZ = WHITE_C * (Y / 100.0)
        L = float(colour.XYZ_to_Lab(XYZ, colour.XYZ_to_xy(WHITE_C))[0])
        print(f"{index}\t{row}\t0\t{L:.4f}\t0.0000\t0.0000")
        index += 1
        if row in ("A", "J"):
            continue
        for c, hue in enumerate(HUES, start=1):
            entries = [e for e in table.get((hue, float(value)), []) if e[0] <= CHROMA_CAP[int(value)]]
            chroma, xyY = max(entries, key=lambda e: e[0])
            L, a, b = lab_from_xyY(*xyY)
            print(f"{index}\t{row}\t{c}\t{L:.4f}\t{a:.4f}\t{b:.4f}")
            index += 1
    assert index == 330, index


if __name__ == "__main__":
    main()
