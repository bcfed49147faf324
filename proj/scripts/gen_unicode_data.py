#!/usr/bin/env python3
"""Generates include/halknob/unicode_data.hpp from Python's unicodedata.

Tables cover the Basic Multilingual Plane (Hangul syllables are handled
algorithmically in C++ and excluded here). Run from the repo root:

    python3 scripts/gen_unicode_data.py > include/halknob/unicode_data.hpp
"""

import sys
import unicodedata

BMP = 0x10000
HANGUL_S_BASE, HANGUL_S_COUNT = 0xAC00, 11172


def is_hangul_syllable(cp):
    return HANGUL_S_BASE <= cp < HANGUL_S_BASE + HANGUL_S_COUNT


def is_surrogate(cp):
    return 0xD800 <= cp <= 0xDFFF


def main():
    decomp_index = []   # (cp, offset, len) into decomp_pool
    decomp_pool = []
    ccc_entries = []    # (cp, combining class)
    comp_pairs = []     # (first, second, composed)
    lower_map = []      # (cp, lowercase cp)

    for cp in range(BMP):
        if is_surrogate(cp) or is_hangul_syllable(cp):
            continue
        ch = chr(cp)

        nfd = unicodedata.normalize("NFD", ch)
        if nfd != ch:
            cps = [ord(c) for c in nfd]
            decomp_index.append((cp, len(decomp_pool), len(cps)))
            decomp_pool.extend(cps)

        ccc = unicodedata.combining(ch)
        if ccc != 0:
            ccc_entries.append((cp, ccc))

        raw = unicodedata.decomposition(ch)
        if raw and not raw.startswith("<"):
            parts = [int(p, 16) for p in raw.split()]
            if len(parts) == 2:
                a, b = parts
                if (
                    unicodedata.combining(chr(a)) == 0
                    and unicodedata.normalize("NFC", chr(a) + chr(b)) == ch
                ):
                    comp_pairs.append((a, b, cp))

        low = ch.lower()
        if len(low) == 1 and low != ch:
            lower_map.append((cp, ord(low)))

    def category_ranges(pred):
        ranges = []
        start = None
        for cp in range(BMP):
            ok = (not is_surrogate(cp)) and pred(unicodedata.category(chr(cp)))
            if ok and start is None:
                start = cp
            elif not ok and start is not None:
                ranges.append((start, cp - 1))
                start = None
        if start is not None:
            ranges.append((start, BMP - 1))
        return ranges

    punct_ranges = category_ranges(lambda c: c[0] in "PS")
    space_ranges = category_ranges(lambda c: c[0] == "Z")

    comp_pairs.sort()

    w = sys.stdout.write
    w("// Generated by scripts/gen_unicode_data.py (Unicode %s). Do not edit.\n"
      % unicodedata.unidata_version)
    w("#pragma once\n\n#include <cstdint>\n\n")
    w("namespace halknob::unicode_data {\n\n")

    w("struct DecompEntry { char32_t cp; uint32_t offset; uint8_t len; };\n")
    w("struct CccEntry { char32_t cp; uint8_t ccc; };\n")
    w("struct CompEntry { char32_t first; char32_t second; char32_t composed; };\n")
    w("struct MapEntry { char32_t cp; char32_t to; };\n")
    w("struct Range { char32_t lo; char32_t hi; };\n\n")

    def emit(name, typ, rows, fmt):
        w("inline constexpr %s %s[] = {\n" % (typ, name))
        line = []
        for r in rows:
            line.append(fmt(r))
            if len(line) == 6:
                w("    " + ", ".join(line) + ",\n")
                line = []
        if line:
            w("    " + ", ".join(line) + ",\n")
        w("};\n")
        w("inline constexpr uint32_t %s_size = %d;\n\n" % (name, len(rows)))

    emit("kDecompIndex", "DecompEntry", decomp_index,
         lambda r: "{0x%04X,%d,%d}" % r)
    emit("kDecompPool", "char32_t", decomp_pool, lambda r: "0x%04X" % r)
    emit("kCcc", "CccEntry", ccc_entries, lambda r: "{0x%04X,%d}" % r)
    emit("kComp", "CompEntry", comp_pairs, lambda r: "{0x%04X,0x%04X,0x%04X}" % r)
    emit("kLower", "MapEntry", lower_map, lambda r: "{0x%04X,0x%04X}" % r)
    emit("kPunctRanges", "Range", punct_ranges, lambda r: "{0x%04X,0x%04X}" % r)
    emit("kSpaceRanges", "Range", space_ranges, lambda r: "{0x%04X,0x%04X}" % r)

    w("}  // namespace halknob::unicode_data\n")


if __name__ == "__main__":
    main()
