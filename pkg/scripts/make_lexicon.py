"""Regenerate src/glyphpipe/data/lexicon.tsv in canonical form.

Entries are curated from the published Gardiner sign list: the full
uniliteral alphabet, common bi/triliterals, logograms, and determinatives.
Run from the repo root: python3 scripts/make_lexicon.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from glyphpipe.gardiner import Lexicon, LexiconEntry, parse_gardiner, serialize_lexicon

U, B, T, D, L = "uniliteral", "biliteral", "triliteral", "determinative", "logogram"

ENTRIES = [
    # --- uniliteral alphabet ---
    ("G1", U, "A", "Egyptian vulture"),
    ("M17", U, "i", "flowering reed"),
    ("M17a", U, "y", "pair of reeds"),
    ("Z4", U, "y", "dual stroke"),
    ("D36", U, "a", "forearm"),
    ("G43", U, "w", "quail chick"),
    ("Z7", U, "w", "coil (hieratic chick)"),
    ("D58", U, "b", "lower leg"),
    ("Q3", U, "p", "reed mat stool"),
    ("I9", U, "f", "horned viper"),
    ("G17", U, "m", "owl"),
    ("N35", U, "n", "ripple of water"),
    ("D21", U, "r", "mouth"),
    ("O4", U, "h", "reed shelter"),
    ("V28", U, "H", "twisted wick"),
    ("Aa1", U, "x", "sieve"),
    ("F32", U, "X", "animal belly with tail"),
    ("O34", U, "z", "door bolt"),
    ("S29", U, "s", "folded cloth"),
    ("N37", U, "S", "garden pool"),
    ("N29", U, "q", "sandy slope"),
    ("V31", U, "k", "basket with handle"),
    ("W11", U, "g", "jar stand"),
    ("X1", U, "t", "bread loaf"),
    ("V13", U, "T", "tethering rope"),
    ("D46", U, "d", "hand"),
    ("I10", U, "D", "cobra"),
    # --- biliterals ---
    ("D1", B, "tp", "head in profile"),
    ("D2", B, "Hr", "face"),
    ("D4", B, "ir", "eye"),
    ("D28", B, "kA", "upraised arms"),
    ("D37", B, "di", "arm offering bread"),
    ("E23", B, "rw", "recumbent lion"),
    ("E34", B, "wn", "desert hare"),
    ("F13", B, "wp", "ox horns"),
    ("F20", B, "ns", "ox tongue"),
    ("F22", B, "pH", "hindquarters of lion"),
    ("F30", B, "Sd", "water skin"),
    ("F34", B, "ib", "heart"),
    ("G14", B, "mt", "vulture"),
    ("G25", B, "Ax", "crested ibis"),
    ("G28", B, "gm", "black ibis"),
    ("G29", B, "bA", "jabiru stork"),
    ("G35", B, "aq", "cormorant"),
    ("G36", B, "wr", "swallow"),
    ("G38", B, "gb", "white-fronted goose"),
    ("G39", B, "zA", "pintail duck"),
    ("G40", B, "pA", "pintail duck flying"),
    ("G21", B, "nH", "guinea fowl"),
    ("H6", B, "Sw", "feather"),
    ("I6", B, "km", "crocodile hide"),
    ("K1", B, "in", "bulti fish"),
    ("L2", B, "bi", "honey bee"),
    ("M2", B, "Hn", "herb"),
    ("M3", B, "xt", "branch"),
    ("M12", B, "xA", "lotus plant (1000)"),
    ("M23", B, "sw", "sedge plant"),
    ("M36", B, "Dr", "bundle of flax"),
    ("N16", B, "tA", "flat land with grains"),
    ("N18", B, "iw", "sandy island"),
    ("N28", B, "xa", "hill of sunrise"),
    ("N36", B, "mr", "canal"),
    ("N41", B, "Hm", "well with water"),
    ("O1", B, "pr", "house plan"),
    ("O29", B, "aA", "wooden column"),
    ("O50", B, "zp", "threshing floor"),
    ("Q1", B, "st", "seat"),
    ("R11", B, "Dd", "djed pillar"),
    ("S24", B, "Tz", "girdle knot"),
    ("T3", B, "HD", "mace"),
    ("T9", B, "pD", "bow"),
    ("T19", B, "qs", "harpoon head"),
    ("T21", B, "wa", "harpoon"),
    ("T22", B, "sn", "arrowhead"),
    ("T28", B, "Xr", "butcher block"),
    ("T34", B, "nm", "butcher knife"),
    ("U1", B, "mA", "sickle"),
    ("U7", B, "mr", "hoe"),
    ("U15", B, "tm", "sledge"),
    ("U23", B, "ab", "chisel"),
    ("U33", B, "ti", "pestle"),
    ("U36", B, "Hm", "fuller club"),
    ("V6", B, "Ss", "cord loop"),
    ("V17", B, "zA", "rolled-up shelter"),
    ("V22", B, "mH", "whip"),
    ("V24", B, "wD", "cord on stick"),
    ("V29", B, "sk", "swab"),
    ("V30", B, "nb", "wicker basket"),
    ("W14", B, "Hz", "tall water jar"),
    ("W19", B, "mi", "milk jug in net"),
    ("W24", B, "nw", "round pot"),
    ("W25", B, "in", "pot with legs"),
    ("X8", B, "di", "conical loaf"),
    ("Y5", B, "mn", "game board"),
    ("Aa15", B, "gs", "side"),
    ("Aa27", B, "nD", "spindle whorl"),
    ("Aa28", B, "qd", "builder tool"),
    # --- triliterals ---
    ("A50", T, "Sps", "seated noble"),
    ("Aa11", T, "mAa", "platform"),
    ("D50", T, "Dba", "finger"),
    ("D60", T, "wab", "priest washing"),
    ("F4", T, "HAt", "forepart of lion"),
    ("F12", T, "wsr", "canine head on staff"),
    ("F21", T, "sDm", "ox ear"),
    ("F23", T, "xpS", "ox foreleg"),
    ("F25", T, "wHm", "ox leg"),
    ("F31", T, "msi", "three fox skins"),
    ("F35", T, "nfr", "heart and windpipe"),
    ("F36", T, "zmA", "lungs and windpipe"),
    ("F37", T, "psD", "spine with ribs"),
    ("F42", T, "spr", "rib"),
    ("G27", T, "dSr", "flamingo"),
    ("G54", T, "snD", "trussed fowl"),
    ("I1", T, "aSA", "gecko"),
    ("L1", T, "xpr", "scarab beetle"),
    ("M8", T, "SAi", "pool with lotus"),
    ("M13", T, "wAD", "papyrus stem"),
    ("M20", T, "sxt", "field of reeds"),
    ("M26", T, "Sma", "flowering sedge"),
    ("M29", T, "nDm", "carob pod"),
    ("N14", T, "sbA", "star"),
    ("O6", T, "Hwt", "enclosure"),
    ("O42", T, "Ssp", "fence"),
    ("P5", T, "TAw", "sail"),
    ("P6", T, "aHa", "mast"),
    ("P8", T, "xrw", "oar"),
    ("Q6", T, "qrs", "coffin"),
    ("R4", T, "Htp", "loaf on offering mat"),
    ("R8", T, "nTr", "cloth on pole"),
    ("R15", T, "iAb", "spear emblem of the east"),
    ("S12", T, "nbw", "bead collar"),
    ("S20", T, "xtm", "cylinder seal"),
    ("S34", T, "anx", "sandal strap (ankh)"),
    ("S38", T, "HqA", "crook"),
    ("S40", T, "wAs", "was scepter"),
    ("S42", T, "sxm", "sekhem scepter"),
    ("T18", T, "Sms", "crook with package"),
    ("T31", T, "sSm", "knife sharpener"),
    ("U17", T, "grg", "pick over pool"),
    ("U21", T, "stp", "adze on block"),
    ("U26", T, "wbA", "drill"),
    ("U34", T, "xsf", "spindle"),
    ("W9", T, "Xnm", "stone jug"),
    ("W17", T, "xnt", "water jars in rack"),
    ("Z11", T, "imi", "crossed planks"),
    # --- logograms ---
    ("C11", L, "HH", "god Heh (million)"),
    ("C12", L, "imn", "god Amun"),
    ("D10", L, "wDAt", "sacred eye"),
    ("E1", L, "kA", "bull"),
    ("E13", L, "miw", "cat"),
    ("G5", L, "Hr", "falcon (Horus)"),
    ("G26", L, "DHwty", "ibis on standard (Thoth)"),
    ("I3", L, "msH", "crocodile"),
    ("N1", L, "pt", "sky"),
    ("N5", L, "ra", "sun disk"),
    ("N11", L, "iaH", "crescent moon"),
    ("NL1", L, "spAt", "Lower Egyptian nome emblem"),
    ("NU1", L, "spAt", "Upper Egyptian nome emblem"),
    ("O11", L, "aH", "palace"),
    ("O49", L, "niwt", "town plan"),
    ("P3", L, "wiA", "sacred bark"),
    ("S1", L, "HDt", "white crown"),
    ("S3", L, "dSrt", "red crown"),
    ("V20", L, "mD", "cattle hobble (ten)"),
    ("W2", L, "bAs", "ointment jar"),
    ("W22", L, "Hnqt", "beer jug"),
    ("Y3", L, "zXA", "scribe kit"),
    # --- determinatives ---
    ("A1", D, "", "seated man: man, person, I"),
    ("A2", D, "", "man with hand to mouth: eat, speak, think"),
    ("A14", D, "", "falling man: die, enemy"),
    ("A17", D, "", "child"),
    ("A24", D, "", "man striking: force, effort"),
    ("A28", D, "", "arms raised: joy, height"),
    ("A40", D, "", "seated god"),
    ("B1", D, "", "seated woman"),
    ("D3", D, "", "hair: hair, mourn"),
    ("D19", D, "", "nose: smell, face"),
    ("D35", D, "", "arms in negation: not"),
    ("D40", D, "", "arm with stick: strength"),
    ("D54", D, "", "walking legs: motion"),
    ("D56", D, "", "leg"),
    ("E20", D, "", "Seth animal: turmoil"),
    ("F1", D, "", "ox head: cattle"),
    ("F27", D, "", "hide: hide, leather"),
    ("G7", D, "", "falcon on standard: god, king"),
    ("G37", D, "", "sparrow: small, bad"),
    ("K5", D, "", "fish"),
    ("M1", D, "", "tree"),
    ("N2", D, "", "night sky"),
    ("N23", D, "", "irrigation canal: land"),
    ("N25", D, "", "hill country: foreign land"),
    ("N31", D, "", "road with shrubs: road, travel"),
    ("N33", D, "", "grain: sand, mineral"),
    ("N35a", D, "", "three ripples: water"),
    ("O39", D, "", "stone block"),
    ("P1", D, "", "boat: ship, sail"),
    ("Q7", D, "", "brazier: fire, heat"),
    ("S28", D, "", "cloth with fringe: clothing"),
    ("T14", D, "", "throw stick: foreign"),
    ("V1", D, "", "rope coil: rope (numeral 100)"),
    ("W10", D, "", "cup: vessel"),
    ("X2", D, "", "bread loaf: bread, food"),
    ("Y1", D, "", "papyrus roll: writing, abstract"),
    ("Z1", D, "", "single stroke: logogram marker"),
    ("Z2", D, "", "three strokes: plurality"),
    ("Z3", D, "", "three vertical strokes: plurality"),
    ("Z5", D, "", "diagonal stroke: hieratic substitute"),
]

LENGTH_BY_KIND = {U: 1, B: 2, T: 3}


def build() -> Lexicon:
    lex = Lexicon(version="1.0")
    for code_text, kind, translit, gloss in ENTRIES:
        code = parse_gardiner(code_text)
        assert str(code) == code_text, code_text
        want = LENGTH_BY_KIND.get(kind)
        assert want is None or len(translit) == want, (code_text, kind, translit)
        assert code_text not in lex.entries, f"duplicate {code_text}"
        lex.entries[code_text] = LexiconEntry(code, kind, translit, gloss)
    return lex


def main():
    lex = build()
    out = Path(__file__).resolve().parents[1] / "src" / "glyphpipe" / "data" / "lexicon.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_lexicon(lex), encoding="utf-8", newline="")
    print(f"wrote {len(lex)} entries to {out}")


if __name__ == "__main__":
    main()
