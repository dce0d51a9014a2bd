#!/usr/bin/env python3
"""Regenerate data/literal_utterances.jsonl (100 labeled utterances).

Each utterance is assembled from text segments so the gold character spans
are computed, not hand-counted. One utterance ("twenty twelve") is a known
hard case for the regex extractor and is expected to be missed.
"""

import json
import sys
from pathlib import Path

NUM = "numeric"
DT = "datetime"


def u(*segments):
    """segments: str, or (surface, canonical_value, tag)."""
    text = ""
    literals = []
    for seg in segments:
        if isinstance(seg, str):
            text += seg
        else:
            surface, value, tag = seg
            literals.append(
                {"value": value, "tag": tag, "start": len(text), "end": len(text) + len(surface)}
            )
            text += surface
    return {"text": text, "literals": literals}


UTTERANCES = [
    # plain numerics (22)
    u("which wines have more than ", ("7.5", "7.5", NUM), " percent alcohol"),
    u("find wines rated at least ", ("88", "88", NUM), " points"),
    u("what has a score below ", ("72", "72", NUM), ""),
    u("list regions with over ", ("40", "40", NUM), " wineries"),
    u("wines with exactly ", ("12.5", "12.5", NUM), " percent alcohol"),
    u("whose rating equals ", ("95", "95", NUM), ""),
    u("cheaper than ", ("20", "20", NUM), " dollars a bottle"),
    u("which vineyards span more than ", ("3.25", "3.25", NUM), " hectares"),
    u("an acidity above ", ("0.6", "0.6", NUM), " makes it sharp"),
    u("who scored ", ("99", "99", NUM), " on the final tasting"),
    u("anything under ", ("15", "15", NUM), " units"),
    u("more than ", ("2", "2", NUM), " gold medals"),
    u("a residual sugar of ", ("4.8", "4.8", NUM), " grams"),
    u("which producers ship at most ", ("450", "450", NUM), " crates"),
    u("density greater than ", ("0.99", "0.99", NUM), ""),
    u("fewer than ", ("6", "6", NUM), " barrels remain"),
    u("which cellar holds ", ("320", "320", NUM), " bottles"),
    u("a pH of ", ("3.4", "3.4", NUM), " or lower"),
    u("serve at ", ("16.5", "16.5", NUM), " degrees"),
    u("which estates own at least ", ("11", "11", NUM), " plots"),
    u("they bottled ", ("840", "840", NUM), " cases this season"),
    u("no more than ", ("0.75", "0.75", NUM), " liters each"),
    # magnitude words (8)
    u("a knowledge base of over ", ("3 million", "3000000", NUM), " facts"),
    u("roughly ", ("2.5 billion", "2500000000", NUM), " triples are stored"),
    u("about ", ("12 thousand", "12000", NUM), " visitors a year"),
    u("more than ", ("1 million", "1000000", NUM), " bottles sold"),
    u("nearly ", ("7 thousand", "7000", NUM), " reviews collected"),
    u("exports exceeded ", ("1.2 million", "1200000", NUM), " liters"),
    u("a catalog of ", ("45 thousand", "45000", NUM), " labels"),
    u("over ", ("6.75 billion", "6750000000", NUM), " records processed"),
    # comma-grouped numbers (5)
    u("sampled at ", ("44,100", "44100", NUM), " hertz"),
    u("which lot produced ", ("12,500", "12500", NUM), " bottles"),
    u("an archive of ", ("1,250,000", "1250000", NUM), " documents"),
    u("valued at ", ("98,750.25", "98750.25", NUM), " euros"),
    u("they planted ", ("10,000", "10000", NUM), " vines"),
    # bare years (15)
    u("wines released in ", ("2015", "2015", DT), ""),
    u("founded before ", ("1898", "1898", DT), ""),
    u("harvests since ", ("2003", "2003", DT), " were dry"),
    u("the estate opened in ", ("1975", "1975", DT), ""),
    u("vintages after ", ("2018", "2018", DT), " are sold out"),
    u("which critics retired in ", ("1999", "1999", DT), ""),
    u("bottled during ", ("2020", "2020", DT), ""),
    u("acquired by the group in ", ("2011", "2011", DT), ""),
    u("records go back to ", ("1847", "1847", DT), ""),
    u("no releases until ", ("2022", "2022", DT), ""),
    u("replanted after the ", ("1956", "1956", DT), " frost"),
    u("the ", ("1982", "1982", DT), " vintage is legendary"),
    u("expanded in ", ("2008", "2008", DT), " and again later"),
    u("certified organic in ", ("2014", "2014", DT), ""),
    u("which cellars date from ", ("1790", "1790", DT), ""),
    # ISO dates (10)
    u("harvested on ", ("2015-08-10", "2015-08-10", DT), ""),
    u("shipped ", ("2019-03-02", "2019-03-02", DT), " at dawn"),
    u("tasted on ", ("2021-11-30", "2021-11-30", DT), " blind"),
    u("bottled on ", ("2007-06-15", "2007-06-15", DT), ""),
    u("the audit of ", ("2012-01-09", "2012-01-09", DT), " found nothing"),
    u("delivered by ", ("2016-12-24", "2016-12-24", DT), ""),
    u("opened ", ("2018-05-05", "2018-05-05", DT), " for the fair"),
    u("frost hit on ", ("2004-04-17", "2004-04-17", DT), ""),
    u("labeled ", ("2010-09-01", "2010-09-01", DT), " on the cork"),
    u("sampled ", ("2013-07-21", "2013-07-21", DT), " during the visit"),
    # ISO year-month (4)
    u("during ", ("2013-07", "2013-07", DT), " the cellar flooded"),
    u("inventory as of ", ("2019-02", "2019-02", DT), ""),
    u("the ", ("2005-10", "2005-10", DT), " bulletin praised it"),
    u("scheduled for ", ("2024-06", "2024-06", DT), ""),
    # ISO datetime (3)
    u("logged at ", ("2015-08-10T14:30:00", "2015-08-10T14:30:00", DT), ""),
    u("the sensor read spikes at ", ("2020-01-31T23:59:59", "2020-01-31T23:59:59", DT), ""),
    u("backup completed ", ("2017-09-12T03:15:00", "2017-09-12T03:15:00", DT), ""),
    # month-name forms (10)
    u("awarded on ", ("August 10, 2015", "2015-08-10", DT), ""),
    u("the gala was held ", ("January 5, 2019", "2019-01-05", DT), ""),
    u("submitted on ", ("December 31, 1999", "1999-12-31", DT), ""),
    u("judged on ", ("July 4, 2010", "2010-07-04", DT), " in the plaza"),
    u("since ", ("March 1999", "1999-03", DT), " nothing changed"),
    u("in ", ("October 2016", "2016-10", DT), " the rules changed"),
    u("a heatwave in ", ("June 2003", "2003-06", DT), " ruined the crop"),
    u("planted in ", ("April 1988", "1988-04", DT), ""),
    u("the tasting of ", ("September 12, 2014", "2014-09-12", DT), " was canceled"),
    u("announced ", ("May 2021", "2021-05", DT), ""),
    # multi-literal (9)
    u("between ", ("7.5", "7.5", NUM), " and ", ("12", "12", NUM), " percent"),
    u("from ", ("1999", "1999", DT), " to ", ("2005", "2005", DT), ""),
    u("either ", ("88", "88", NUM), " or ", ("91", "91", NUM), " points"),
    u("released ", ("2014", "2014", DT), " and rated ", ("93", "93", NUM), ""),
    u("on ", ("2011-04-02", "2011-04-02", DT), " it scored ", ("89", "89", NUM), ""),
    u("compare the ", ("1982", "1982", DT), " and ", ("1986", "1986", DT), " vintages"),
    u("alcohol near ", ("13.5", "13.5", NUM), " and sugar near ", ("2.1", "2.1", NUM), ""),
    u("stocktake ", ("March 2020", "2020-03", DT), " counted ", ("5,400", "5400", NUM), " bottles"),
    u("between ", ("2015-06-01", "2015-06-01", DT), " and ", ("2015-08-31", "2015-08-31", DT), ""),
    # no literals (13)
    u("which wines pair well with grilled fish"),
    u("who founded the oldest winery in the valley"),
    u("list every grape grown on the southern slopes"),
    u("what style is most common near the coast"),
    u("which critics favor sparkling wines"),
    u("name the wineries that export to asia"),
    u("what region borders the river delta"),
    u("which estates use oak barrels"),
    u("who reviewed the driest rose"),
    u("which country imports the most malbec"),
    u("what grape ripens earliest"),
    u("which producers practice dry farming"),
    u("where do the steepest vineyards sit"),
    # deliberately hard for the regex extractor (1): spelled-out year
    u("a retrospective of wines from ", ("twenty twelve", "2012", DT), ""),
]


def main() -> int:
    out = Path(__file__).resolve().parent.parent / "data" / "literal_utterances.jsonl"
    assert len(UTTERANCES) == 100, f"need exactly 100 utterances, have {len(UTTERANCES)}"
    with open(out, "w", encoding="utf-8") as fh:
        for record in UTTERANCES:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
