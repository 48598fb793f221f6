#!/usr/bin/env python3
"""Download monthly Arctic temperature anomalies from NOAA Climate at a Glance
and write them as one dataset CSV: a `year` grid column, then one column per month.

The portal serves one series per calendar month. Its URL layout has changed
before, so the template can be overridden.
"""

import argparse
import csv
import io
import sys
import urllib.request

MONTHS = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"]
DEFAULT_TEMPLATE = (
    "https://www.ncei.noaa.gov/access/monitoring/climate-at-a-glance/global/time-series/"
    "arctic/tavg/land_ocean/1/{month}/{start}-{end}/data.csv"
)


def fetch_series(url):
    with urllib.request.urlopen(url, timeout=60) as resp:
        text = resp.read().decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    # metadata lines precede the header
    start = next(i for i, r in enumerate(rows) if r and r[0].strip().lower() in ("year", "date"))
    series = {}
    for r in rows[start + 1:]:
        if len(r) < 2 or not r[0].strip():
            continue
        year = int(r[0].strip()[:4])
        series[year] = float(r[1])
    return series


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/noaa_arctic_monthly.csv")
    ap.add_argument("--start", type=int, default=1901)
    ap.add_argument("--end", type=int, default=2022)
    ap.add_argument("--url-template", default=DEFAULT_TEMPLATE,
                    help="format string with {month} (1-12), {start}, {end}")
    args = ap.parse_args()

    columns = []
    for m in range(1, 13):
        url = args.url_template.format(month=m, start=args.start, end=args.end)
        print(f"fetching {url}", file=sys.stderr)
        columns.append(fetch_series(url))

    years = list(range(args.start, args.end + 1))
    missing = [(MONTHS[i], y) for i, c in enumerate(columns) for y in years if y not in c]
    if missing:
        sys.exit(f"missing values, e.g. {missing[:5]}")

    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["year"] + MONTHS)
        for y in years:
            w.writerow([y] + [c[y] for c in columns])
    print(f"wrote {len(years)} years x 12 months to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
