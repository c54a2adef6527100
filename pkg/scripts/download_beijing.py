"""
Beijing Air-Quality Preparation Script
Downloads the public UCI multi-site archive and writes daily PM2.5 curves as a fit-ready CSV
"""

import argparse
import io
import logging
import sys
import urllib.request
import zipfile
from pathlib import Path

import pandas as pd

logger = logging.getLogger("download_beijing")

UCI_URL = "https://archive.ics.uci.edu/static/public/501/beijing+multi+site+air+quality+data.zip"
COVARIATES = ["O3", "SO2", "NO2", "CO", "TEMP", "PRES", "DEWP", "WSPM"]
RESPONSE = "PM2.5"
HOURS = 24


def fetch_archive(url):
    logger.info(f"⬇️ Downloading {url}")
    with urllib.request.urlopen(url) as response:
        return response.read()


def station_frames(archive_bytes):
    """Yield one hourly DataFrame per station; the UCI archive nests a second zip"""
    with zipfile.ZipFile(io.BytesIO(archive_bytes)) as outer:
        for name in outer.namelist():
            if name.endswith(".zip"):
                yield from station_frames(outer.read(name))
            elif name.endswith(".csv") and "PRSA_Data_" in name:
                yield pd.read_csv(outer.open(name))


def daily_curves(hourly):
    """
    One row per day: daily-average covariates, then the 24 hourly PM2.5 values.

    Hours missing any selected variable are blanked, so those days carry an
    empty response field and are dropped at load time.
    """
    hourly = hourly.copy()
    selected = COVARIATES + [RESPONSE]
    incomplete = hourly[selected].isna().any(axis=1)
    hourly.loc[incomplete, selected] = float("nan")

    # centre and scale every variable within the station
    for column in selected:
        values = hourly[column]
        hourly[column] = (values - values.mean()) / values.std()

    hourly["date"] = pd.to_datetime(hourly[["year", "month", "day"]])
    covariates = hourly.groupby("date")[COVARIATES].mean()
    curves = hourly.pivot_table(index="date", columns="hour", values=RESPONSE, dropna=False)
    curves = curves.reindex(columns=range(HOURS))
    # hour h sits at location h / 23 once the grid is rescaled to [0, 1]
    curves.columns = [f"y@{h}" for h in range(HOURS)]
    daily = covariates.join(curves, how="inner")
    daily["station"] = hourly["station"].iloc[0]
    return daily.reset_index()


def prepare(archive_bytes):
    frames = [daily_curves(frame) for frame in station_frames(archive_bytes)]
    if not frames:
        raise RuntimeError("archive holds no station CSV files")
    pooled = pd.concat(frames, ignore_index=True)
    # chronological stream, stations in a fixed order within each day
    pooled = pooled.sort_values(["date", "station"], kind="mergesort")
    return pooled[COVARIATES + [f"y@{h}" for h in range(HOURS)]]


def main(argv=None):
    parser = argparse.ArgumentParser(description="Prepare the Beijing PM2.5 stream for `main.py fit`")
    parser.add_argument("--out", default="data/beijing_pm25.csv", help="output CSV path")
    parser.add_argument("--url", default=UCI_URL, help="archive location")
    parser.add_argument("--archive", help="use an already downloaded zip instead of the network")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    try:
        archive_bytes = Path(args.archive).read_bytes() if args.archive else fetch_archive(args.url)
        table = prepare(archive_bytes)
    except (OSError, zipfile.BadZipFile, RuntimeError) as e:
        logger.error(f"❌ Preparation failed: {e}")
        return 1

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, na_rep="", float_format="%.17g")
    logger.info(f"✅ Wrote {len(table)} daily curves to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
