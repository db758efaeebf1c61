"""
downloads.py
------------
Writes result frames to disk.

Provides CSV (one file per frame, or a ZIP of them) and Excel (one sheet
per frame) exports.
"""
import sys
import zipfile
from io import BytesIO
from pathlib import Path

import pandas as pd

FLOAT_FORMAT = '%.10g'


def write_csv(df, path=None):
    """Write one frame as CSV to `path`, or to stdout when path is None or '-'."""
    if path is None or str(path) == '-':
        df.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def generate_csv_zip(frames):
    """ZIP bytes with one `<name>.csv` per frame."""
    zip_buffer = BytesIO()
    with zipfile.ZipFile(zip_buffer, 'w', zipfile.ZIP_DEFLATED) as zf:
        for name, df in frames.items():
            zf.writestr(f'{name}.csv', df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))
    return zip_buffer.getvalue()


def generate_excel(frames):
    """Excel bytes with one sheet per frame (sheet names cut to 31 chars)."""
    output = BytesIO()
    with pd.ExcelWriter(output, engine='xlsxwriter') as writer:
        for name, df in frames.items():
            df.to_excel(writer, sheet_name=name[:31], index=False)
    return output.getvalue()


def write_results(frames, path):
    """
    Write `frames` to `path`; the suffix picks the format:
    .xlsx one sheet per frame, .zip CSVs in an archive, otherwise a
    directory of CSV files.
    """
    path = Path(path)
    if path.suffix == '.xlsx':
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(generate_excel(frames))
    elif path.suffix == '.zip':
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(generate_csv_zip(frames))
    else:
        for name, df in frames.items():
            write_csv(df, path / f'{name}.csv')
    return path
