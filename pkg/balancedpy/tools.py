import csv
import json
import numpy as np


def read_csv_table(path: str) -> tuple:
    """Reads a headed CSV file

    Parameters
    ----------
    path : str
        file to read

    Returns
    -------
    tuple
        (header, rows) where header is a list of column names and rows a list of string lists
    """

    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError("{} is empty".format(path))
        rows = [[c.strip() for c in row] for row in reader if len(row) and any(c.strip() for c in row)]

    return header, rows


def write_csv(path: str, header: list, rows: list) -> None:
    """Writes rows under a header, one float per cell in repr precision"""

    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(c) for c in row])


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return repr(complex(value))
    return str(value)


def parse_scalar(text: str) -> complex:
    """Parses a real or complex CSV cell such as '0.5' or '1-2j'"""

    text = text.replace(" ", "")
    try:
        return complex(float(text))
    except ValueError:
        return complex(text)


def to_serializable(obj):
    """Converts numpy containers and scalars into plain JSON types"""

    if isinstance(obj, dict):
        return {str(k): to_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_serializable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_serializable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if np.isfinite(value):
            return value
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(obj, (complex, np.complexfloating)):
        return {"real": float(np.real(obj)), "imag": float(np.imag(obj))}
    return obj


def write_json(path: str, obj: dict) -> None:
    with open(path, "w") as f:
        json.dump(to_serializable(obj), f, indent=2, sort_keys=True)
        f.write("\n")


def cell_widths(points: "np.ndarray", a: float = None, b: float = None) -> "np.ndarray":
    """Returns the length of each sorted point's Voronoi cell, clipped to [a, b]

    Parameters
    ----------
    points : np.ndarray
        strictly increasing 1D points
    a : float
        left end of the interval (default: points[0])
    b : float
        right end of the interval (default: points[-1])

    Returns
    -------
    np.ndarray
        cell lengths, summing to b - a
    """

    points = np.asarray(points, dtype=float)
    a = points[0] if a is None else a
    b = points[-1] if b is None else b
    if len(points) == 1:
        return np.array([b - a])
    mids = 0.5 * (points[1:] + points[:-1])
    edges = np.concatenate([[a], mids, [b]])
    return np.diff(edges)
