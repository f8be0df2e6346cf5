import csv
import os
import re
from decimal import Decimal, ROUND_HALF_UP

from dotenv import load_dotenv

load_dotenv()

# Process-level settings: artifact locations and work limits.
OUT_DIR = os.getenv("ROUTE_GUARD_OUT_DIR", "runs")
CACHE_DIR = os.getenv("ROUTE_GUARD_CACHE_DIR", ".oracle_cache")
RUN_LOG_DIR = os.getenv("ROUTE_GUARD_RUN_LOG_DIR", "run_logs")
ORACLE_MAX_TRANSITIONS = int(os.getenv("ORACLE_MAX_TRANSITIONS", "20000000"))
ORACLE_MAX_VALUE_ENTRIES = int(os.getenv("ORACLE_MAX_VALUE_ENTRIES", "50000000"))
PPO_ROLLOUT_WORKERS = int(os.getenv("PPO_ROLLOUT_WORKERS", "1"))

SCENARIO_HEADER = "# route-guard scenario v1"
TRAIN_HEADER = "# route-guard train v1"
TRAJECTORY_HEADER = "# route-guard trajectory v1"
CURVES_HEADER = "# route-guard curves v1"
COMPARISON_HEADER = "# route-guard comparison v1"
PLOT_HEADER = "# route-guard plotdata v1"

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")


def format_duration(duration_seconds):
    """Format elapsed seconds as HH:MM:SS.cc."""
    total_centiseconds = int(
        (Decimal(str(duration_seconds)) * 100).quantize(
            Decimal("1"), rounding=ROUND_HALF_UP
        )
    )
    hours, remainder = divmod(total_centiseconds, 360000)
    minutes, remainder = divmod(remainder, 6000)
    seconds, centiseconds = divmod(remainder, 100)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}.{centiseconds:02d}"


def parse_key_value_text(content, expected_header):
    """
    Parses the `key = value` configuration format.

    The first non-empty line must be the versioned header (for example
    '# route-guard scenario v1'). Later '#' lines and trailing '# ...'
    comments are ignored. Returns an ordered dict of raw string values.
    """
    lines = content.splitlines()
    non_empty = [line.strip() for line in lines if line.strip()]
    if not non_empty or non_empty[0] != expected_header:
        found = non_empty[0] if non_empty else "<empty file>"
        raise ValueError(f"Expected header '{expected_header}', found '{found}'")

    values = {}
    for number, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ValueError(f"Line {number}: expected 'key = value', got '{line.strip()}'")
        key, value = text.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"Line {number}: missing key")
        if key in values:
            raise ValueError(f"Line {number}: duplicate key '{key}'")
        values[key] = value.strip()
    return values


def read_key_value_file(path, expected_header):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Configuration file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return parse_key_value_text(f.read(), expected_header)


def write_key_value_file(path, header, items):
    """Writes (key, value) pairs under a versioned header."""
    lines = [header]
    for key, value in items:
        lines.append(f"{key} = {value}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_number_set(text):
    """
    Parses '30..40' (inclusive integer range) or a comma list '12.5, 14, 20'.
    Returns a sorted tuple of floats without duplicates.
    """
    text = (text or "").strip()
    if not text:
        raise ValueError("Empty number set")
    match = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", text)
    if match:
        lo, hi = int(match.group(1)), int(match.group(2))
        if hi < lo:
            raise ValueError(f"Invalid range '{text}': end before start")
        return tuple(float(v) for v in range(lo, hi + 1))
    try:
        return tuple(sorted({float(part) for part in text.split(",") if part.strip()}))
    except ValueError:
        raise ValueError(f"Invalid number set: '{text}'")


def format_number(value):
    """Shortest text that reads back to the same float; integers lose the '.0'."""
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def write_csv(path, header_line, columns, rows):
    """Writes a versioned CSV: a '# ...' header line, the column row, then data rows."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header_line + "\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)
    return path


def read_csv(path, header_line):
    """
    Reads a versioned CSV written by `write_csv`.
    Returns (columns, rows) with rows as lists of strings.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"CSV file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        first = f.readline().strip()
        if first != header_line:
            raise ValueError(f"{path}: expected header '{header_line}', found '{first}'")
        reader = csv.reader(f)
        try:
            columns = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: missing column row")
        rows = [row for row in reader if row]
    return columns, rows


def check_csv_file(path, header_line, required_columns, numeric_columns=()):
    """
    Checks that a versioned CSV file is well formed:
    1. header line and column row present
    2. every required column exists
    3. every row has one value per column
    4. numeric columns parse as finite numbers (or 'N/A')
    """
    print(f"Validating file schema: {path}")
    issues = []
    try:
        columns, rows = read_csv(path, header_line)
    except (OSError, ValueError) as e:
        print(f"Error: {e}")
        return False

    for name in required_columns:
        if name not in columns:
            issues.append(f"Missing column '{name}'")

    positions = [columns.index(name) for name in numeric_columns if name in columns]
    for number, row in enumerate(rows, start=1):
        if len(row) != len(columns):
            issues.append(f"Row {number}: {len(row)} values for {len(columns)} columns")
            continue
        for position in positions:
            value = row[position]
            if value == "N/A":
                continue
            try:
                parsed = float(value)
            except ValueError:
                issues.append(f"Row {number}: column '{columns[position]}' is not numeric ({value!r})")
                continue
            if parsed != parsed or parsed in (float("inf"), float("-inf")):
                issues.append(f"Row {number}: column '{columns[position]}' is not finite")

    if issues:
        print(f"Found {len(issues)} schema issues:")
        for issue in issues[:10]:
            print(f"- {issue}")
        if len(issues) > 10:
            print(f"... and {len(issues) - 10} more.")
        return False
    print(f"✓ Schema check passed ({len(rows)} rows).")
    return True
