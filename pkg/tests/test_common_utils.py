import unittest
import sys
import os
import tempfile
from unittest.mock import patch

# Add parent directory to path to import modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from common_utils import (
    TRAJECTORY_HEADER,
    check_csv_file,
    format_duration,
    format_number,
    parse_key_value_text,
    parse_number_set,
    read_csv,
    write_csv,
    write_key_value_file,
    read_key_value_file,
)

HEADER = "# route-guard scenario v1"


class TestCommonUtils(unittest.TestCase):

    def test_format_duration(self):
        self.assertEqual(format_duration(2451.79), "00:40:51.79")
        self.assertEqual(format_duration(3661.005), "01:01:01.01")
        self.assertEqual(format_duration(0), "00:00:00.00")

    def test_format_number(self):
        self.assertEqual(format_number(70.0), "70")
        self.assertEqual(format_number(-0.44), "-0.44")
        self.assertEqual(float(format_number(0.1 + 0.2)), 0.1 + 0.2)

    def test_parse_number_set(self):
        self.assertEqual(parse_number_set("30..33"), (30.0, 31.0, 32.0, 33.0))
        self.assertEqual(parse_number_set("14, 12.5, 14"), (12.5, 14.0))
        self.assertEqual(parse_number_set("55"), (55.0,))
        with self.assertRaises(ValueError):
            parse_number_set("40..30")
        with self.assertRaises(ValueError):
            parse_number_set("a, b")
        with self.assertRaises(ValueError):
            parse_number_set("")


class TestKeyValueFiles(unittest.TestCase):

    def test_comments_and_whitespace(self):
        text = f"{HEADER}\n\n# comment line\nroute_length = 70   # metres\n  n_robots=2\n"
        self.assertEqual(parse_key_value_text(text, HEADER), {"route_length": "70", "n_robots": "2"})

    def test_wrong_header(self):
        with self.assertRaises(ValueError):
            parse_key_value_text("# route-guard train v1\nclip_ratio = 0.2\n", HEADER)

    def test_duplicate_key(self):
        with self.assertRaises(ValueError):
            parse_key_value_text(f"{HEADER}\nv_max = 3\nv_max = 4\n", HEADER)

    def test_line_without_equals(self):
        with self.assertRaises(ValueError):
            parse_key_value_text(f"{HEADER}\nv_max 3\n", HEADER)

    def test_write_then_read(self):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "scenario.cfg")
            write_key_value_file(path, HEADER, [("route_length", "10"), ("adversary.1.support", "4..6")])
            self.assertEqual(
                read_key_value_file(path, HEADER),
                {"route_length": "10", "adversary.1.support": "4..6"},
            )

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            read_key_value_file("/nonexistent/scenario.cfg", HEADER)


@patch("builtins.print")
class TestCsvFiles(unittest.TestCase):

    def test_write_and_read(self, mock_print):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = write_csv(os.path.join(tmp_dir, "nested", "log.csv"), TRAJECTORY_HEADER, ["t", "note"],
                             [["0", "a, b"], ["1", ""]])
            columns, rows = read_csv(path, TRAJECTORY_HEADER)
        self.assertEqual(columns, ["t", "note"])
        self.assertEqual(rows, [["0", "a, b"], ["1", ""]])

    def test_check_accepts_na(self, mock_print):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = write_csv(os.path.join(tmp_dir, "ok.csv"), TRAJECTORY_HEADER, ["a", "b"],
                             [["1.5", "N/A"], ["-2", "3"]])
            self.assertTrue(check_csv_file(path, TRAJECTORY_HEADER, ["a", "b"], numeric_columns=["a", "b"]))

    def test_check_reports_issues(self, mock_print):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = write_csv(os.path.join(tmp_dir, "bad.csv"), TRAJECTORY_HEADER, ["a", "b"],
                             [["x", "1"], ["1"], ["nan", "2"]])
            self.assertFalse(check_csv_file(path, TRAJECTORY_HEADER, ["a", "b", "c"], numeric_columns=["a"]))
        printed = " ".join(str(call.args[0]) for call in mock_print.call_args_list if call.args)
        self.assertIn("Found 4 schema issues", printed)
        self.assertIn("Missing column 'c'", printed)

    def test_check_wrong_header(self, mock_print):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = write_csv(os.path.join(tmp_dir, "other.csv"), "# something else", ["a"], [["1"]])
            self.assertFalse(check_csv_file(path, TRAJECTORY_HEADER, ["a"]))


if __name__ == '__main__':
    unittest.main()
