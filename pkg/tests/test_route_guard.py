import unittest
import sys
import os
import tempfile
from unittest.mock import patch

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from common_utils import TRAJECTORY_HEADER, read_csv
from route_guard import (
    build_parser,
    main,
    parse_placement,
    parse_placement_mode,
    parse_relocation,
    print_step_summary,
    run_with_log,
)


class TestArgumentParsing(unittest.TestCase):

    def test_global_flags_on_every_command(self):
        parser = build_parser()
        for command in ("simulate", "oracle", "compare"):
            args = parser.parse_args([command, "--scenario", "m2", "--seed", "4", "--out", "x", "--no-cache"])
            self.assertEqual((args.scenario, args.seed, args.out, args.no_cache), ("m2", 4, "x", True))

    def test_log_required_for_behavior_check(self):
        with patch("sys.stderr"):
            with self.assertRaises(SystemExit):
                build_parser().parse_args(["check-behavior"])

    def test_placement_and_relocation(self):
        self.assertEqual(parse_placement("25, 43"), (25.0, 43.0))
        self.assertIsNone(parse_placement(None))
        self.assertEqual(parse_relocation("10:1:38"), (10, 1, 38.0))
        with self.assertRaises(ValueError):
            parse_relocation("10:1")

    def test_placement_modes(self):
        self.assertEqual(parse_placement_mode(None), "fixed")
        self.assertEqual(parse_placement_mode("sampled"), "sampled")
        self.assertEqual(parse_placement_mode("25,43;27,41"), [(25.0, 43.0), (27.0, 41.0)])

    @patch("builtins.print")
    @patch("route_guard.time.time", return_value=12.5)
    def test_print_step_summary(self, mock_time, mock_print):
        print_step_summary("Seed 0", start_time=10.0)
        mock_print.assert_any_call("Seed 0 duration: 00:00:02.50")


@patch("builtins.print")
class TestCommands(unittest.TestCase):

    def test_simulate_writes_valid_log(self, mock_print):
        with tempfile.TemporaryDirectory() as out_dir:
            code = main(["simulate", "--scenario", "m1", "--policy", "overwatch", "--out", out_dir])
            self.assertEqual(code, 0)
            path = os.path.join(out_dir, "m1_overwatch_simulate.csv")
            columns, rows = read_csv(path, TRAJECTORY_HEADER)
        self.assertEqual(columns[:3], ["t", "s_1", "s_2"])
        self.assertGreater(len(rows), 0)

    def test_simulate_then_check_and_export(self, mock_print):
        with tempfile.TemporaryDirectory() as out_dir:
            self.assertEqual(main(["simulate", "--policy", "overwatch", "--out", out_dir]), 0)
            log = os.path.join(out_dir, "m1_overwatch_simulate.csv")
            self.assertEqual(main(["check-behavior", "--log", log, "--out", out_dir]), 0)
            self.assertEqual(main(["export-plots", "--log", log, "--out", out_dir]), 0)
            self.assertTrue(os.path.exists(os.path.join(out_dir, "m1_overwatch_simulate_zones.csv")))
        printed = " ".join(str(call.args[0]) for call in mock_print.call_args_list if call.args)
        self.assertIn("Overwatch detected:          True", printed)

    def test_unknown_scenario_exit_code(self, mock_print):
        with tempfile.TemporaryDirectory() as out_dir:
            self.assertEqual(main(["simulate", "--scenario", "nowhere", "--out", out_dir]), 2)

    def test_invalid_placement_exit_code(self, mock_print):
        with tempfile.TemporaryDirectory() as out_dir:
            self.assertEqual(main(["simulate", "--placement", "90", "--out", out_dir]), 1)

    def test_oracle_command(self, mock_print):
        with tempfile.TemporaryDirectory() as out_dir:
            code = main(["oracle", "--scenario", "m1_small", "--no-cache", "--out", out_dir])
            self.assertEqual(code, 0)
            self.assertTrue(os.path.exists(os.path.join(out_dir, "m1_small_oracle.csv")))


class TestRunLog(unittest.TestCase):

    def test_run_with_log_keeps_transcript(self):
        with tempfile.TemporaryDirectory() as log_dir, patch("route_guard.main") as mock_main:
            mock_main.side_effect = lambda argv: (
                print("command result"),
                print("command warning", file=sys.stderr),
                0,
            )[-1]
            with patch("sys.stdout"), patch("sys.stderr"):
                code = run_with_log(["simulate"], log_dir)
            logs = os.listdir(log_dir)
            self.assertEqual(len(logs), 1)
            self.assertTrue(logs[0].startswith("route_guard_run_"))
            with open(os.path.join(log_dir, logs[0]), encoding="utf-8") as log_file:
                log_text = log_file.read()

        self.assertEqual(code, 0)
        self.assertIn("command result", log_text)
        self.assertIn("command warning", log_text)
        self.assertIn("Run log saved to:", log_text)


if __name__ == '__main__':
    unittest.main()
