"""End-to-end checks of the automerge command line.

Usage: test_cli.py <path to automerge> <tests/data directory>
"""

import json
import shutil
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

CLI = ""
DATA = Path()


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True)


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = Path(tempfile.mkdtemp(prefix="automerge_cli_"))
        cls.world = cls.tmp / "world"
        r = run("gen", "--config", DATA / "small.toml", "--out", cls.world)
        assert r.returncode == 0, r.stderr

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)

    def merge(self, name, *extra):
        out = self.tmp / name
        r = run("merge", self.world, "--config", DATA / "small.toml", "--out", out, *extra)
        self.assertEqual(r.returncode, 0, r.stderr)
        return out

    def test_gen_writes_the_dataset(self):
        lines = (self.world / "world.jsonl").read_text().splitlines()
        self.assertEqual(len(lines), 4 * 80)
        first = json.loads(lines[0])
        self.assertEqual(sorted(first), ["cloud", "desc", "gt", "k", "odom", "seg", "unit"])
        truth = json.loads((self.world / "truth.json").read_text())
        self.assertEqual(truth["partition"], [[0, 1], [2, 3]])
        self.assertEqual([len(o["pairs"]) for o in truth["overlaps"]], [24, 20])
        self.assertEqual(truth["overlaps"][1]["direction"], "reverse")

    def test_merge_outputs(self):
        out = self.merge("offline")
        for name in ["partition.json", "closures.csv", "poses.csv", "state.json", "timeline.csv"]:
            self.assertTrue((out / name).is_file(), name)
        partition = json.loads((out / "partition.json").read_text())
        self.assertEqual(partition["clusters"], [[0, 1], [2, 3]])
        self.assertEqual(partition["k"], 2)
        closures = (out / "closures.csv").read_text().splitlines()
        self.assertEqual(closures[0], "seg_i,k_i,seg_j,k_j,dx,dy,dyaw,confidence")
        self.assertGreater(len(closures), 1)
        self.assertTrue(all(len(row.split(",")) == 8 for row in closures))
        self.assertEqual(len((out / "poses.csv").read_text().splitlines()), 1 + 320)
        self.assertEqual(len((out / "timeline.csv").read_text().splitlines()), 2)

    def test_merge_is_deterministic_and_order_invariant(self):
        a = self.merge("det_a")
        b = self.merge("det_b")
        for name in ["partition.json", "closures.csv", "poses.csv", "state.json", "timeline.csv"]:
            self.assertEqual((a / name).read_bytes(), (b / name).read_bytes(), name)
        inc1 = self.merge("inc1", "--mode", "incremental", "--order-seed", "1")
        inc7 = self.merge("inc7", "--mode", "incremental", "--order-seed", "7", "--jobs", "2")
        for name in ["partition.json", "closures.csv"]:
            self.assertEqual((inc1 / name).read_bytes(), (inc7 / name).read_bytes(), name)
            self.assertEqual((inc1 / name).read_bytes(), (a / name).read_bytes(), name)
        self.assertGreater(len((inc1 / "timeline.csv").read_text().splitlines()), 2)

    def test_eval_counts_a_missed_overlap(self):
        out = self.tmp / "eval_fixture"
        r = run("eval", DATA / "three_overlaps_result", "--truth", DATA / "three_overlaps", "--out", out)
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertIn("merging_accuracy   0.667", r.stdout)
        self.assertIn("false_merges       0", r.stdout)
        self.assertIn("partition_exact    no", r.stdout)
        m = json.loads((out / "metrics.json").read_text())
        self.assertAlmostEqual(m["merging_accuracy"], 2 / 3, places=12)
        self.assertEqual(m["overlaps_found"], 2)
        self.assertEqual(m["overlaps_total"], 3)
        self.assertEqual(m["precision"], 1.0)
        self.assertAlmostEqual(m["rand_index"], 1 / 3, places=12)
        self.assertLess(m["max_ate"], 1e-9)
        pr = (out / "pr_curve.csv").read_text().splitlines()
        self.assertEqual(pr[0], "threshold,precision,recall")
        self.assertEqual([row.split(",")[0] for row in pr[1:]], ["1", "0.8", "0.5"])

    def test_eval_on_a_merge(self):
        out = self.merge("for_eval")
        r = run("eval", out, "--truth", self.world, "--top-n", "3")
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertIn("recall@3", r.stdout)
        m = json.loads((out / "metrics.json").read_text())
        self.assertEqual(m["merging_accuracy"], 1.0)
        self.assertEqual(m["false_merges"], 0)
        self.assertTrue(m["partition_exact"])

    def test_plots(self):
        res = DATA / "three_overlaps_result"
        out = self.tmp / "plots"
        cases = [("map", [res], 'class="segment"', 4), ("timeline", [res], 'class="timeline"', 1)]
        for kind, dirs, marker, count in cases:
            svg = out / f"{kind}.svg"
            r = run("plot", *dirs, "--kind", kind, "--out", svg)
            self.assertEqual(r.returncode, 0, r.stderr)
            text = svg.read_text()
            self.assertTrue(text.startswith("<svg"))
            self.assertTrue(text.endswith("</svg>\n"))
            self.assertEqual(text.count(marker), count, kind)
        merged = self.merge("for_plots")
        run("eval", merged, "--truth", self.world)
        r = run("plot", merged, merged, "--kind", "recall", "--out", out / "recall.svg")
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual((out / "recall.svg").read_text().count('class="bar"'), 10)
        r = run("plot", merged, "--kind", "pr", "--out", out / "pr.svg")
        self.assertEqual(r.returncode, 0, r.stderr)
        self.assertEqual((out / "pr.svg").read_text().count('class="pr"'), 1)

    def test_config_errors_exit_2(self):
        r = run("gen", "--config", DATA / "bad_type.toml", "--out", self.tmp / "x")
        self.assertEqual(r.returncode, 2)
        self.assertIn("bad_type.toml:3:15: 'world.sigma_trans' must be a number", r.stderr)
        r = run("merge", self.world, "--config", DATA / "unknown_key.toml", "--out", self.tmp / "x")
        self.assertEqual(r.returncode, 2)
        self.assertIn("unknown_key.toml:3:9: unknown key 'lcd.windw'", r.stderr)
        r = run("gen", "--config", self.tmp / "missing.toml", "--out", self.tmp / "x")
        self.assertEqual(r.returncode, 2)
        self.assertEqual(run("gen").returncode, 2)
        self.assertEqual(run("merge", self.world, "--mode", "sideways", "--out", self.tmp / "x").returncode, 2)
        self.assertEqual(run().returncode, 2)
        self.assertFalse((self.tmp / "x").exists())

    def test_pipeline_errors_exit_3(self):
        empty = self.tmp / "empty"
        empty.mkdir()
        (empty / "world.jsonl").write_text("")
        r = run("merge", empty, "--out", self.tmp / "y")
        self.assertEqual(r.returncode, 3)
        self.assertIn("no segments", r.stderr)
        r = run("merge", self.tmp / "nowhere", "--out", self.tmp / "y")
        self.assertEqual(r.returncode, 3)
        bad = self.tmp / "bad"
        bad.mkdir()
        (bad / "world.jsonl").write_text('{"seg":0,"k":1,"odom":[0,0,0],"gt":[0,0,0],"desc":[1]}\n')
        r = run("merge", bad, "--out", self.tmp / "y")
        self.assertEqual(r.returncode, 3)
        self.assertIn("missing keyframe 0", r.stderr)
        infeasible = self.tmp / "infeasible.toml"
        infeasible.write_text("[world]\nn_segments = 2\nsegment_length = 100\noverlap = [{ a = 0, b = 1, length = 95 }]\n")
        self.assertEqual(run("gen", "--config", infeasible, "--out", self.tmp / "y").returncode, 3)

    def test_eval_errors_exit_4(self):
        r = run("eval", DATA / "three_overlaps_result", "--truth", self.tmp / "nowhere", "--out", self.tmp / "z")
        self.assertEqual(r.returncode, 4)
        # Poses of an 80-keyframe merge are not in a 10-keyframe dataset.
        merged = self.merge("for_mismatch")
        r = run("eval", merged, "--truth", DATA / "three_overlaps", "--out", self.tmp / "z")
        self.assertEqual(r.returncode, 4)
        self.assertIn("is not in the dataset", r.stderr)
        self.assertFalse((self.tmp / "z").exists())

    def test_plot_errors_exit_5(self):
        res = DATA / "three_overlaps_result"
        self.assertEqual(run("plot", self.tmp / "nowhere", "--kind", "map", "--out", self.tmp / "p.svg").returncode, 5)
        self.assertEqual(run("plot", res, res, "--kind", "map", "--out", self.tmp / "p.svg").returncode, 5)
        # The fixture has no metrics.json.
        self.assertEqual(run("plot", res, "--kind", "recall", "--out", self.tmp / "p.svg").returncode, 5)
        self.assertFalse((self.tmp / "p.svg").exists())


if __name__ == "__main__":
    CLI = sys.argv[1]
    DATA = Path(sys.argv[2])
    unittest.main(argv=sys.argv[:1], verbosity=2)
