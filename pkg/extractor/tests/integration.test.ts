/**
 * Cross-component run: extracted glyph/apparel features drive the Python
 * toolkit end to end (train, score, eval), and the resulting score
 * distributions for in- and out-of-distribution inputs must differ by a
 * two-sample KS test at p < 0.01.
 */
import { describe, expect, it } from "vitest";
import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { extract } from "../src/extract.js";
import { ksPValue, ksStatistic } from "./ks.js";

function avood(args: string[]): { status: number | null; out: string } {
  const r = spawnSync("python3", ["-m", "avood", ...args], {
    encoding: "utf-8",
    timeout: 240_000,
  });
  return { status: r.status, out: `${r.stdout}\n${r.stderr}` };
}

function readScoreColumn(csvPath: string): number[] {
  const lines = fs.readFileSync(csvPath, "utf-8").trim().split("\n");
  const col = lines[0].split(",").indexOf("score");
  expect(col).toBeGreaterThanOrEqual(0);
  return lines.slice(1).map((line) => Number(line.split(",")[col]));
}

describe("feature handoff to the Python toolkit", () => {
  it("trains, scores, and separates ID from OoD at p < 0.01", async () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "handoff-"));
    const result = await extract({
      dataset: "glyphs-vs-apparel",
      outDir: dir,
      seed: 17,
      weightDecay: false,
      epochs: 8,
      batchSize: 128,
      counts: { train: 1500, val: 300, test: 500, ood: 500 },
    });
    expect(result.accuracy).toBeGreaterThan(0.9);

    const model = path.join(dir, "model.olsr");
    const train = avood([
      "train",
      "--features", result.files.train,
      "--val-features", result.files.val,
      "--init-w", result.manifestPath,
      "--model", model,
      "--epochs", "60",
      "--lr", "1e-3",
      "--batch", "128",
      "--seed", "1",
    ]);
    expect(train.status, train.out).toBe(0);

    const idCsv = path.join(dir, "id_scores.csv");
    const oodCsv = path.join(dir, "ood_scores.csv");
    for (const [features, out] of [
      [result.files.test, idCsv],
      [result.files.ood, oodCsv],
    ] as const) {
      const score = avood([
        "score",
        "--model", model,
        "--features", features,
        "--out", out,
      ]);
      expect(score.status, score.out).toBe(0);
    }

    const report = path.join(dir, "report.json");
    const evalRun = avood([
      "eval",
      "--id-scores", idCsv,
      "--ood-scores", oodCsv,
      "--out", report,
    ]);
    expect(evalRun.status, evalRun.out).toBe(0);
    const metrics = JSON.parse(fs.readFileSync(report, "utf-8")).metrics;

    const idScores = readScoreColumn(idCsv);
    const oodScores = readScoreColumn(oodCsv);
    expect(idScores).toHaveLength(500);
    expect(oodScores).toHaveLength(500);

    const d = ksStatistic(idScores, oodScores);
    const p = ksPValue(d, idScores.length, oodScores.length);
    console.log(
      `KS D=${d.toFixed(4)} p=${p.toExponential(2)} auroc=${metrics.auroc.toFixed(4)}`,
    );
    expect(p).toBeLessThan(0.01);
  }, 600_000);
});
