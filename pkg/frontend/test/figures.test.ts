import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { parseBench, parseTrajectory } from "../src/csv.js";
import { renderBenchFigure } from "../src/bench.js";
import { renderTrajectoryFigure, seriesColor } from "../src/trajectories.js";
import { buildTrajectoryFigure, main, parseArgs } from "../src/cli.js";

const HEADER =
  "t,x1,x2,u,d_hat,d_tilde,phi,gamma_fn,w_fn,n_fn,pred_s1_1,pred_s1_2,ctrl_wall_ns";

let dir: string;

function writeTrajectory(name: string, steps = 200, phase = 0): string {
  const lines = [HEADER];
  for (let k = 0; k < steps; k++) {
    const t = k * 0.01;
    const x1 = 0.0939 + 0.05 * Math.exp(-t) * Math.cos(3 * t + phase);
    const x2 = 5.2525 + 20 * Math.exp(-0.4 * t);
    const u = -0.1 * Math.exp(-t);
    const dh = 2.0 - 0.8 * (1 - Math.exp(-t));
    lines.push(
      `${t},${x1},${x2},${u},${dh},${1 - dh},0,1,0.5,1.2,${x1},${x2},1200`,
    );
  }
  const p = path.join(dir, name);
  fs.writeFileSync(p, lines.join("\n") + "\n");
  fs.writeFileSync(`${p}.meta`, "backend = numerical\ntrue_delay = 1\n");
  return p;
}

function writeBench(name: string, rows: number[][]): string {
  const lines = ["dx,numerical,surrogate,speedup"];
  for (const [dx, num, sur, sp] of rows) lines.push(`${dx},${num},${sur},${sp}`);
  const p = path.join(dir, name);
  fs.writeFileSync(p, lines.join("\n") + "\n");
  return p;
}

function digest(p: string): string {
  return createHash("sha256").update(fs.readFileSync(p)).digest("hex");
}

function extractMetadata(svg: string): any {
  const match = svg.match(/<metadata>(.*?)<\/metadata>/s);
  expect(match).not.toBeNull();
  const unescaped = match![1]
    .replace(/&quot;/g, '"')
    .replace(/&lt;/g, "<")
    .replace(/&gt;/g, ">")
    .replace(/&amp;/g, "&");
  return JSON.parse(unescaped);
}

beforeAll(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "nopf-plots-"));
});

afterAll(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

describe("trajectory parsing", () => {
  it("reads the exported header contract", () => {
    const p = writeTrajectory("a.csv");
    const table = parseTrajectory(p);
    expect(table.rows).toBe(200);
    expect(table.columns.get("x1")![0]).toBeCloseTo(0.0939 + 0.05, 10);
    expect(table.meta.get("backend")).toBe("numerical");
  });

  it("names a missing column", () => {
    const p = path.join(dir, "bad.csv");
    fs.writeFileSync(p, "t,x1,u\n0,1,2\n");
    expect(() => parseTrajectory(p)).toThrowError(/missing required column "x2"/);
  });

  it("rejects an empty file", () => {
    const p = path.join(dir, "empty.csv");
    fs.writeFileSync(p, "");
    expect(() => parseTrajectory(p)).toThrowError(/empty/);
  });
});

describe("four-panel figure", () => {
  it("renders panels, series, and reference lines", () => {
    const inputs = ["numerical", "no adaptation", "high-error surrogate",
      "optimal surrogate"].map((label, i) => ({
      label,
      table: parseTrajectory(writeTrajectory(`run${i}.csv`, 150, i)),
    }));
    const svg = renderTrajectoryFigure(inputs, {
      x1Star: 0.0939,
      x2Star: 5.2525,
      trueDelay: 1.0,
    });
    const meta = extractMetadata(svg);
    expect(meta.panels).toEqual(["x1", "x2", "u", "d_hat"]);
    expect(meta.series).toHaveLength(4);
    expect(meta.reference_lines.x1).toBeCloseTo(0.0939);
    expect(meta.reference_lines.x2).toBeCloseTo(5.2525);
    expect(meta.reference_lines.d_hat).toBeCloseTo(1.0);
    expect((svg.match(/class="panel"/g) ?? []).length).toBe(4);
    expect((svg.match(/class="series"/g) ?? []).length).toBe(16);
    expect((svg.match(/class="reference"/g) ?? []).length).toBe(3);
    expect(svg).toContain('data-value="0.0939"');
    expect(svg).toContain('data-value="5.2525"');
  });

  it("uses the published color roles", () => {
    expect(seriesColor("numerical", 0)).toBe("#000000");
    expect(seriesColor("no adaptation", 1)).toBe("#1f4fd8");
    expect(seriesColor("high-error surrogate", 2)).toBe("#d81f1f");
    expect(seriesColor("optimal surrogate", 3)).toBe("#1f8c2f");
    expect(seriesColor("something else", 2)).not.toBe("#000000");
  });

  it("rejects duplicate labels", () => {
    const t = parseTrajectory(writeTrajectory("dup.csv"));
    expect(() =>
      renderTrajectoryFigure(
        [
          { label: "same", table: t },
          { label: "same", table: t },
        ],
        { x1Star: 0, x2Star: 0, trueDelay: 1 },
      ),
    ).toThrowError(/unique/);
  });

  it("is deterministic for a fixed spec", () => {
    const t = parseTrajectory(writeTrajectory("det.csv"));
    const opts = { x1Star: 0.0939, x2Star: 5.2525, trueDelay: 1.0 };
    const a = renderTrajectoryFigure([{ label: "numerical", table: t }], opts);
    const b = renderTrajectoryFigure([{ label: "numerical", table: t }], opts);
    expect(a).toBe(b);
  });
});

describe("bench figure", () => {
  it("renders one group per step size with speedup annotations", () => {
    const p = writeBench("bench.csv", [
      [0.01, 1.6, 0.5, 3.22],
      [0.005, 3.3, 0.59, 5.61],
      [0.001, 18.2, 1.21, 15.01],
    ]);
    const svg = renderBenchFigure(parseBench(p));
    expect((svg.match(/class="group"/g) ?? []).length).toBe(3);
    expect(svg).toContain("15.01x");
    const meta = extractMetadata(svg);
    expect(meta.groups).toEqual([0.01, 0.005, 0.001]);
  });

  it("renders a single-row table", () => {
    const p = writeBench("bench1.csv", [[0.01, 1.6, 0.5, 3.22]]);
    const svg = renderBenchFigure(parseBench(p));
    expect((svg.match(/class="group"/g) ?? []).length).toBe(1);
  });

  it("names a missing speedup column", () => {
    const p = path.join(dir, "badbench.csv");
    fs.writeFileSync(p, "dx,numerical,surrogate\n0.01,1,2\n");
    expect(() => parseBench(p)).toThrowError(/missing required column "speedup"/);
  });
});

describe("command line", () => {
  it("parses flags", () => {
    const args = parseArgs(["--spec", "s.json", "--out", "x.svg"]);
    expect(args.spec).toBe("s.json");
    expect(args.out).toBe("x.svg");
    expect(() => parseArgs(["--bogus"])).toThrowError(/unknown flag/);
  });

  it("plots from a spec file and leaves inputs untouched", () => {
    const runs = [0, 1, 2, 3].map((i) => writeTrajectory(`spec${i}.csv`, 120, i));
    const spec = {
      inputs: [
        { path: runs[0], label: "numerical" },
        { path: runs[1], label: "no adaptation" },
        { path: runs[2], label: "high-error surrogate" },
        { path: runs[3], label: "optimal surrogate" },
      ],
      out: path.join(dir, "figure.svg"),
    };
    const specPath = path.join(dir, "spec.json");
    fs.writeFileSync(specPath, JSON.stringify(spec));
    const before = runs.map(digest);
    expect(main(["--spec", specPath])).toBe(0);
    expect(runs.map(digest)).toEqual(before);
    const svg = fs.readFileSync(spec.out, "utf8");
    const meta = extractMetadata(svg);
    expect(meta.series).toEqual([
      "numerical",
      "no adaptation",
      "high-error surrogate",
      "optimal surrogate",
    ]);
    // true delay picked up from the sidecar
    expect(meta.reference_lines.d_hat).toBe(1);
  });

  it("writes png when asked", () => {
    const run = writeTrajectory("png.csv");
    const out = path.join(dir, "figure.png");
    expect(main([run, "--labels", "numerical", "--out", out])).toBe(0);
    const bytes = fs.readFileSync(out);
    expect(bytes.subarray(1, 4).toString()).toBe("PNG");
  });

  it("rejects unknown output extensions", () => {
    const run = writeTrajectory("ext.csv");
    expect(main([run, "--out", path.join(dir, "figure.gif")])).toBe(1);
  });

  it("fails cleanly on an empty input", () => {
    const p = path.join(dir, "void.csv");
    fs.writeFileSync(p, "");
    expect(main([p, "--out", path.join(dir, "x.svg")])).toBe(2);
  });

  it("renders the bench table via --bench", () => {
    const p = writeBench("benchcli.csv", [
      [0.01, 1.6, 0.5, 3.22],
      [0.005, 3.3, 0.59, 5.61],
      [0.001, 18.2, 1.21, 15.01],
    ]);
    const out = path.join(dir, "bench.svg");
    expect(main(["--bench", p, "--out", out])).toBe(0);
    expect(fs.existsSync(out)).toBe(true);
  });
});
