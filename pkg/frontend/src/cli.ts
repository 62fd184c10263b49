/**
 * Figure renderer for the delay-adaptive predictor pipeline exports.
 *
 * Usage:
 *   plot --spec spec.json
 *   plot run1.csv [run2.csv ...] [--labels a,b,...] [--out figure.svg]
 *   plot --bench bench.csv [--out bench.svg]
 *
 * The output format follows the --out extension: .svg writes the markup
 * directly, .png rasterizes it.  A spec file is JSON:
 *   { "inputs": [{"path": "...", "label": "..."}, ...],
 *     "x1_star": 0.0939, "x2_star": 5.2525, "true_delay": 1.0,
 *     "out": "figure.svg" }
 * Reference values default to the activator/repressor setpoint, and the
 * true delay falls back to the first input's sidecar metadata.
 */

import * as fs from "node:fs";
import { createRequire } from "node:module";
import * as path from "node:path";

import { ParseError, parseBench, parseTrajectory } from "./csv.js";
import { renderBenchFigure } from "./bench.js";
import { SeriesInput, renderTrajectoryFigure } from "./trajectories.js";

export interface PlotSpec {
  inputs: Array<{ path: string; label?: string }>;
  x1_star?: number;
  x2_star?: number;
  true_delay?: number;
  out?: string;
}

export class UsageError extends Error {}

export function writeFigure(svg: string, outPath: string): void {
  const ext = path.extname(outPath).toLowerCase();
  if (ext === ".svg") {
    fs.writeFileSync(outPath, svg);
  } else if (ext === ".png") {
    // lazy load so SVG-only use works even without the native rasterizer
    const require_ = createRequire(import.meta.url);
    const { Resvg } = require_("@resvg/resvg-js");
    fs.writeFileSync(outPath, new Resvg(svg).render().asPng());
  } else {
    throw new UsageError(`unsupported output extension "${ext}"; use .svg or .png`);
  }
}

export function buildTrajectoryFigure(spec: PlotSpec): string {
  if (!spec.inputs || spec.inputs.length === 0) {
    throw new UsageError("plot spec needs at least one input trajectory");
  }
  const series: SeriesInput[] = spec.inputs.map((input, i) => ({
    label: input.label ?? path.basename(input.path).replace(/\.csv$/i, "") ?? `run ${i}`,
    table: parseTrajectory(input.path),
  }));
  let trueDelay = spec.true_delay;
  if (trueDelay === undefined) {
    const fromMeta = series[0].table.meta.get("true_delay");
    trueDelay = fromMeta !== undefined ? Number(fromMeta) : 1.0;
  }
  return renderTrajectoryFigure(series, {
    x1Star: spec.x1_star ?? 0.0939,
    x2Star: spec.x2_star ?? 5.2525,
    trueDelay,
  });
}

interface Args {
  spec?: string;
  bench?: string;
  out: string;
  labels?: string[];
  positional: string[];
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { out: "", positional: [] };
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new UsageError(`${a} needs a value`);
      return argv[++i];
    };
    if (a === "--spec") args.spec = next();
    else if (a === "--bench") args.bench = next();
    else if (a === "--out") args.out = next();
    else if (a === "--labels") args.labels = next().split(",");
    else if (a.startsWith("--")) throw new UsageError(`unknown flag ${a}`);
    else args.positional.push(a);
  }
  return args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
  try {
    if (args.bench) {
      const rows = parseBench(args.bench);
      writeFigure(renderBenchFigure(rows), args.out || "bench.svg");
      console.log(`wrote ${args.out || "bench.svg"} (${rows.length} groups)`);
      return 0;
    }
    let spec: PlotSpec;
    if (args.spec) {
      spec = JSON.parse(fs.readFileSync(args.spec, "utf8")) as PlotSpec;
    } else if (args.positional.length > 0) {
      spec = {
        inputs: args.positional.map((p, i) => ({
          path: p,
          label: args.labels?.[i],
        })),
      };
    } else {
      throw new UsageError("nothing to plot: pass --spec, --bench, or CSV paths");
    }
    const out = args.out || spec.out || "figure.svg";
    writeFigure(buildTrajectoryFigure(spec), out);
    console.log(`wrote ${out} (${spec.inputs.length} series)`);
    return 0;
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(err.message);
      return 1;
    }
    if (err instanceof ParseError || err instanceof SyntaxError) {
      console.error(String(err instanceof Error ? err.message : err));
      return 2;
    }
    console.error(String(err instanceof Error ? err.message : err));
    return 3;
  }
}

const invoked = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (invoked.endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
