/**
 * Parsers for the simulator's exported tables.
 *
 * Trajectory logs are comma-separated with a fixed header contract
 * (t, x1, x2, u, d_hat, ... ctrl_wall_ns) plus a sidecar `<file>.meta` of
 * `key = value` lines.  Benchmark tables mirror the timing report
 * (dx, numerical, surrogate, speedup).  Parsers fail loudly, naming the
 * offending column, rather than guessing.
 */

import * as fs from "node:fs";

export interface TrajectoryTable {
  columns: Map<string, Float64Array>;
  rows: number;
  meta: Map<string, string>;
}

export interface BenchRow {
  dx: number;
  numerical: number;
  surrogate: number;
  speedup: number;
}

export const TRAJECTORY_REQUIRED = ["t", "x1", "x2", "u", "d_hat"];
export const BENCH_REQUIRED = ["dx", "numerical", "surrogate", "speedup"];

export class ParseError extends Error {}

function splitLines(text: string): string[] {
  const lines = text.split(/\r?\n/);
  while (lines.length > 0 && lines[lines.length - 1].trim() === "") lines.pop();
  return lines;
}

export function parseMeta(path: string): Map<string, string> {
  const meta = new Map<string, string>();
  if (!fs.existsSync(path)) return meta;
  for (const line of splitLines(fs.readFileSync(path, "utf8"))) {
    const idx = line.indexOf("=");
    if (idx > 0) meta.set(line.slice(0, idx).trim(), line.slice(idx + 1).trim());
  }
  return meta;
}

export function parseTrajectory(path: string): TrajectoryTable {
  const lines = splitLines(fs.readFileSync(path, "utf8"));
  if (lines.length < 2) throw new ParseError(`${path}: empty trajectory file`);
  const header = lines[0].split(",").map((h) => h.trim());
  for (const required of TRAJECTORY_REQUIRED) {
    if (!header.includes(required)) {
      throw new ParseError(`${path}: missing required column "${required}"`);
    }
  }
  const rows = lines.length - 1;
  const columns = new Map<string, Float64Array>(
    header.map((name) => [name, new Float64Array(rows)]),
  );
  for (let r = 0; r < rows; r++) {
    const parts = lines[r + 1].split(",");
    if (parts.length !== header.length) {
      throw new ParseError(
        `${path}: row ${r + 2} has ${parts.length} fields, header has ${header.length}`,
      );
    }
    for (let c = 0; c < header.length; c++) {
      const v = Number(parts[c]);
      if (Number.isNaN(v) && parts[c].trim() !== "nan") {
        throw new ParseError(
          `${path}: row ${r + 2}, column "${header[c]}" is not numeric: ${parts[c]}`,
        );
      }
      columns.get(header[c])![r] = v;
    }
  }
  return { columns, rows, meta: parseMeta(`${path}.meta`) };
}

export function parseBench(path: string): BenchRow[] {
  const lines = splitLines(fs.readFileSync(path, "utf8"));
  if (lines.length < 2) throw new ParseError(`${path}: empty benchmark table`);
  const header = lines[0].split(",").map((h) => h.trim());
  for (const required of BENCH_REQUIRED) {
    if (!header.includes(required)) {
      throw new ParseError(`${path}: missing required column "${required}"`);
    }
  }
  const out: BenchRow[] = [];
  for (let r = 1; r < lines.length; r++) {
    const parts = lines[r].split(",");
    const get = (name: string) => {
      const v = Number(parts[header.indexOf(name)]);
      if (!Number.isFinite(v)) {
        throw new ParseError(`${path}: row ${r + 1}, column "${name}" is not numeric`);
      }
      return v;
    };
    out.push({
      dx: get("dx"),
      numerical: get("numerical"),
      surrogate: get("surrogate"),
      speedup: get("speedup"),
    });
  }
  return out;
}
