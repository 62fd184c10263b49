/**
 * Four-panel trajectory figure: x1, x2, U, and the delay estimate over time,
 * one series per run, with dashed reference lines at the target equilibrium
 * and (on the estimate panel) the true delay.
 */

import { TrajectoryTable } from "./csv.js";
import {
  Scale,
  esc,
  extent,
  includeValue,
  mergeExtents,
  niceTicks,
  polylinePath,
  tickLabel,
} from "./svg.js";

export interface SeriesInput {
  label: string;
  table: TrajectoryTable;
}

export interface TrajectoryFigureOptions {
  x1Star: number;
  x2Star: number;
  trueDelay: number;
  width?: number;
  panelHeight?: number;
}

// Role convention: black = marching predictor, blue = frozen estimate,
// red = high-error surrogate, green = surrogate trained to optimality.
const ROLE_COLORS: Array<[RegExp, string]> = [
  [/no[-_ ]?adapt|frozen/i, "#1f4fd8"],
  [/high|early|large/i, "#d81f1f"],
  [/optimal|full|trained/i, "#1f8c2f"],
  [/numerical|exact|march/i, "#000000"],
];
const PALETTE = ["#7044a0", "#c07820", "#2089a0", "#a04470", "#607020"];

export function seriesColor(label: string, index: number): string {
  for (const [pattern, color] of ROLE_COLORS) {
    if (pattern.test(label)) return color;
  }
  return PALETTE[index % PALETTE.length];
}

interface PanelSpec {
  column: string;
  title: string;
  reference?: number;
}

export function renderTrajectoryFigure(
  series: SeriesInput[],
  opts: TrajectoryFigureOptions,
): string {
  if (series.length === 0) throw new Error("no trajectory series to plot");
  const labels = series.map((s) => s.label);
  if (new Set(labels).size !== labels.length) {
    throw new Error(`series labels must be unique: ${labels.join(", ")}`);
  }
  const width = opts.width ?? 860;
  const panelH = opts.panelHeight ?? 170;
  const margin = { left: 72, right: 24, top: 34, bottom: 34 };
  const legendH = 26;
  const panels: PanelSpec[] = [
    { column: "x1", title: "activator x1", reference: opts.x1Star },
    { column: "x2", title: "repressor x2", reference: opts.x2Star },
    { column: "u", title: "control U" },
    { column: "d_hat", title: "delay estimate", reference: opts.trueDelay },
  ];
  const height = margin.top + legendH + panels.length * panelH + margin.bottom;

  let tExtent = extent(series[0].table.columns.get("t")!);
  for (const s of series) tExtent = mergeExtents(tExtent, extent(s.table.columns.get("t")!));
  const sx = new Scale(tExtent, [margin.left, width - margin.right]);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
  );
  const metadata = {
    kind: "trajectory-figure",
    panels: panels.map((p) => p.column),
    series: labels,
    reference_lines: { x1: opts.x1Star, x2: opts.x2Star, d_hat: opts.trueDelay },
    width,
    height,
  };
  parts.push(`<metadata>${esc(JSON.stringify(metadata))}</metadata>`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);

  // legend
  let lx = margin.left;
  const ly = margin.top - 8;
  series.forEach((s, i) => {
    const color = seriesColor(s.label, i);
    parts.push(
      `<line x1="${lx}" y1="${ly}" x2="${lx + 26}" y2="${ly}" stroke="${color}" stroke-width="2.4"/>`,
    );
    parts.push(
      `<text x="${lx + 31}" y="${ly + 4}" font-size="12">${esc(s.label)}</text>`,
    );
    lx += 42 + 7.2 * s.label.length;
  });

  panels.forEach((panel, pi) => {
    const top = margin.top + legendH + pi * panelH;
    const bottom = top + panelH - 30;
    let ext = extent(series[0].table.columns.get(panel.column)!);
    for (const s of series) {
      ext = mergeExtents(ext, extent(s.table.columns.get(panel.column)!));
    }
    if (panel.reference !== undefined) ext = includeValue(ext, panel.reference);
    const sy = new Scale(ext, [bottom, top + 8]);

    parts.push(`<g class="panel" data-column="${panel.column}">`);
    parts.push(
      `<rect x="${margin.left}" y="${top + 8}" width="${width - margin.left - margin.right}" ` +
        `height="${bottom - top - 8}" fill="none" stroke="#999" stroke-width="0.8"/>`,
    );
    parts.push(
      `<text x="${margin.left}" y="${top + 2}" font-size="12" fill="#333">${esc(panel.title)}</text>`,
    );
    for (const tick of niceTicks(ext, 4)) {
      const y = sy.map(tick);
      parts.push(
        `<line x1="${margin.left - 4}" y1="${y}" x2="${margin.left}" y2="${y}" stroke="#333" stroke-width="0.8"/>`,
      );
      parts.push(
        `<text x="${margin.left - 8}" y="${y + 3.5}" font-size="10" text-anchor="end">${tickLabel(tick)}</text>`,
      );
    }
    if (panel.reference !== undefined) {
      const y = sy.map(panel.reference);
      parts.push(
        `<line class="reference" data-value="${panel.reference}" x1="${margin.left}" y1="${y}" ` +
          `x2="${width - margin.right}" y2="${y}" stroke="#666" stroke-width="1" stroke-dasharray="6 4"/>`,
      );
    }
    series.forEach((s, i) => {
      const d = polylinePath(
        s.table.columns.get("t")!,
        s.table.columns.get(panel.column)!,
        sx,
        sy,
      );
      parts.push(
        `<path class="series" data-label="${esc(s.label)}" d="${d}" fill="none" ` +
          `stroke="${seriesColor(s.label, i)}" stroke-width="1.6"/>`,
      );
    });
    if (pi === panels.length - 1) {
      for (const tick of niceTicks(tExtent, 6)) {
        const x = sx.map(tick);
        parts.push(
          `<line x1="${x}" y1="${bottom}" x2="${x}" y2="${bottom + 4}" stroke="#333" stroke-width="0.8"/>`,
        );
        parts.push(
          `<text x="${x}" y="${bottom + 16}" font-size="10" text-anchor="middle">${tickLabel(tick)}</text>`,
        );
      }
      parts.push(
        `<text x="${(margin.left + width - margin.right) / 2}" y="${bottom + 30}" ` +
          `font-size="12" text-anchor="middle">time [s]</text>`,
      );
    }
    parts.push("</g>");
  });

  parts.push("</svg>");
  return parts.join("\n");
}
