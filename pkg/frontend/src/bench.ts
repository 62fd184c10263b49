/** Grouped bar chart of predictor evaluation times with speedup labels. */

import { BenchRow } from "./csv.js";
import { esc, tickLabel } from "./svg.js";

export function renderBenchFigure(rows: BenchRow[], width = 640): string {
  if (rows.length === 0) throw new Error("benchmark table has no rows");
  const margin = { left: 80, right: 24, top: 44, bottom: 44 };
  const height = 360;
  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  const maxTime = Math.max(...rows.map((r) => Math.max(r.numerical, r.surrogate)));
  const yScale = (v: number) => margin.top + plotH * (1 - v / (1.1 * maxTime));

  const groupW = plotW / rows.length;
  const barW = Math.min(52, groupW / 3);

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
  );
  const metadata = {
    kind: "bench-figure",
    groups: rows.map((r) => r.dx),
    speedups: rows.map((r) => r.speedup),
    width,
    height,
  };
  parts.push(`<metadata>${esc(JSON.stringify(metadata))}</metadata>`);
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<text x="${width / 2}" y="20" font-size="14" text-anchor="middle">` +
      `predictor evaluation time per query</text>`,
  );

  // y axis
  parts.push(
    `<line x1="${margin.left}" y1="${margin.top}" x2="${margin.left}" ` +
      `y2="${margin.top + plotH}" stroke="#333" stroke-width="1"/>`,
  );
  for (let i = 0; i <= 4; i++) {
    const v = (1.1 * maxTime * i) / 4;
    const y = yScale(v);
    parts.push(
      `<line x1="${margin.left - 4}" y1="${y}" x2="${margin.left}" y2="${y}" stroke="#333"/>`,
    );
    parts.push(
      `<text x="${margin.left - 8}" y="${y + 3.5}" font-size="10" text-anchor="end">` +
        `${tickLabel(v)}</text>`,
    );
  }
  parts.push(
    `<text x="16" y="${margin.top + plotH / 2}" font-size="12" ` +
      `transform="rotate(-90 16 ${margin.top + plotH / 2})" text-anchor="middle">seconds</text>`,
  );

  rows.forEach((row, i) => {
    const cx = margin.left + groupW * (i + 0.5);
    const base = margin.top + plotH;
    parts.push(`<g class="group" data-dx="${row.dx}">`);
    parts.push(
      `<rect class="bar-numerical" x="${cx - barW - 3}" y="${yScale(row.numerical)}" ` +
        `width="${barW}" height="${base - yScale(row.numerical)}" fill="#444"/>`,
    );
    parts.push(
      `<rect class="bar-surrogate" x="${cx + 3}" y="${yScale(row.surrogate)}" ` +
        `width="${barW}" height="${base - yScale(row.surrogate)}" fill="#1f8c2f"/>`,
    );
    const annotY = yScale(Math.max(row.numerical, row.surrogate)) - 8;
    parts.push(
      `<text class="speedup" x="${cx}" y="${annotY}" font-size="12" text-anchor="middle">` +
        `${row.speedup.toFixed(2)}x</text>`,
    );
    parts.push(
      `<text x="${cx}" y="${base + 16}" font-size="11" text-anchor="middle">dx=${row.dx}</text>`,
    );
    parts.push("</g>");
  });

  // legend
  const ly = height - 12;
  parts.push(`<rect x="${margin.left}" y="${ly - 9}" width="12" height="10" fill="#444"/>`);
  parts.push(`<text x="${margin.left + 17}" y="${ly}" font-size="11">marching predictor</text>`);
  parts.push(
    `<rect x="${margin.left + 150}" y="${ly - 9}" width="12" height="10" fill="#1f8c2f"/>`,
  );
  parts.push(`<text x="${margin.left + 167}" y="${ly}" font-size="11">DeepONet surrogate</text>`);

  parts.push("</svg>");
  return parts.join("\n");
}
