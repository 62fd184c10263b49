/** Hand-built SVG primitives: no DOM, deterministic output. */

export interface Extent {
  min: number;
  max: number;
}

export function extent(values: ArrayLike<number>, pad = 0.05): Extent {
  let min = Infinity;
  let max = -Infinity;
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (!Number.isFinite(v)) continue;
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!Number.isFinite(min)) {
    min = 0;
    max = 1;
  }
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const span = max - min;
  return { min: min - pad * span, max: max + pad * span };
}

export function mergeExtents(a: Extent, b: Extent): Extent {
  return { min: Math.min(a.min, b.min), max: Math.max(a.max, b.max) };
}

export function includeValue(e: Extent, v: number, pad = 0.05): Extent {
  const span = e.max - e.min;
  return {
    min: Math.min(e.min, v - pad * span),
    max: Math.max(e.max, v + pad * span),
  };
}

export class Scale {
  constructor(
    readonly domain: Extent,
    readonly range: [number, number],
  ) {}

  map(v: number): number {
    const t = (v - this.domain.min) / (this.domain.max - this.domain.min);
    return this.range[0] + t * (this.range[1] - this.range[0]);
  }
}

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const fmt = (v: number) => (Math.abs(v) < 1e-12 ? "0" : +v.toPrecision(6) + "");

export function polylinePath(
  xs: ArrayLike<number>,
  ys: ArrayLike<number>,
  sx: Scale,
  sy: Scale,
  maxPoints = 2000,
): string {
  const n = xs.length;
  const stride = Math.max(1, Math.ceil(n / maxPoints));
  const parts: string[] = [];
  let pen = "M";
  for (let i = 0; i < n; i += stride) {
    const x = sx.map(xs[i]);
    const y = sy.map(ys[i]);
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      pen = "M";
      continue;
    }
    parts.push(`${pen}${fmt(x)} ${fmt(y)}`);
    pen = "L";
  }
  return parts.join(" ");
}

export function niceTicks(e: Extent, count = 5): number[] {
  const span = e.max - e.min;
  const rawStep = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = mag;
  for (const m of [1, 2, 5, 10]) {
    if (m * mag >= rawStep) {
      step = m * mag;
      break;
    }
  }
  const start = Math.ceil(e.min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= e.max + 1e-12 * span; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

export function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return +v.toPrecision(4) + "";
}
