/**
 * Figure renderers over the stable CSV schema. Every renderer is a pure
 * function of its input files; unknown columns fail fast in schema.ts.
 */

import * as path from 'path';

import { FieldPoint, ResultRow, SchemaError, keyAbscissa, readField, readResults } from './schema.js';
import { AxisBox, Svg, divergingColor, drawAxes, fmt, trimNum, xPix, yPix } from './svg.js';

export interface FigureSpec {
  kind: 'curve' | 'heatmap-pair' | 'sweep' | 'sandwich';
  input: string;            // results.csv (or directory holding it)
  out: string;              // output file name (.svg)
  experiment?: string;      // filter on the experiment column
  key_base?: string;        // series selector, e.g. "cond_mean_x"
  field_a?: string;         // heatmap-pair: fields/<field_a>.csv
  field_b?: string;
  slice_axis?: number;      // heatmap slice axis (default 2)
  slice_at?: number;        // slice coordinate (default 0)
  title?: string;
  xlabel?: string;
  ylabel?: string;
}

const W = 520;
const H = 360;

function emptyBanner(title: string): string {
  const svg = new Svg(W, H);
  svg.rect(20, 20, W - 40, H - 40, '#fff7e6', '#cc8800');
  svg.text(W / 2, H / 2 - 8, 'EMPTY RESULTS TABLE', 16, 'middle');
  svg.text(W / 2, H / 2 + 14, title, 11, 'middle');
  return svg.toString();
}

function seriesFromRows(rows: ResultRow[], base: string): Array<{ x: number; y: number; se: number }> {
  const pts: Array<{ x: number; y: number; se: number }> = [];
  for (const r of rows) {
    const parsed = keyAbscissa(r.key);
    if (parsed && parsed.base === base) {
      pts.push({ x: parsed.x, y: r.value, se: r.se });
    }
  }
  pts.sort((a, b) => a.x - b.x);
  return pts;
}

export function renderCurve(spec: FigureSpec): string {
  const rows = readResults(resolveResults(spec.input)).filter(
    (r) => !spec.experiment || r.experiment === spec.experiment,
  );
  if (rows.length === 0) return emptyBanner(spec.title ?? spec.input);
  const base = spec.key_base ?? inferBase(rows);
  const pts = seriesFromRows(rows, base);
  if (pts.length === 0) {
    throw new SchemaError(`no keys of the form "${base}@..." in ${spec.input}`);
  }
  const svg = new Svg(W, H);
  const ys = pts.flatMap((p) => [p.y - 3 * p.se, p.y + 3 * p.se]);
  const box: AxisBox = {
    x0: 64, y0: 40, w: W - 96, h: H - 110,
    xmin: Math.min(...pts.map((p) => p.x)),
    xmax: Math.max(...pts.map((p) => p.x)),
    ymin: Math.min(0, ...ys),
    ymax: Math.max(0, ...ys),
  };
  drawAxes(svg, box, spec.xlabel ?? 'level', spec.ylabel ?? base);
  // +-3 SE band
  const upper = pts.map((p) => [xPix(box, p.x), yPix(box, p.y + 3 * p.se)] as [number, number]);
  const lower = pts
    .slice()
    .reverse()
    .map((p) => [xPix(box, p.x), yPix(box, p.y - 3 * p.se)] as [number, number]);
  svg.polygon(upper.concat(lower), '#4477aa');
  svg.polyline(pts.map((p) => [xPix(box, p.x), yPix(box, p.y)]), '#224466', 2);
  for (const p of pts) svg.circle(xPix(box, p.x), yPix(box, p.y), 3, '#224466');
  const zero = yPix(box, 0);
  svg.line(box.x0, zero, box.x0 + box.w, zero, '#999', 0.75);
  svg.text(W / 2, 24, spec.title ?? base, 13, 'middle');
  return svg.toString();
}

export function renderSweep(spec: FigureSpec): string {
  return renderCurve({ ...spec, xlabel: spec.xlabel ?? 'sweep parameter' });
}

export function renderSandwich(spec: FigureSpec): string {
  const rows = readResults(resolveResults(spec.input)).filter(
    (r) => !spec.experiment || r.experiment === spec.experiment,
  );
  if (rows.length === 0) return emptyBanner(spec.title ?? spec.input);
  const base = spec.key_base ?? 'max_violation';
  return renderCurve({ ...spec, key_base: base, xlabel: spec.xlabel ?? 'box side L', ylabel: 'violation' });
}

export function renderHeatmapPair(spec: FigureSpec): string {
  const dir = path.dirname(resolveResults(spec.input));
  const fa = readField(path.join(dir, 'fields', `${spec.field_a ?? 'conditional_mean'}.csv`));
  const fb = readField(path.join(dir, 'fields', `${spec.field_b ?? 'minus_hA'}.csv`));
  const axis = spec.slice_axis ?? 2;
  const at = spec.slice_at ?? 0;
  const sa = sliceField(fa, axis, at);
  const sb = sliceField(fb, axis, at);
  const lo = Math.min(...sa.map((p) => p.v), ...sb.map((p) => p.v));
  const hi = Math.max(...sa.map((p) => p.v), ...sb.map((p) => p.v));
  const span = hi - lo || 1;
  const svg = new Svg(2 * W * 0.55 + 60, H);
  const cell = drawHeat(svg, sa, 30, 50, W * 0.5, H - 120, lo, span);
  drawHeat(svg, sb, 50 + W * 0.55, 50, W * 0.5, H - 120, lo, span);
  svg.text(30 + W * 0.25, 40, spec.field_a ?? 'conditional_mean', 12, 'middle');
  svg.text(50 + W * 0.55 + W * 0.25, 40, spec.field_b ?? 'minus_hA', 12, 'middle');
  // shared scale bar
  const bx = 30;
  const by = H - 50;
  for (let i = 0; i < 120; i++) {
    svg.rect(bx + i * 2, by, 2, 12, divergingColor(i / 119));
  }
  svg.text(bx, by + 24, trimNum(lo), 9, 'start');
  svg.text(bx + 240, by + 24, trimNum(hi), 9, 'end');
  svg.text(W / 2, 20, spec.title ?? 'conditional mean vs target shape', 13, 'middle');
  void cell;
  return svg.toString();
}

function sliceField(
  pts: FieldPoint[],
  axis: number,
  at: number,
): Array<{ u: number; v: number; w: number }> {
  const keep = pts.filter((p) => p.coords[axis] === at);
  if (keep.length === 0) {
    throw new SchemaError(`field slice x${axis}=${at} is empty`);
  }
  const other = [0, 1, 2].filter((j) => j !== axis);
  return keep.map((p) => ({ u: p.coords[other[0]], v: p.value, w: p.coords[other[1]] }));
}

function drawHeat(
  svg: Svg,
  pts: Array<{ u: number; v: number; w: number }>,
  x0: number,
  y0: number,
  w: number,
  h: number,
  lo: number,
  span: number,
): number {
  const us = pts.map((p) => p.u);
  const ws = pts.map((p) => p.w);
  const umin = Math.min(...us);
  const umax = Math.max(...us);
  const wmin = Math.min(...ws);
  const wmax = Math.max(...ws);
  const nu = umax - umin + 1;
  const nw = wmax - wmin + 1;
  const cw = w / nu;
  const ch = h / nw;
  for (const p of pts) {
    const px = x0 + (p.u - umin) * cw;
    const py = y0 + (wmax - p.w) * ch;
    svg.rect(px, py, cw + 0.5, ch + 0.5, divergingColor((p.v - lo) / span));
  }
  return cw;
}

function inferBase(rows: ResultRow[]): string {
  for (const r of rows) {
    const parsed = keyAbscissa(r.key);
    if (parsed) return parsed.base;
  }
  throw new SchemaError('no series keys (name@x) found; pass key_base');
}

function resolveResults(input: string): string {
  return input.endsWith('.csv') ? input : path.join(input, 'results.csv');
}

export function render(spec: FigureSpec): string {
  switch (spec.kind) {
    case 'curve':
      return renderCurve(spec);
    case 'sweep':
      return renderSweep(spec);
    case 'sandwich':
      return renderSandwich(spec);
    case 'heatmap-pair':
      return renderHeatmapPair(spec);
    default:
      throw new SchemaError(`unknown figure kind ${(spec as FigureSpec).kind}`);
  }
}
