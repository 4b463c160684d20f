/**
 * Deterministic SVG primitives: fixed decimal formatting, no timestamps,
 * no randomness, so byte-identical reruns are guaranteed.
 */

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return '0';
  const s = x.toFixed(4);
  return s === '-0.0000' ? '0.0000' : s;
}

export class Svg {
  private parts: string[] = [];
  constructor(readonly width: number, readonly height: number) {}

  rect(x: number, y: number, w: number, h: number, fill: string, stroke = 'none'): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}" stroke="${stroke}"/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.5): void {
    const body = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
    this.parts.push(
      `<polyline points="${body}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`,
    );
  }

  polygon(pts: Array<[number, number]>, fill: string, opacity = 0.25): void {
    const body = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
    this.parts.push(`<polygon points="${body}" fill="${fill}" opacity="${opacity}"/>`);
  }

  circle(x: number, y: number, r: number, fill: string): void {
    this.parts.push(`<circle cx="${fmt(x)}" cy="${fmt(y)}" r="${fmt(r)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, size = 11, anchor = 'start'): void {
    const esc = content.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}">${esc}</text>`,
    );
  }

  toString(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join('\n') +
      '\n</svg>\n'
    );
  }
}

export interface AxisBox {
  x0: number;
  y0: number;
  w: number;
  h: number;
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

export function xPix(a: AxisBox, x: number): number {
  const span = a.xmax - a.xmin || 1;
  return a.x0 + ((x - a.xmin) / span) * a.w;
}

export function yPix(a: AxisBox, y: number): number {
  const span = a.ymax - a.ymin || 1;
  return a.y0 + a.h - ((y - a.ymin) / span) * a.h;
}

export function drawAxes(svg: Svg, a: AxisBox, xlabel: string, ylabel: string): void {
  svg.line(a.x0, a.y0 + a.h, a.x0 + a.w, a.y0 + a.h, '#222');
  svg.line(a.x0, a.y0, a.x0, a.y0 + a.h, '#222');
  const xticks = 5;
  for (let i = 0; i <= xticks; i++) {
    const x = a.xmin + ((a.xmax - a.xmin) * i) / xticks;
    const px = xPix(a, x);
    svg.line(px, a.y0 + a.h, px, a.y0 + a.h + 4, '#222');
    svg.text(px, a.y0 + a.h + 16, trimNum(x), 9, 'middle');
  }
  for (let i = 0; i <= 4; i++) {
    const y = a.ymin + ((a.ymax - a.ymin) * i) / 4;
    const py = yPix(a, y);
    svg.line(a.x0 - 4, py, a.x0, py, '#222');
    svg.text(a.x0 - 6, py + 3, trimNum(y), 9, 'end');
  }
  svg.text(a.x0 + a.w / 2, a.y0 + a.h + 30, xlabel, 11, 'middle');
  svg.text(a.x0 - 44, a.y0 - 8, ylabel, 11, 'start');
}

export function trimNum(x: number): string {
  if (x === 0) return '0';
  const ax = Math.abs(x);
  if (ax >= 1000 || ax < 0.001) return x.toExponential(1);
  return Number(x.toPrecision(3)).toString();
}

/** Shared diverging color scale for heatmaps (blue - white - red). */
export function divergingColor(t: number): string {
  const u = Math.max(0, Math.min(1, t));
  const lerp = (a: number, b: number, s: number) => Math.round(a + (b - a) * s);
  let r: number, g: number, b: number;
  if (u < 0.5) {
    const s = u / 0.5;
    r = lerp(33, 247, s);
    g = lerp(102, 247, s);
    b = lerp(172, 247, s);
  } else {
    const s = (u - 0.5) / 0.5;
    r = lerp(247, 178, s);
    g = lerp(247, 24, s);
    b = lerp(247, 43, s);
  }
  return `rgb(${r},${g},${b})`;
}
