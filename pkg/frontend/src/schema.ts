/**
 * Readers for the stable CSV/JSON interfaces of the simulation package:
 *   results.csv   -- long format: experiment,key,value,se
 *   manifest.json -- resolved configuration
 *   fields/*.csv  -- raw site dumps: x0,...,x{d-1},value
 * Fails fast with an explicit column diagnostic on any schema mismatch.
 */

import * as fs from 'fs';

export interface ResultRow {
  experiment: string;
  key: string;
  value: number;
  se: number;
}

export interface FieldPoint {
  coords: number[];
  value: number;
}

export class SchemaError extends Error {}

function splitCsvLine(line: string): string[] {
  return line.split(',').map((s) => s.trim());
}

export function readResults(path: string): ResultRow[] {
  const text = fs.readFileSync(path, 'utf8').trim();
  if (text === '') return [];
  const lines = text.split(/\r?\n/);
  const header = splitCsvLine(lines[0]);
  const expected = ['experiment', 'key', 'value', 'se'];
  if (header.length !== 4 || expected.some((c, i) => header[i] !== c)) {
    throw new SchemaError(
      `results.csv header mismatch: expected [${expected.join(', ')}], ` +
      `got [${header.join(', ')}] in ${path}`,
    );
  }
  const rows: ResultRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = splitCsvLine(lines[i]);
    if (parts.length !== 4) {
      throw new SchemaError(`results.csv row ${i + 1} has ${parts.length} columns, expected 4`);
    }
    const value = Number(parts[2]);
    const se = Number(parts[3]);
    if (Number.isNaN(value) || Number.isNaN(se)) {
      throw new SchemaError(`results.csv row ${i + 1}: non-numeric value/se`);
    }
    rows.push({ experiment: parts[0], key: parts[1], value, se });
  }
  return rows;
}

export function readField(path: string): FieldPoint[] {
  const text = fs.readFileSync(path, 'utf8').trim();
  const lines = text.split(/\r?\n/);
  const header = splitCsvLine(lines[0]);
  if (header[header.length - 1] !== 'value' || !header[0].startsWith('x')) {
    throw new SchemaError(
      `field csv header mismatch: expected x0,...,value, got [${header.join(', ')}] in ${path}`,
    );
  }
  const d = header.length - 1;
  const pts: FieldPoint[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = splitCsvLine(lines[i]).map(Number);
    if (parts.length !== d + 1 || parts.some(Number.isNaN)) {
      throw new SchemaError(`field csv row ${i + 1}: malformed`);
    }
    pts.push({ coords: parts.slice(0, d), value: parts[d] });
  }
  return pts;
}

export function readManifest(path: string): Record<string, unknown> {
  return JSON.parse(fs.readFileSync(path, 'utf8'));
}

/** Keys like "cond_mean_x@h1.200" carry their abscissa after '@'; the
 *  leading letter names the axis (h, s, cov, L). */
export function keyAbscissa(key: string): { base: string; x: number } | null {
  const at = key.indexOf('@');
  if (at < 0) return null;
  const tag = key.slice(at + 1);
  const m = tag.match(/^([a-zA-Z]+)(-?[0-9.]+)$/);
  if (!m) return null;
  return { base: key.slice(0, at), x: Number(m[2]) };
}
