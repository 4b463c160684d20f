/**
 * gfflab-render --spec figure.json --out DIR
 *
 * The spec file holds {"figures": [FigureSpec, ...]}; each entry produces
 * one SVG in DIR. Rendering is a pure function of the input files.
 */

import * as fs from 'fs';
import * as path from 'path';

import { FigureSpec, render } from './figures.js';

function parseArgs(argv: string[]): { spec: string; out: string } {
  let spec = '';
  let out = 'figures';
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === '--spec') spec = argv[++i];
    else if (argv[i] === '--out') out = argv[++i];
    else throw new Error(`unknown argument ${argv[i]}`);
  }
  if (!spec) throw new Error('usage: gfflab-render --spec figure.json --out DIR');
  return { spec, out };
}

export function main(argv: string[]): number {
  const { spec, out } = parseArgs(argv);
  const doc = JSON.parse(fs.readFileSync(spec, 'utf8'));
  if (!Array.isArray(doc.figures)) {
    throw new Error('figure spec must contain a "figures" array');
  }
  fs.mkdirSync(out, { recursive: true });
  for (const fig of doc.figures as FigureSpec[]) {
    const svg = render(fig);
    const file = path.join(out, fig.out.endsWith('.svg') ? fig.out : `${fig.out}.svg`);
    fs.writeFileSync(file, svg);
    console.log(`wrote ${file}`);
  }
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith('cli.js')) {
  process.exit(main(process.argv.slice(2)));
}
