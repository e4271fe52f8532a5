/**
 * Regenerates `fixture/`: a saved toy model, its dataset directory, a
 * deterministic 100-example export, and a `values.json` sidecar holding
 * the decoded contents in double precision. The sidecar is what the
 * Python round-trip test compares against, so value identity is checked
 * through JSON rather than through the binary files themselves.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';

import { EMBEDDINGS_FILE, LABELS_FILE, PROBS_FILE } from '../src/export.js';
import { readLabels, readMatrix } from '../src/formats.js';
import { saveModel } from '../src/modelio.js';
import { buildToyClassifier, buildToySplit, exportToyFixture, FIXTURE_ROWS } from './toydata.js';

const here = path.dirname(fileURLToPath(import.meta.url));
// compiled location is dist/scripts/, so the package root is two levels up
const root = path.resolve(here, '..', '..');

async function main(): Promise<void> {
  const fixtureDir = path.join(root, 'fixture');
  const outDir = path.join(fixtureDir, 'export-test');

  await saveModel(buildToyClassifier(), path.join(fixtureDir, 'model'));

  const dataDir = path.join(fixtureDir, 'dataset');
  fs.mkdirSync(dataDir, { recursive: true });
  fs.writeFileSync(path.join(dataDir, 'test.json'), JSON.stringify(buildToySplit(FIXTURE_ROWS)) + '\n');

  const manifest = await exportToyFixture(outDir);

  const emb = readMatrix(path.join(outDir, EMBEDDINGS_FILE));
  const probs = readMatrix(path.join(outDir, PROBS_FILE));
  const labels = readLabels(path.join(outDir, LABELS_FILE), manifest.n_classes);
  const values = {
    embeddings: Array.from(emb.data),
    probs: Array.from(probs.data),
    labels: Array.from(labels),
  };
  fs.writeFileSync(path.join(outDir, 'values.json'), JSON.stringify(values) + '\n');
  console.log(`fixture written to ${outDir} (${manifest.n_rows} rows)`);
}

main().catch((e) => {
  console.error(e);
  process.exitCode = 1;
});
