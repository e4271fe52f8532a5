import { execFile } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';
import { promisify } from 'node:util';

import { beforeAll, describe, expect, it } from 'vitest';

import { FIXTURE_ROWS, buildToyClassifier, buildToySplit } from '../scripts/toydata.js';
import { saveModel } from '../src/modelio.js';

const run = promisify(execFile);
const here = path.dirname(fileURLToPath(import.meta.url));
const CLI = path.resolve(here, '..', 'dist', 'src', 'cli.js');

function tmpdir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'oodkit-cli-'));
}

interface CliResult {
  code: number;
  stdout: string;
  stderr: string;
}

async function cli(...args: string[]): Promise<CliResult> {
  try {
    const { stdout, stderr } = await run(process.execPath, [CLI, ...args]);
    return { code: 0, stdout, stderr };
  } catch (e) {
    const err = e as { code?: number; stdout?: string; stderr?: string };
    return { code: err.code ?? 1, stdout: err.stdout ?? '', stderr: err.stderr ?? '' };
  }
}

describe('export command', () => {
  let modelDir: string;
  let dataDir: string;

  beforeAll(async () => {
    // `npm test` builds before vitest runs; the CLI is exercised as a real
    // subprocess against the compiled entry point
    expect(fs.existsSync(CLI), `missing ${CLI}; run npm run build`).toBe(true);
    const base = tmpdir();
    modelDir = path.join(base, 'model');
    dataDir = path.join(base, 'data');
    await saveModel(buildToyClassifier(), modelDir);
    fs.mkdirSync(dataDir);
    fs.writeFileSync(
      path.join(dataDir, 'test.json'),
      JSON.stringify(buildToySplit(FIXTURE_ROWS)) + '\n',
    );
  });

  it('exports a split end to end', async () => {
    const out = path.join(tmpdir(), 'export');
    const res = await cli(
      'export',
      '--model', modelDir,
      '--data', dataDir,
      '--split', 'test',
      '--out', out,
      '--layer', 'penultimate',
    );
    expect(res.stderr).not.toContain('error:');
    expect(res.code).toBe(0);
    expect(res.stdout).toContain(`wrote ${FIXTURE_ROWS} rows`);
    for (const name of ['embeddings.oodm', 'probs.oodm', 'labels.oodl', 'manifest.json']) {
      expect(fs.existsSync(path.join(out, name)), name).toBe(true);
    }
    const manifest = JSON.parse(fs.readFileSync(path.join(out, 'manifest.json'), 'utf8'));
    expect(manifest.model).toBe(modelDir);
    expect(manifest.split).toBe('test');
    expect(manifest.n_rows).toBe(FIXTURE_ROWS);
  });

  it('fails cleanly on an unknown layer', async () => {
    const res = await cli(
      'export',
      '--model', modelDir,
      '--data', dataDir,
      '--split', 'test',
      '--out', path.join(tmpdir(), 'x'),
      '--layer', 'bottleneck',
    );
    expect(res.code).toBe(1);
    expect(res.stderr).toContain("error: model has no accessible penultimate layer named 'bottleneck'");
  });

  it('fails cleanly on a missing model path', async () => {
    const res = await cli(
      'export',
      '--model', '/nonexistent/model',
      '--data', dataDir,
      '--split', 'test',
      '--out', path.join(tmpdir(), 'x'),
      '--layer', 'penultimate',
    );
    expect(res.code).toBe(1);
    expect(res.stderr).toContain('error: model not found at /nonexistent/model');
  });

  it('rejects usage errors', async () => {
    const missing = await cli('export', '--model', modelDir, '--data', dataDir, '--split', 'test');
    expect(missing.code).not.toBe(0);
    expect(missing.stderr).toMatch(/out|layer/);

    const badSplit = await cli(
      'export',
      '--model', modelDir,
      '--data', dataDir,
      '--split', 'validation',
      '--out', path.join(tmpdir(), 'x'),
      '--layer', 'penultimate',
    );
    expect(badSplit.code).not.toBe(0);
    expect(badSplit.stderr).toContain('split');
  });
});
