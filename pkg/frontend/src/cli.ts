#!/usr/bin/env node
/**
 * Command line entry point.
 *
 * `oodkit-export export --model <id-or-path> --data <dir> --split train|test
 *  --out <dir> --layer <name>` runs the split through the classifier and
 * writes embeddings.oodm, probs.oodm, labels.oodl (when the split has
 * labels), and manifest.json into the output directory.
 */

import * as path from 'node:path';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { loadSplit } from './dataset.js';
import { ExporterError } from './errors.js';
import { MANIFEST_FILE, exportSplit } from './export.js';
import { loadClassifier } from './modelio.js';

interface ExportArgs {
  model: string;
  data: string;
  split: string;
  out: string;
  layer: string;
  batchSize: number;
}

async function runExport(args: ExportArgs): Promise<void> {
  const model = await loadClassifier(args.model);
  const data = loadSplit(args.data, args.split);
  const manifest = await exportSplit(model, data, args.out, {
    penultimateLayer: args.layer,
    modelIdentifier: args.model,
    batchSize: args.batchSize,
  });
  console.log(
    `wrote ${manifest.n_rows} rows to ${args.out} ` +
      `(embeddings ${manifest.n_rows}x${manifest.embedding_dim}, ` +
      `probs ${manifest.n_rows}x${manifest.n_classes}` +
      (manifest.files['labels.oodl'] ? ', labels' : '') +
      ')',
  );
  console.log(`manifest: ${path.join(args.out, MANIFEST_FILE)}`);
}

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .scriptName('oodkit-export')
    .fail((msg, err, parser) => {
      // runtime failures print a single `error:` line; usage mistakes
      // keep the default help text
      if (err instanceof ExporterError) {
        console.error(`error: ${err.message}`);
      } else if (err) {
        console.error(err);
      } else {
        parser.showHelp();
        console.error(`\n${msg}`);
      }
      process.exit(1);
    })
    .command(
      'export',
      'Run a dataset split through a classifier and write OODM/OODL files',
      (y) =>
        y
          .option('model', {
            type: 'string',
            demandOption: true,
            describe: 'URL or path of a saved tfjs layers model',
          })
          .option('data', {
            type: 'string',
            demandOption: true,
            describe: 'Directory holding <split>.json dataset files',
          })
          .option('split', {
            type: 'string',
            choices: ['train', 'test'] as const,
            demandOption: true,
            describe: 'Which split to export',
          })
          .option('out', {
            type: 'string',
            demandOption: true,
            describe: 'Output directory for the OODM/OODL files and manifest.json',
          })
          .option('layer', {
            type: 'string',
            demandOption: true,
            describe: 'Name of the penultimate layer; its output is the embedding',
          })
          .option('batch-size', {
            type: 'number',
            default: 32,
            describe: 'Prediction batch size',
          }),
      async (argv) => {
        await runExport({
          model: argv.model,
          data: argv.data,
          split: argv.split,
          out: argv.out,
          layer: argv.layer,
          batchSize: argv['batch-size'],
        });
      },
    )
    .demandCommand(1, 'specify a command (see --help)')
    .strict()
    .help()
    .parseAsync();
}

main().catch((e) => {
  if (e instanceof ExporterError) {
    console.error(`error: ${e.message}`);
  } else {
    console.error(e);
  }
  process.exitCode = 1;
});
