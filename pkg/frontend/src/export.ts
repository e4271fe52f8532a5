/**
 * Core export operation: run a dataset split through a trained classifier
 * and write its penultimate-layer embeddings, class probabilities, and
 * labels as OODM/OODL files the scoring toolkit consumes directly.
 *
 * This is a thin adapter. It guarantees the byte format and row order
 * (dataset iteration order) and does no scoring of its own.
 */

import * as crypto from 'node:crypto';
import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import type { DatasetSplit } from './dataset.js';
import { ExportError, FormatError } from './errors.js';
import { validateMatrix, writeLabels, writeMatrix } from './formats.js';

export const EMBEDDINGS_FILE = 'embeddings.oodm';
export const PROBS_FILE = 'probs.oodm';
export const LABELS_FILE = 'labels.oodl';
export const MANIFEST_FILE = 'manifest.json';

export interface ExportManifest {
  model: string;
  split: string;
  n_rows: number;
  embedding_dim: number;
  n_classes: number;
  files: Record<string, string>;
}

export interface ExportOptions {
  /** Name of the layer whose output is the embedding; never inferred. */
  penultimateLayer: string;
  /** Recorded in the manifest; defaults to the model's own name. */
  modelIdentifier?: string;
  batchSize?: number;
}

function sha256(bytes: Buffer): string {
  return `sha256:${crypto.createHash('sha256').update(bytes).digest('hex')}`;
}

function shapeOf(dims: Array<number | null>): string {
  return `[${dims.map((d) => (d === null ? 'batch' : d)).join(', ')}]`;
}

function penultimateOutput(model: tf.LayersModel, name: string): tf.SymbolicTensor {
  let layer: tf.layers.Layer;
  try {
    layer = model.getLayer(name);
  } catch {
    const names = model.layers.map((l) => l.name).join(', ');
    throw new ExportError(
      `model has no accessible penultimate layer named '${name}'; available layers: ${names}`,
    );
  }
  let output: tf.SymbolicTensor | tf.SymbolicTensor[];
  try {
    output = layer.output;
  } catch {
    throw new ExportError(`layer '${name}' has no single accessible output`);
  }
  if (Array.isArray(output)) {
    throw new ExportError(
      `layer '${name}' has ${output.length} outputs; the penultimate layer must have exactly one`,
    );
  }
  if (output.shape.length !== 2 || output.shape[1] === null) {
    throw new ExportError(
      `layer '${name}' produces shape ${shapeOf(output.shape)}; ` +
        'the penultimate layer must emit a flat [batch, dim] embedding',
    );
  }
  return output;
}

async function toFloat32(t: tf.Tensor, what: string): Promise<Float32Array> {
  if (t.dtype !== 'float32') {
    throw new ExportError(`${what} came out as ${t.dtype}, expected float32`);
  }
  return (await t.data()) as Float32Array;
}

function checkMatrix(
  data: Float32Array,
  nRows: number,
  nCols: number,
  kind: 'embeddings' | 'probabilities',
  hint: string,
): void {
  try {
    validateMatrix(data, nRows, nCols, kind);
  } catch (e) {
    if (e instanceof FormatError) {
      throw new ExportError(`model ${kind} failed validation (${e.message}); ${hint}`);
    }
    throw e;
  }
}

/**
 * Export one dataset split through `model` into `outDir`.
 *
 * Writes `embeddings.oodm` (kind 0), `probs.oodm` (kind 1), `labels.oodl`
 * when the split has labels, and `manifest.json` recording dimensions and
 * a checksum per emitted file. Row i of every file corresponds to example
 * i of the split. Deterministic for fixed model weights and row order.
 */
export async function exportSplit(
  model: tf.LayersModel,
  data: DatasetSplit,
  outDir: string,
  options: ExportOptions,
): Promise<ExportManifest> {
  const embeddingOut = penultimateOutput(model, options.penultimateLayer);
  if (model.outputs.length !== 1) {
    throw new ExportError(`model has ${model.outputs.length} outputs; expected a single probability head`);
  }
  const probShape = model.outputs[0].shape;
  if (probShape.length !== 2 || probShape[1] === null || probShape[1] < 2) {
    throw new ExportError(
      `model output shape ${shapeOf(probShape)} is not [batch, classes] with >= 2 classes`,
    );
  }

  const backbone = tf.model({ inputs: model.inputs, outputs: embeddingOut });
  const batchSize = options.batchSize ?? 32;
  const embT = backbone.predict(data.inputs, { batchSize }) as tf.Tensor;
  const probT = model.predict(data.inputs, { batchSize }) as tf.Tensor;
  try {
    const nRows = embT.shape[0];
    const dim = embT.shape[1] as number;
    const nClasses = probT.shape[1] as number;
    if (probT.shape[0] !== nRows) {
      throw new ExportError(
        `row-count mismatch between outputs: ${nRows} embeddings vs ${probT.shape[0]} probability rows`,
      );
    }
    if (data.labels !== undefined && data.labels.length !== nRows) {
      throw new ExportError(
        `row-count mismatch between outputs: ${data.labels.length} labels vs ${nRows} model outputs`,
      );
    }
    const embeddings = await toFloat32(embT, 'embeddings');
    const probs = await toFloat32(probT, 'probabilities');
    checkMatrix(embeddings, nRows, dim, 'embeddings', 'check the model weights');
    checkMatrix(probs, nRows, nClasses, 'probabilities', 'the final layer must apply softmax');

    fs.mkdirSync(outDir, { recursive: true });
    const files: Record<string, string> = {};
    files[EMBEDDINGS_FILE] = sha256(
      writeMatrix(path.join(outDir, EMBEDDINGS_FILE), embeddings, nRows, dim, 'embeddings'),
    );
    files[PROBS_FILE] = sha256(
      writeMatrix(path.join(outDir, PROBS_FILE), probs, nRows, nClasses, 'probabilities'),
    );
    if (data.labels !== undefined) {
      files[LABELS_FILE] = sha256(writeLabels(path.join(outDir, LABELS_FILE), data.labels));
    }
    const manifest: ExportManifest = {
      model: options.modelIdentifier ?? model.name,
      split: data.name,
      n_rows: nRows,
      embedding_dim: dim,
      n_classes: nClasses,
      files,
    };
    fs.writeFileSync(path.join(outDir, MANIFEST_FILE), JSON.stringify(manifest, null, 2) + '\n');
    return manifest;
  } finally {
    embT.dispose();
    probT.dispose();
  }
}
