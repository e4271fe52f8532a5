/**
 * Deterministic toy classifier and dataset used by the tests and by
 * `make-fixture`. Weights come from a fixed-seed PRNG rather than tfjs
 * initializers so the byte-level fixtures are reproducible everywhere.
 */

import * as tf from '@tensorflow/tfjs';

import type { ExportManifest } from '../src/export.js';
import { exportSplit } from '../src/export.js';

export const IMAGE_SHAPE = [6, 6, 1];
export const EMBEDDING_DIM = 24;
export const N_CLASSES = 10;
export const PENULTIMATE_LAYER = 'penultimate';
export const FIXTURE_ROWS = 100;

/** mulberry32: small deterministic PRNG over [0, 1). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function uniformArray(rng: () => number, n: number, scale: number): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = (rng() * 2 - 1) * scale;
  }
  return out;
}

/** A 10-class image classifier with a named flat penultimate layer. */
export function buildToyClassifier(seed = 42): tf.LayersModel {
  const model = tf.sequential({
    name: 'toy-classifier',
    layers: [
      tf.layers.flatten({ inputShape: IMAGE_SHAPE, name: 'flatten' }),
      tf.layers.dense({ units: EMBEDDING_DIM, activation: 'tanh', name: PENULTIMATE_LAYER }),
      tf.layers.dense({ units: N_CLASSES, activation: 'softmax', name: 'head' }),
    ],
  });
  const rng = mulberry32(seed);
  for (const layer of model.layers) {
    const current = layer.getWeights();
    if (current.length === 0) {
      continue;
    }
    layer.setWeights(current.map((w) => tf.tensor(uniformArray(rng, w.size, 0.8), w.shape)));
  }
  return model;
}

export interface ToySplit {
  shape: number[];
  data: number[];
  labels: number[];
}

/** A labelled split in the on-disk dataset JSON layout. */
export function buildToySplit(nRows: number, seed = 7): ToySplit {
  const rng = mulberry32(seed);
  const perRow = IMAGE_SHAPE.reduce((a, b) => a * b, 1);
  const data = new Array<number>(nRows * perRow);
  for (let i = 0; i < data.length; i++) {
    // rounded to 6 decimals to keep the JSON fixtures compact
    data[i] = Math.round((rng() * 2 - 1) * 1e6) / 1e6;
  }
  const labels = new Array<number>(nRows);
  for (let i = 0; i < nRows; i++) {
    labels[i] = Math.floor(rng() * N_CLASSES);
  }
  return { shape: [nRows, ...IMAGE_SHAPE], data, labels };
}

export function splitTensor(split: ToySplit): tf.Tensor {
  return tf.tensor(Float32Array.from(split.data), split.shape, 'float32');
}

/** The canonical fixture recipe: 100 toy rows exported into `outDir`. */
export async function exportToyFixture(outDir: string): Promise<ExportManifest> {
  const model = buildToyClassifier();
  const split = buildToySplit(FIXTURE_ROWS);
  return exportSplit(
    model,
    { name: 'test', inputs: splitTensor(split), labels: split.labels },
    outDir,
    { penultimateLayer: PENULTIMATE_LAYER, modelIdentifier: 'toy-classifier' },
  );
}
