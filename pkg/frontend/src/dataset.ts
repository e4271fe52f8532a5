/**
 * Dataset split loading.
 *
 * A dataset directory holds one JSON file per split (`train.json`,
 * `test.json`) with the tensor spelled out flat:
 *
 * ```json
 * {
 *   "shape": [100, 6, 6, 1],
 *   "data": [0.1, 0.52, ...],
 *   "labels": [3, 0, ...]
 * }
 * ```
 *
 * `shape[0]` is the number of examples, `data` is the row-major flattened
 * input tensor, and `labels` (optional) gives one class id per example.
 * Rows are exported in exactly this order.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { ExportError } from './errors.js';

export interface DatasetSplit {
  name: string;
  inputs: tf.Tensor;
  labels?: number[];
}

interface SplitJson {
  shape?: unknown;
  data?: unknown;
  labels?: unknown;
}

function isIntArray(value: unknown): value is number[] {
  return Array.isArray(value) && value.every((v) => Number.isInteger(v));
}

/** Load `<dir>/<split>.json` into a tensor plus optional labels. */
export function loadSplit(dir: string, split: string): DatasetSplit {
  const file = path.join(dir, `${split}.json`);
  if (!fs.existsSync(file)) {
    throw new ExportError(`dataset split file not found: ${file}`);
  }
  let json: SplitJson;
  try {
    json = JSON.parse(fs.readFileSync(file, 'utf8')) as SplitJson;
  } catch (e) {
    throw new ExportError(`failed to parse ${file}: ${(e as Error).message}`);
  }
  const shape = json.shape;
  if (!isIntArray(shape) || shape.length < 2 || shape.some((v) => v < 1)) {
    throw new ExportError(`${file}: "shape" must be a list of >= 2 positive integers`);
  }
  const expected = shape.reduce((a, b) => a * b, 1);
  const data = json.data;
  if (!Array.isArray(data) || data.length !== expected) {
    throw new ExportError(
      `${file}: "data" must be a flat list of ${expected} numbers for shape [${shape.join(', ')}]`,
    );
  }
  if (!data.every((v) => Number.isFinite(v))) {
    throw new ExportError(`${file}: "data" contains a non-finite entry`);
  }
  let labels: number[] | undefined;
  if (json.labels !== undefined) {
    if (!isIntArray(json.labels) || json.labels.some((v) => v < 0)) {
      throw new ExportError(`${file}: "labels" must be a list of non-negative integers`);
    }
    if (json.labels.length !== shape[0]) {
      throw new ExportError(
        `${file}: ${json.labels.length} labels for ${shape[0]} examples`,
      );
    }
    labels = json.labels;
  }
  const inputs = tf.tensor(Float32Array.from(data as number[]), shape, 'float32');
  return { name: split, inputs, labels };
}
