/**
 * Filesystem save/load for tfjs layers models.
 *
 * The browser build of tfjs has no `file://` IO handler, so this module
 * provides one: a saved model is a directory holding `model.json`
 * (topology plus a weights manifest) and the binary weight shards it
 * references, the same layout `tf.LayersModel.save` produces elsewhere.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { ExportError } from './errors.js';

export const MODEL_JSON = 'model.json';

function joinWeightData(weightData: ArrayBuffer | ArrayBuffer[] | undefined): Buffer {
  if (weightData === undefined) {
    throw new ExportError('model save produced no weight data');
  }
  const parts = Array.isArray(weightData) ? weightData : [weightData];
  return Buffer.concat(parts.map((p) => new Uint8Array(p)));
}

/** Save a layers model as `<dir>/model.json` + `<dir>/weights.bin`. */
export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      fs.writeFileSync(path.join(dir, 'weights.bin'), joinWeightData(artifacts.weightData));
      const manifest = {
        format: 'layers-model',
        generatedBy: 'oodkit-exporter',
        convertedBy: null,
        modelTopology: artifacts.modelTopology,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      };
      fs.writeFileSync(path.join(dir, MODEL_JSON), JSON.stringify(manifest) + '\n');
      return {
        modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' as const },
      };
    }),
  );
}

interface WeightsGroup {
  paths: string[];
  weights: tf.io.WeightsManifestEntry[];
}

/** Load a layers model from a `model.json` path written by {@link saveModel}. */
export async function loadModelFromFile(modelJsonPath: string): Promise<tf.LayersModel> {
  const dir = path.dirname(modelJsonPath);
  let parsed: unknown;
  try {
    parsed = JSON.parse(fs.readFileSync(modelJsonPath, 'utf8'));
  } catch (e) {
    throw new ExportError(`failed to read ${modelJsonPath}: ${(e as Error).message}`);
  }
  const json = parsed as {
    modelTopology?: object;
    weightsManifest?: WeightsGroup[];
    format?: string;
    generatedBy?: string;
    convertedBy?: string | null;
  };
  if (json.modelTopology === undefined || !Array.isArray(json.weightsManifest)) {
    throw new ExportError(
      `${modelJsonPath} is not a layers-model file (missing modelTopology or weightsManifest)`,
    );
  }
  const weightSpecs: tf.io.WeightsManifestEntry[] = [];
  const shards: Buffer[] = [];
  for (const group of json.weightsManifest) {
    weightSpecs.push(...group.weights);
    for (const shard of group.paths) {
      shards.push(fs.readFileSync(path.join(dir, shard)));
    }
  }
  const joined = Buffer.concat(shards);
  const weightData = joined.buffer.slice(
    joined.byteOffset,
    joined.byteOffset + joined.byteLength,
  );
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: json.modelTopology,
      weightSpecs,
      weightData,
      format: json.format,
      generatedBy: json.generatedBy,
      convertedBy: json.convertedBy ?? null,
    }),
  );
}

/**
 * Resolve a model identifier to a loaded classifier.
 *
 * `http(s)://` identifiers go straight to `tf.loadLayersModel`; anything
 * else is a filesystem path, either a model directory or a `model.json`
 * file inside one.
 */
export async function loadClassifier(idOrPath: string): Promise<tf.LayersModel> {
  if (/^https?:\/\//.test(idOrPath)) {
    return tf.loadLayersModel(idOrPath);
  }
  let target = idOrPath;
  if (fs.existsSync(target) && fs.statSync(target).isDirectory()) {
    target = path.join(target, MODEL_JSON);
  }
  if (!fs.existsSync(target)) {
    throw new ExportError(`model not found at ${idOrPath}`);
  }
  return loadModelFromFile(target);
}
