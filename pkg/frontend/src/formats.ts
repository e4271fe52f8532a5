/**
 * Binary writers and readers for the OODM/OODL container formats.
 *
 * Both formats are little-endian. Matrix files (`.oodm`) carry a 29-byte
 * header: magic `OODM`, version u32, dtype code u8 (0 = float32), kind
 * code u8 (0 = embeddings, 1 = probabilities, 2 = scores), three reserved
 * zero bytes, n_rows u64, n_cols u64, then the payload row-major. Label
 * files (`.oodl`) carry magic `OODL`, version u32, n u64, then n u32
 * labels.
 *
 * The exporter only ever emits float32 matrices (embeddings and
 * probabilities); score files are float64 and are produced by the scoring
 * toolkit, not here.
 */

import * as fs from 'node:fs';

import { FormatError } from './errors.js';

export const MATRIX_MAGIC = 'OODM';
export const LABEL_MAGIC = 'OODL';
export const FORMAT_VERSION = 1;
export const MATRIX_HEADER_BYTES = 29;
export const LABEL_HEADER_BYTES = 16;

export type MatrixKind = 'embeddings' | 'probabilities' | 'scores';

export const KIND_CODES: Record<MatrixKind, number> = {
  embeddings: 0,
  probabilities: 1,
  scores: 2,
};

const KIND_NAMES: MatrixKind[] = ['embeddings', 'probabilities', 'scores'];

export const PROB_ROW_SUM_TOL = 1e-4;

export interface MatrixFile {
  kind: MatrixKind;
  nRows: number;
  nCols: number;
  data: Float32Array;
}

/** Check the invariants a float32 matrix must satisfy for its kind. */
export function validateMatrix(
  data: Float32Array,
  nRows: number,
  nCols: number,
  kind: MatrixKind,
): void {
  if (!Number.isInteger(nRows) || !Number.isInteger(nCols) || nRows < 1 || nCols < 1) {
    throw new FormatError(`${kind} matrix must have at least one row and column, got ${nRows}x${nCols}`);
  }
  if (data.length !== nRows * nCols) {
    throw new FormatError(
      `${kind} matrix data has ${data.length} entries, expected ${nRows}x${nCols} = ${nRows * nCols}`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new FormatError(
        `${kind} matrix: non-finite entry at (${Math.floor(i / nCols)}, ${i % nCols})`,
      );
    }
  }
  if (kind === 'probabilities') {
    if (nCols < 2) {
      throw new FormatError(`probability matrix needs >= 2 classes, got ${nCols}`);
    }
    for (let r = 0; r < nRows; r++) {
      let sum = 0;
      for (let c = 0; c < nCols; c++) {
        const v = data[r * nCols + c];
        if (v < 0 || v > 1) {
          throw new FormatError(`probability entry outside [0, 1] at (${r}, ${c})`);
        }
        sum += v;
      }
      if (Math.abs(sum - 1) > PROB_ROW_SUM_TOL) {
        throw new FormatError(
          `probability row ${r} sums to ${sum.toFixed(6)}, outside 1 +/- ${PROB_ROW_SUM_TOL}`,
        );
      }
    }
  }
}

/** Encode a float32 matrix into OODM bytes; deterministic for given contents. */
export function encodeMatrix(
  data: Float32Array,
  nRows: number,
  nCols: number,
  kind: 'embeddings' | 'probabilities',
): Buffer {
  validateMatrix(data, nRows, nCols, kind);
  const buf = Buffer.alloc(MATRIX_HEADER_BYTES + data.length * 4);
  buf.write(MATRIX_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt8(0, 8); // dtype code 0 = float32
  buf.writeUInt8(KIND_CODES[kind], 9);
  // bytes 10..12 stay zero (reserved)
  buf.writeBigUInt64LE(BigInt(nRows), 13);
  buf.writeBigUInt64LE(BigInt(nCols), 21);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], MATRIX_HEADER_BYTES + i * 4);
  }
  return buf;
}

/** Write an OODM file and return the bytes that went to disk. */
export function writeMatrix(
  path: string,
  data: Float32Array,
  nRows: number,
  nCols: number,
  kind: 'embeddings' | 'probabilities',
): Buffer {
  const bytes = encodeMatrix(data, nRows, nCols, kind);
  fs.writeFileSync(path, bytes);
  return bytes;
}

function readU64(buf: Buffer, offset: number, path: string, what: string): number {
  const value = buf.readBigUInt64LE(offset);
  if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new FormatError(`${path}: ${what} ${value} exceeds the safe integer range`);
  }
  return Number(value);
}

/** Read and validate a float32 OODM file. */
export function readMatrix(path: string): MatrixFile {
  const raw = fs.readFileSync(path);
  if (raw.length < MATRIX_HEADER_BYTES) {
    throw new FormatError(`${path}: file shorter than the ${MATRIX_HEADER_BYTES}-byte header`);
  }
  const magic = raw.toString('ascii', 0, 4);
  if (magic !== MATRIX_MAGIC) {
    throw new FormatError(`${path}: bad magic ${JSON.stringify(magic)}`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${path}: unsupported version ${version}`);
  }
  const dtypeCode = raw.readUInt8(8);
  if (dtypeCode !== 0) {
    throw new FormatError(
      `${path}: dtype code ${dtypeCode} is not float32; the exporter only handles float32 matrices`,
    );
  }
  const kindCode = raw.readUInt8(9);
  if (kindCode < 0 || kindCode >= KIND_NAMES.length) {
    throw new FormatError(`${path}: unsupported kind code ${kindCode}`);
  }
  if (raw.readUInt8(10) !== 0 || raw.readUInt8(11) !== 0 || raw.readUInt8(12) !== 0) {
    throw new FormatError(`${path}: reserved header bytes are not zero`);
  }
  const nRows = readU64(raw, 13, path, 'n_rows');
  const nCols = readU64(raw, 21, path, 'n_cols');
  const declared = nRows * nCols * 4;
  const payload = raw.length - MATRIX_HEADER_BYTES;
  if (payload !== declared) {
    throw new FormatError(
      `${path}: truncated payload (declared ${declared} bytes, found ${payload})`,
    );
  }
  const data = new Float32Array(nRows * nCols);
  for (let i = 0; i < data.length; i++) {
    data[i] = raw.readFloatLE(MATRIX_HEADER_BYTES + i * 4);
  }
  const kind = KIND_NAMES[kindCode];
  validateMatrix(data, nRows, nCols, kind);
  return { kind, nRows, nCols, data };
}

/** Encode a label vector into OODL bytes. */
export function encodeLabels(labels: ArrayLike<number>): Buffer {
  if (labels.length === 0) {
    throw new FormatError('labels must be a non-empty vector');
  }
  const buf = Buffer.alloc(LABEL_HEADER_BYTES + labels.length * 4);
  buf.write(LABEL_MAGIC, 0, 'ascii');
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeBigUInt64LE(BigInt(labels.length), 8);
  for (let i = 0; i < labels.length; i++) {
    const v = labels[i];
    if (!Number.isInteger(v) || v < 0 || v > 0xffffffff) {
      throw new FormatError(`label at row ${i} is not a u32: ${v}`);
    }
    buf.writeUInt32LE(v, LABEL_HEADER_BYTES + i * 4);
  }
  return buf;
}

/** Write an OODL file and return the bytes that went to disk. */
export function writeLabels(path: string, labels: ArrayLike<number>): Buffer {
  const bytes = encodeLabels(labels);
  fs.writeFileSync(path, bytes);
  return bytes;
}

/** Read an OODL file; labels must be < nClasses when it is given. */
export function readLabels(path: string, nClasses?: number): Uint32Array {
  const raw = fs.readFileSync(path);
  if (raw.length < LABEL_HEADER_BYTES) {
    throw new FormatError(`${path}: truncated label header`);
  }
  const magic = raw.toString('ascii', 0, 4);
  if (magic !== LABEL_MAGIC) {
    throw new FormatError(`${path}: bad magic ${JSON.stringify(magic)}`);
  }
  const version = raw.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${path}: unsupported version ${version}`);
  }
  const n = readU64(raw, 8, path, 'n');
  if (raw.length - LABEL_HEADER_BYTES !== n * 4) {
    throw new FormatError(
      `${path}: truncated payload (declared ${n * 4} bytes, found ${raw.length - LABEL_HEADER_BYTES})`,
    );
  }
  const labels = new Uint32Array(n);
  for (let i = 0; i < n; i++) {
    labels[i] = raw.readUInt32LE(LABEL_HEADER_BYTES + i * 4);
    if (nClasses !== undefined && labels[i] >= nClasses) {
      throw new FormatError(`${path}: label ${labels[i]} at row ${i} is out of range for ${nClasses} classes`);
    }
  }
  return labels;
}
