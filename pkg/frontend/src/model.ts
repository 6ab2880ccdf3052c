/**
 * Backbone model artifacts. The embedder is an externally supplied linear
 * projection over pooled crop features; this module only loads and
 * applies artifacts, it never trains one.
 *
 * Artifact layout (JSON):
 *   format     "lookalike-lab-linear-embedder"
 *   version    1
 *   inputSize  expected square crop size in pixels
 *   pool       average-pooling grid (features = pool * pool)
 *   dim        embedding dimension
 *   weights    dim rows of pool*pool numbers
 */
import * as fs from 'node:fs';
import { GrayImage, averagePool, resize } from './image.js';

export class ModelLoadError extends Error {}

export interface EmbedderModel {
  inputSize: number;
  pool: number;
  dim: number;
  weights: Float64Array[];  // dim rows, pool*pool columns
}

const FORMAT = 'lookalike-lab-linear-embedder';
const VERSION = 1;

export function loadModel(path: string): EmbedderModel {
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(path, 'utf-8'));
  } catch (err) {
    throw new ModelLoadError(`cannot read model ${path}: ${(err as Error).message}`);
  }
  const doc = raw as Record<string, unknown>;
  if (doc.format !== FORMAT) {
    throw new ModelLoadError(`unexpected model format ${String(doc.format)}`);
  }
  if (doc.version !== VERSION) {
    throw new ModelLoadError(`unsupported model version ${String(doc.version)}`);
  }
  const inputSize = Number(doc.inputSize);
  const pool = Number(doc.pool);
  const dim = Number(doc.dim);
  if (!Number.isInteger(inputSize) || inputSize < 8 ||
      !Number.isInteger(pool) || pool < 1 ||
      !Number.isInteger(dim) || dim < 1) {
    throw new ModelLoadError('inputSize/pool/dim must be positive integers');
  }
  const rows = doc.weights;
  if (!Array.isArray(rows) || rows.length !== dim) {
    throw new ModelLoadError(`weights must have ${dim} rows`);
  }
  const weights = rows.map((row, i) => {
    if (!Array.isArray(row) || row.length !== pool * pool) {
      throw new ModelLoadError(`weights row ${i} must have ${pool * pool} entries`);
    }
    const out = Float64Array.from(row.map(Number));
    if (out.some(v => !Number.isFinite(v))) {
      throw new ModelLoadError(`weights row ${i} contains a non-finite value`);
    }
    return out;
  });
  return { inputSize, pool, dim, weights };
}

/**
 * Embed an aligned face crop: resize to the model's input size, pool to
 * the feature grid, standardize the features (zero mean, unit norm), and
 * project. Output is float32, the EMB1 on-disk precision.
 */
export function embedCrop(model: EmbedderModel, crop: GrayImage): Float32Array {
  const sized = crop.width === model.inputSize && crop.height === model.inputSize
    ? crop
    : resize(crop, model.inputSize, model.inputSize);
  const features = averagePool(sized, model.pool);
  let mean = 0;
  for (const v of features) mean += v;
  mean /= features.length;
  let norm = 0;
  for (let i = 0; i < features.length; i++) {
    features[i] -= mean;
    norm += features[i] * features[i];
  }
  norm = Math.sqrt(norm);
  if (norm > 0) {
    for (let i = 0; i < features.length; i++) features[i] /= norm;
  }
  const out = new Float32Array(model.dim);
  for (let d = 0; d < model.dim; d++) {
    const row = model.weights[d];
    let acc = 0;
    for (let i = 0; i < row.length; i++) acc += row[i] * features[i];
    out[d] = Math.fround(acc);
  }
  return out;
}

/**
 * Fabricate a seeded random-projection artifact (SplitMix64 weights).
 * A stand-in for real pretrained weights in tests and demos; writing it
 * here keeps the extraction pipeline itself free of any training code.
 */
export function createRandomProjectionModel(
  seed: number, dim = 64, pool = 8, inputSize = 182,
): object {
  let state = BigInt(seed) & 0xffffffffffffffffn;
  const next = (): number => {
    state = (state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z = z ^ (z >> 31n);
    return Number(z >> 11n) / 2 ** 53;  // uniform [0, 1)
  };
  const weights = Array.from({ length: dim }, () =>
    Array.from({ length: pool * pool }, () => 2 * next() - 1));
  return { format: FORMAT, version: VERSION, inputSize, pool, dim, weights };
}
