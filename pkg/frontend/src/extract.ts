/**
 * The extraction pipeline: detect eye landmarks, rotate so the eye line
 * is horizontal, crop a square around the face, and embed through the
 * loaded backbone artifact. Per-image failures are collected (and logged
 * by the CLI), never silently dropped; successful records are written in
 * the input map's order.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';
import { detectEyes, eyeLineAngle, NoFaceFound } from './detect.js';
import { EmbeddingRecord, writeEmb1 } from './emb1.js';
import { cropSquare, DecodeError, GrayImage, loadGrayPng, resize, rotateAround } from './image.js';
import { EmbedderModel, embedCrop } from './model.js';

export interface ExtractJob {
  imagesDir: string;
  imageMap: Array<{ imageId: string; subjectId: string }>;
  model: EmbedderModel;
  cropSize: number;        // output crop side in pixels
  marginFactor: number;    // crop side = marginFactor * eye distance
  outPath: string;
  mapOutPath?: string;     // manifest fragment for successful records
}

export interface ExtractFailure {
  imageId: string;
  reason: string;
}

export interface ExtractResult {
  written: number;
  dim: number;
  failures: ExtractFailure[];
}

export const DEFAULT_CROP = 182;
export const DEFAULT_MARGIN = 2.6;

/** Eye midpoint shifted down by this fraction of the eye distance. */
const CENTER_DROP = 0.3;

export function alignAndCrop(image: GrayImage, cropSize: number, marginFactor: number): GrayImage {
  const eyes = detectEyes(image);
  const angle = eyeLineAngle(eyes);
  const cx = (eyes.left.x + eyes.right.x) / 2;
  const cy = (eyes.left.y + eyes.right.y) / 2;
  const levelled = rotateAround(image, angle, cx, cy);
  const eyeDistance = Math.hypot(eyes.right.x - eyes.left.x, eyes.right.y - eyes.left.y);
  const side = Math.max(8, marginFactor * eyeDistance);
  const crop = cropSquare(levelled, cx, cy + CENTER_DROP * eyeDistance, Math.round(side));
  return resize(crop, cropSize, cropSize);
}

function resolveImagePath(dir: string, imageId: string): string {
  const direct = path.join(dir, imageId);
  if (fs.existsSync(direct)) return direct;
  return path.join(dir, `${imageId}.png`);
}

export function runExtraction(job: ExtractJob): ExtractResult {
  const records: EmbeddingRecord[] = [];
  const kept: Array<{ imageId: string; subjectId: string }> = [];
  const failures: ExtractFailure[] = [];
  for (const entry of job.imageMap) {
    const file = resolveImagePath(job.imagesDir, entry.imageId);
    try {
      const image = loadGrayPng(file);
      const crop = alignAndCrop(image, job.cropSize, job.marginFactor);
      records.push({ imageId: entry.imageId, vector: embedCrop(job.model, crop) });
      kept.push(entry);
    } catch (err) {
      if (err instanceof NoFaceFound || err instanceof DecodeError ||
          (err as NodeJS.ErrnoException).code === 'ENOENT') {
        failures.push({ imageId: entry.imageId, reason: (err as Error).message });
      } else {
        throw err;
      }
    }
  }
  writeEmb1(job.outPath, records, job.model.dim);
  if (job.mapOutPath) {
    const lines = ['image_id,subject_id'];
    for (const entry of kept) lines.push(`${entry.imageId},${entry.subjectId}`);
    fs.writeFileSync(job.mapOutPath, lines.join('\n') + '\n');
  }
  return { written: records.length, dim: job.model.dim, failures };
}

export function readImageMapCsv(path_: string): Array<{ imageId: string; subjectId: string }> {
  const text = fs.readFileSync(path_, 'utf-8');
  const lines = text.split(/\r?\n/).filter(line => line.length > 0 && !line.startsWith('#'));
  if (lines[0] !== 'image_id,subject_id') {
    throw new Error(`${path_}: expected header image_id,subject_id`);
  }
  return lines.slice(1).map((line, k) => {
    const parts = line.split(',');
    if (parts.length !== 2 || !parts[0] || !parts[1]) {
      throw new Error(`${path_}:${k + 2}: expected image_id,subject_id`);
    }
    return { imageId: parts[0], subjectId: parts[1] };
  });
}
