/**
 * Eye-landmark detection on controlled capture conditions: faces are
 * photographed against a light backdrop, so the eyes are the pair of
 * compact dark blobs with the most similar areas. Good enough to drive
 * the rotate-level-crop alignment; it makes no attempt at in-the-wild
 * robustness.
 */
import { GrayImage } from './image.js';

export interface Point {
  x: number;
  y: number;
}

export interface EyePair {
  left: Point;   // smaller x
  right: Point;
}

export class NoFaceFound extends Error {}

interface Blob {
  area: number;
  cx: number;
  cy: number;
}

/** Connected components (4-neighbour) of pixels darker than the threshold. */
function darkBlobs(image: GrayImage, threshold: number): Blob[] {
  const { width, height } = image;
  const seen = new Uint8Array(width * height);
  const blobs: Blob[] = [];
  const stack: number[] = [];
  for (let start = 0; start < width * height; start++) {
    if (seen[start] || image.data[start] >= threshold) continue;
    let area = 0;
    let sumX = 0;
    let sumY = 0;
    stack.push(start);
    seen[start] = 1;
    while (stack.length) {
      const idx = stack.pop()!;
      const x = idx % width;
      const y = (idx / width) | 0;
      area += 1;
      sumX += x;
      sumY += y;
      for (const next of [idx - 1, idx + 1, idx - width, idx + width]) {
        if (next < 0 || next >= width * height || seen[next]) continue;
        if (next === idx - 1 && x === 0) continue;
        if (next === idx + 1 && x === width - 1) continue;
        if (image.data[next] < threshold) {
          seen[next] = 1;
          stack.push(next);
        }
      }
    }
    blobs.push({ area, cx: sumX / area, cy: sumY / area });
  }
  return blobs;
}

/**
 * Locate the two eyes: among the largest dark blobs, pick the pair with
 * the most similar areas at a plausible separation. Deterministic; throws
 * NoFaceFound when no such pair exists.
 */
export function detectEyes(image: GrayImage, minAreaFraction = 1e-5): EyePair {
  const threshold = 0.5 * image.mean();
  const minArea = Math.max(4, minAreaFraction * image.width * image.height);
  const blobs = darkBlobs(image, threshold)
    .filter(b => b.area >= minArea)
    .sort((a, b) => b.area - a.area)
    .slice(0, 5);
  if (blobs.length < 2) {
    throw new NoFaceFound(`found ${blobs.length} candidate blobs, need 2`);
  }
  let best: [Blob, Blob] | null = null;
  let bestScore = Infinity;
  const maxSeparation = 0.8 * Math.hypot(image.width, image.height);
  for (let i = 0; i < blobs.length; i++) {
    for (let j = i + 1; j < blobs.length; j++) {
      const a = blobs[i];
      const b = blobs[j];
      const separation = Math.hypot(a.cx - b.cx, a.cy - b.cy);
      if (separation < 2 || separation > maxSeparation) continue;
      const score = Math.abs(Math.log(a.area / b.area));
      if (score < bestScore) {
        bestScore = score;
        best = [a, b];
      }
    }
  }
  if (best === null) {
    throw new NoFaceFound('no blob pair at a plausible eye separation');
  }
  const [a, b] = best;
  const [left, right] = a.cx <= b.cx ? [a, b] : [b, a];
  return { left: { x: left.cx, y: left.cy }, right: { x: right.cx, y: right.cy } };
}

/** Rotation (radians) that levels the eye line. */
export function eyeLineAngle(eyes: EyePair): number {
  return Math.atan2(eyes.right.y - eyes.left.y, eyes.right.x - eyes.left.x);
}
