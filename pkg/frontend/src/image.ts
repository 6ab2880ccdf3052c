/**
 * Grayscale image buffer with PNG decode/encode and the sampling
 * primitives the alignment pipeline needs (rotation, crop, resize).
 * Luminance is kept as float64 in [0, 255]; all sampling is bilinear
 * with edge clamping, so results are deterministic for a given input.
 */
import * as fs from 'node:fs';
import { PNG } from 'pngjs';

export class GrayImage {
  readonly width: number;
  readonly height: number;
  readonly data: Float64Array;

  constructor(width: number, height: number, data?: Float64Array) {
    if (width < 1 || height < 1) {
      throw new Error(`bad image dimensions ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = data ?? new Float64Array(width * height);
    if (this.data.length !== width * height) {
      throw new Error('data length does not match dimensions');
    }
  }

  at(x: number, y: number): number {
    return this.data[y * this.width + x];
  }

  set(x: number, y: number, value: number): void {
    this.data[y * this.width + x] = value;
  }

  /** Bilinear sample with edge clamping. */
  sample(x: number, y: number): number {
    const cx = Math.min(Math.max(x, 0), this.width - 1);
    const cy = Math.min(Math.max(y, 0), this.height - 1);
    const x0 = Math.floor(cx);
    const y0 = Math.floor(cy);
    const x1 = Math.min(x0 + 1, this.width - 1);
    const y1 = Math.min(y0 + 1, this.height - 1);
    const fx = cx - x0;
    const fy = cy - y0;
    const top = this.at(x0, y0) * (1 - fx) + this.at(x1, y0) * fx;
    const bottom = this.at(x0, y1) * (1 - fx) + this.at(x1, y1) * fx;
    return top * (1 - fy) + bottom * fy;
  }

  mean(): number {
    let total = 0;
    for (const v of this.data) total += v;
    return total / this.data.length;
  }
}

export class DecodeError extends Error {}

/** Decode a PNG file to grayscale via the Rec. 601 luma weights. */
export function loadGrayPng(path: string): GrayImage {
  let png: PNG;
  try {
    png = PNG.sync.read(fs.readFileSync(path));
  } catch (err) {
    throw new DecodeError(`cannot decode ${path}: ${(err as Error).message}`);
  }
  const out = new GrayImage(png.width, png.height);
  for (let i = 0; i < png.width * png.height; i++) {
    const r = png.data[4 * i];
    const g = png.data[4 * i + 1];
    const b = png.data[4 * i + 2];
    out.data[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return out;
}

/** Encode a grayscale image as an 8-bit PNG (round-half-up quantization). */
export function saveGrayPng(path: string, image: GrayImage): void {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    const v = Math.min(255, Math.max(0, Math.round(image.data[i])));
    png.data[4 * i] = v;
    png.data[4 * i + 1] = v;
    png.data[4 * i + 2] = v;
    png.data[4 * i + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}

/**
 * Rotate by `angle` radians around (cx, cy): output pixel (x, y) samples
 * the source at the inverse-rotated position.
 */
export function rotateAround(image: GrayImage, angle: number, cx: number, cy: number): GrayImage {
  const out = new GrayImage(image.width, image.height);
  const cos = Math.cos(angle);
  const sin = Math.sin(angle);
  for (let y = 0; y < image.height; y++) {
    for (let x = 0; x < image.width; x++) {
      const dx = x - cx;
      const dy = y - cy;
      out.set(x, y, image.sample(cx + cos * dx - sin * dy, cy + sin * dx + cos * dy));
    }
  }
  return out;
}

/** Square crop of side `size` centered at (cx, cy), edge-clamped. */
export function cropSquare(image: GrayImage, cx: number, cy: number, size: number): GrayImage {
  const out = new GrayImage(size, size);
  const start = -(size - 1) / 2;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      out.set(x, y, image.sample(cx + start + x, cy + start + y));
    }
  }
  return out;
}

export function resize(image: GrayImage, width: number, height: number): GrayImage {
  const out = new GrayImage(width, height);
  const sx = image.width / width;
  const sy = image.height / height;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      out.set(x, y, image.sample((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5));
    }
  }
  return out;
}

/** Average-pool to a grid x grid feature patch (partition by pixel index). */
export function averagePool(image: GrayImage, grid: number): Float64Array {
  const out = new Float64Array(grid * grid);
  const counts = new Float64Array(grid * grid);
  for (let y = 0; y < image.height; y++) {
    const gy = Math.min(Math.floor((y * grid) / image.height), grid - 1);
    for (let x = 0; x < image.width; x++) {
      const gx = Math.min(Math.floor((x * grid) / image.width), grid - 1);
      out[gy * grid + gx] += image.at(x, y);
      counts[gy * grid + gx] += 1;
    }
  }
  for (let i = 0; i < out.length; i++) out[i] /= counts[i] || 1;
  return out;
}
