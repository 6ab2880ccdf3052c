/**
 * EMB1 binary embedding files, byte-compatible with the Python library's
 * reader: little-endian, magic "EMB1", u16 version 1, u8 dtype 1 (f32),
 * u8 reserved 0, u32 dim, u64 count, then per record a u16
 * length-prefixed UTF-8 image id and dim f32 values.
 */
import * as fs from 'node:fs';

export class FormatError extends Error {}
export class TruncationError extends Error {}

export interface EmbeddingRecord {
  imageId: string;
  vector: Float32Array;
}

const MAGIC = Buffer.from('EMB1', 'ascii');
const VERSION = 1;
const DTYPE_F32 = 1;
const HEADER_SIZE = 4 + 2 + 1 + 1 + 4 + 8;

export function encodeEmb1(records: EmbeddingRecord[], dim: number): Buffer {
  const header = Buffer.alloc(HEADER_SIZE);
  MAGIC.copy(header, 0);
  header.writeUInt16LE(VERSION, 4);
  header.writeUInt8(DTYPE_F32, 6);
  header.writeUInt8(0, 7);
  header.writeUInt32LE(dim, 8);
  header.writeBigUInt64LE(BigInt(records.length), 12);
  const parts = [header];
  for (const record of records) {
    if (record.vector.length !== dim) {
      throw new FormatError(`record ${record.imageId} has dim ${record.vector.length}, expected ${dim}`);
    }
    for (const v of record.vector) {
      if (!Number.isFinite(v)) {
        throw new FormatError(`record ${record.imageId} contains a non-finite value`);
      }
    }
    const id = Buffer.from(record.imageId, 'utf-8');
    if (id.length > 0xffff) {
      throw new FormatError(`image id ${record.imageId} exceeds 65535 encoded bytes`);
    }
    const lenBuf = Buffer.alloc(2);
    lenBuf.writeUInt16LE(id.length, 0);
    const vec = Buffer.alloc(4 * dim);
    for (let i = 0; i < dim; i++) vec.writeFloatLE(record.vector[i], 4 * i);
    parts.push(lenBuf, id, vec);
  }
  return Buffer.concat(parts);
}

export function writeEmb1(path: string, records: EmbeddingRecord[], dim: number): void {
  fs.writeFileSync(path, encodeEmb1(records, dim));
}

export function readEmb1(path: string): { dim: number; records: EmbeddingRecord[] } {
  const data = fs.readFileSync(path);
  if (data.length < HEADER_SIZE) {
    throw new TruncationError(`${path}: shorter than the EMB1 header`);
  }
  if (!data.subarray(0, 4).equals(MAGIC)) {
    throw new FormatError(`${path}: bad magic`);
  }
  if (data.readUInt16LE(4) !== VERSION) {
    throw new FormatError(`${path}: unsupported version`);
  }
  if (data.readUInt8(6) !== DTYPE_F32 || data.readUInt8(7) !== 0) {
    throw new FormatError(`${path}: unsupported dtype or reserved byte`);
  }
  const dim = data.readUInt32LE(8);
  const count = Number(data.readBigUInt64LE(12));
  let offset = HEADER_SIZE;
  const records: EmbeddingRecord[] = [];
  for (let r = 0; r < count; r++) {
    if (offset + 2 > data.length) {
      throw new TruncationError(`${path}: truncated at record ${r}`);
    }
    const idLen = data.readUInt16LE(offset);
    offset += 2;
    if (offset + idLen + 4 * dim > data.length) {
      throw new TruncationError(`${path}: truncated at record ${r}`);
    }
    const imageId = data.subarray(offset, offset + idLen).toString('utf-8');
    offset += idLen;
    const vector = new Float32Array(dim);
    for (let i = 0; i < dim; i++) vector[i] = data.readFloatLE(offset + 4 * i);
    offset += 4 * dim;
    records.push({ imageId, vector });
  }
  if (offset !== data.length) {
    throw new FormatError(`${path}: trailing bytes after ${count} records`);
  }
  return { dim, records };
}
