#!/usr/bin/env node
/**
 * lookalike-extract: face images -> EMB1 embedding file.
 *
 *   extract --images DIR --map CSV --model PATH [--crop 182]
 *           [--margin 2.6] --out FILE.emb [--map-out FILE.csv]
 *
 * Exit 0 on success (per-image failures are logged to stderr, one line
 * each), 1 on data errors, 2 on usage errors.
 */
import { DEFAULT_CROP, DEFAULT_MARGIN, readImageMapCsv, runExtraction } from './extract.js';
import { loadModel, ModelLoadError } from './model.js';

interface Args {
  images: string;
  map: string;
  model: string;
  out: string;
  crop: number;
  margin: number;
  mapOut?: string;
}

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`);
  console.error(
    'usage: lookalike-extract extract --images DIR --map CSV --model PATH ' +
    `[--crop ${DEFAULT_CROP}] [--margin ${DEFAULT_MARGIN}] --out FILE.emb [--map-out FILE.csv]`);
  process.exit(2);
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== 'extract') usage(`unknown command ${argv[0] ?? ''}`);
  const values = new Map<string, string>();
  for (let i = 1; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith('--') || i + 1 >= argv.length) usage(`bad argument ${flag}`);
    values.set(flag.slice(2), argv[i + 1]);
  }
  for (const required of ['images', 'map', 'model', 'out']) {
    if (!values.has(required)) usage(`--${required} is required`);
  }
  const crop = values.has('crop') ? Number(values.get('crop')) : DEFAULT_CROP;
  const margin = values.has('margin') ? Number(values.get('margin')) : DEFAULT_MARGIN;
  if (!Number.isInteger(crop) || crop < 8) usage('--crop must be an integer >= 8');
  if (!Number.isFinite(margin) || margin <= 0) usage('--margin must be > 0');
  return {
    images: values.get('images')!,
    map: values.get('map')!,
    model: values.get('model')!,
    out: values.get('out')!,
    crop,
    margin,
    mapOut: values.get('map-out'),
  };
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  try {
    const model = loadModel(args.model);
    const imageMap = readImageMapCsv(args.map);
    const result = runExtraction({
      imagesDir: args.images,
      imageMap,
      model,
      cropSize: args.crop,
      marginFactor: args.margin,
      outPath: args.out,
      mapOutPath: args.mapOut,
    });
    for (const failure of result.failures) {
      console.error(`skip ${failure.imageId}: ${failure.reason}`);
    }
    console.log(
      `extract: ${result.written} of ${imageMap.length} images embedded ` +
      `(dim ${result.dim}) -> ${args.out}`);
    return 0;
  } catch (err) {
    if (err instanceof ModelLoadError || err instanceof Error) {
      console.error(`ERROR ${JSON.stringify({ kind: err.constructor.name, message: err.message })}`);
      return 1;
    }
    throw err;
  }
}

import { pathToFileURL } from 'node:url';

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
