import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import type { StreamMsg, TileMsg } from '../src/types';

// vitest runs with the package root as cwd; import.meta.url is not a file
// URL under the jsdom environment.
const FIXTURES = join(process.cwd(), 'tests', 'fixtures');

export const NINE_TILES_BYTES: Uint8Array = readFileSync(join(FIXTURES, 'nine_tiles.sse'));

export const EXPLANATION = JSON.parse(
  readFileSync(join(FIXTURES, 'explanation.json'), 'utf-8'),
);

/** Wrap bytes in a ReadableStream, split into fixed-size chunks. */
export function byteStream(bytes: Uint8Array, chunkSize = 64): ReadableStream<Uint8Array> {
  let offset = 0;
  return new ReadableStream({
    pull(controller) {
      if (offset >= bytes.length) {
        controller.close();
        return;
      }
      controller.enqueue(bytes.slice(offset, offset + chunkSize));
      offset += chunkSize;
    },
  });
}

export function fixtureMessages(): StreamMsg[] {
  const text = new TextDecoder().decode(NINE_TILES_BYTES);
  return text
    .split('\n')
    .filter((line) => line.startsWith('data: '))
    .map((line) => JSON.parse(line.slice(6)) as StreamMsg);
}

export function fixtureFinalTiles(): TileMsg[] {
  return fixtureMessages().filter(
    (msg): msg is TileMsg => msg.type === 'tile' && msg.phase === 'final',
  );
}
