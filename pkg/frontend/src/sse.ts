import type { StreamMsg } from './types';

/**
 * Yield the data payload of each server-sent event in a byte stream.
 *
 * Handles chunk boundaries falling anywhere, CRLF line endings, and
 * multi-line `data:` fields (joined with newlines per the SSE spec).
 */
export async function* sseData(stream: ReadableStream<Uint8Array>): AsyncGenerator<string> {
  const reader = stream.getReader();
  const decoder = new TextDecoder();
  let buffer = '';
  try {
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let sep: number;
      while ((sep = buffer.search(/\r?\n\r?\n/)) >= 0) {
        const rawEvent = buffer.slice(0, sep);
        buffer = buffer.slice(sep).replace(/^\r?\n\r?\n/, '');
        const data = rawEvent
          .split(/\r?\n/)
          .filter((line) => line.startsWith('data:'))
          .map((line) => line.slice(5).replace(/^ /, ''))
          .join('\n');
        if (data) yield data;
      }
    }
  } finally {
    reader.releaseLock();
  }
}

/** Parse one SSE data payload into a typed stream message. */
export function parseStreamMsg(data: string): StreamMsg {
  const msg = JSON.parse(data) as StreamMsg;
  if (msg.type !== 'tile' && msg.type !== 'done') {
    throw new Error(`unknown stream message type: ${JSON.stringify(msg)}`);
  }
  return msg;
}

/** Convenience: typed messages from a response body. */
export async function* streamMessages(
  stream: ReadableStream<Uint8Array>,
): AsyncGenerator<StreamMsg> {
  for await (const data of sseData(stream)) {
    yield parseStreamMsg(data);
  }
}
