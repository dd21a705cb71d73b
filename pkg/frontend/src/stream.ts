// Server-sent-events reader over fetch streams. Works in browsers and in
// node 20, unlike the EventSource global, and lets us send the bearer
// token as a query parameter the server accepts for stream clients.

export interface SSEFrame {
  id: string | null;
  data: string;
}

/** Incremental parser: feed raw chunks, get completed frames. */
export class SSEParser {
  private buffer = '';

  push(chunk: string): SSEFrame[] {
    this.buffer += chunk;
    const frames: SSEFrame[] = [];
    let index: number;
    while ((index = this.buffer.indexOf('\n\n')) >= 0) {
      const raw = this.buffer.slice(0, index);
      this.buffer = this.buffer.slice(index + 2);
      const frame = this.parseFrame(raw);
      if (frame) frames.push(frame);
    }
    return frames;
  }

  private parseFrame(raw: string): SSEFrame | null {
    let id: string | null = null;
    const data: string[] = [];
    for (const line of raw.split('\n')) {
      if (line.startsWith(':')) continue; // comment / heartbeat
      if (line.startsWith('id: ')) id = line.slice(4);
      else if (line.startsWith('data: ')) data.push(line.slice(6));
    }
    if (data.length === 0) return null;
    return { id, data: data.join('\n') };
  }
}

export interface StreamOptions {
  url: string;
  onFrame: (frame: SSEFrame) => void;
  onError?: (error: unknown) => void;
  signal?: AbortSignal;
}

/** Read frames until the stream closes or the signal aborts. */
export async function consumeStream(options: StreamOptions): Promise<void> {
  const parser = new SSEParser();
  try {
    const resp = await fetch(options.url, { signal: options.signal });
    if (!resp.ok || !resp.body) {
      throw new Error(`stream rejected: ${resp.status}`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
        options.onFrame(frame);
      }
    }
  } catch (error) {
    if (options.signal?.aborted) return;
    options.onError?.(error);
  }
}
