// NDJSON stream consumption over repeated long polls, resuming with
// after=<last seq> so reconnects never duplicate or skip messages.

import type { ApiClient } from "./api.js";
import type { StreamMessage } from "./types.js";

export function parseNdjson(text: string): StreamMessage[] {
  const messages: StreamMessage[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) {
      continue;
    }
    messages.push(JSON.parse(trimmed) as StreamMessage);
  }
  return messages;
}

export class StreamClient {
  private cursor = 0;
  private stopped = false;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    private readonly onMessages: (messages: StreamMessage[]) => void,
    private readonly waitSeconds = 5,
  ) {}

  get lastSeq(): number {
    return this.cursor;
  }

  /** One long poll; returns the messages delivered (tests drive this directly). */
  async pollOnce(): Promise<StreamMessage[]> {
    const text = await this.api.pollStream(this.sessionId, this.cursor, this.waitSeconds);
    const messages = parseNdjson(text).filter((m) => m.seq > this.cursor);
    if (messages.length > 0) {
      this.cursor = messages[messages.length - 1].seq;
      this.onMessages(messages);
    }
    return messages;
  }

  async run(): Promise<void> {
    this.stopped = false;
    while (!this.stopped) {
      try {
        await this.pollOnce();
      } catch {
        // Transient network failure: back off one poll interval and resume
        // from the cursor; long-poll semantics make this loss-free.
        await new Promise((resolve) => setTimeout(resolve, this.waitSeconds * 200));
      }
    }
  }

  stop(): void {
    this.stopped = true;
  }
}
