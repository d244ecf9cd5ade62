import * as readline from "node:readline";
import type { Readable, Writable } from "node:stream";

import {
  PROTOCOL_VERSION,
  type Response,
  helloSchema,
  segmentRequestSchema,
} from "./protocol.js";
import { decode } from "./rle.js";
import { DEFAULT_MIN_OVERLAP, proposeSegments } from "./segmenter.js";

export interface AdapterConfig {
  name: string;
  checkpoint: string | null;
  device: string;
  minMaskArea: number;
  scoreSource: "confidence";
}

export const DEFAULT_CONFIG: AdapterConfig = {
  name: "bev-segment-adapter",
  checkpoint: null,
  device: "cpu",
  minMaskArea: 1,
  scoreSource: "confidence",
};

// One request in flight: the loop reads a line, replies, then reads the next.
// A bad line gets an error reply and the loop continues; only EOF ends it.
export async function serve(
  input: Readable,
  output: Writable,
  cfg: AdapterConfig = DEFAULT_CONFIG,
): Promise<void> {
  const reply = (msg: Response) => {
    output.write(JSON.stringify(msg) + "\n");
  };
  let handshaken = false;
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  for await (const line of rl) {
    if (line.trim() === "") {
      continue;
    }
    let doc: unknown;
    try {
      doc = JSON.parse(line);
    } catch {
      reply({ type: "error", message: "request is not JSON" });
      continue;
    }

    const hello = helloSchema.safeParse(doc);
    if (hello.success) {
      if (hello.data.version !== PROTOCOL_VERSION) {
        reply({
          type: "error",
          message: `unsupported protocol version ${hello.data.version}`,
        });
        continue;
      }
      handshaken = true;
      reply({ type: "ready", name: cfg.name });
      continue;
    }

    const request = segmentRequestSchema.safeParse(doc);
    if (!request.success) {
      const frameId = (doc as { frame_id?: unknown })?.frame_id;
      reply({
        type: "error",
        ...(typeof frameId === "number" && Number.isInteger(frameId)
          ? { frame_id: frameId }
          : {}),
        message: "malformed request",
      });
      continue;
    }
    if (!handshaken) {
      reply({
        type: "error",
        frame_id: request.data.frame_id,
        message: "handshake required before segment requests",
      });
      continue;
    }

    const { frame_id, width, height, mask_rle } = request.data;
    try {
      const fg = decode(mask_rle, width * height);
      const segments = proposeSegments(fg, width, height, {
        minMaskArea: cfg.minMaskArea,
        minOverlap: DEFAULT_MIN_OVERLAP,
      });
      reply({ type: "segments", frame_id, segments });
    } catch (err) {
      reply({
        type: "error",
        frame_id,
        message: err instanceof Error ? err.message : String(err),
      });
    }
  }
}
