import { z } from "zod";

export const PROTOCOL_VERSION = 1;

const runLengths = z.array(z.number().int().nonnegative());

export const helloSchema = z
  .object({
    type: z.literal("hello"),
    version: z.number().int(),
  })
  .strict();

export const segmentRequestSchema = z
  .object({
    type: z.literal("segment"),
    frame_id: z.number().int(),
    width: z.number().int().positive(),
    height: z.number().int().positive(),
    mask_rle: runLengths,
  })
  .strict();

export const readySchema = z
  .object({
    type: z.literal("ready"),
    name: z.string(),
  })
  .strict();

export const segmentsResponseSchema = z
  .object({
    type: z.literal("segments"),
    frame_id: z.number().int(),
    segments: z.array(
      z
        .object({
          score: z.number().min(0).max(1),
          mask_rle: runLengths,
        })
        .strict(),
    ),
  })
  .strict();

// frame_id is present on per-frame failures; handshake-time errors have none
export const errorResponseSchema = z
  .object({
    type: z.literal("error"),
    frame_id: z.number().int().optional(),
    message: z.string(),
  })
  .strict();

export const responseSchema = z.union([
  readySchema,
  segmentsResponseSchema,
  errorResponseSchema,
]);

export type Hello = z.infer<typeof helloSchema>;
export type SegmentRequest = z.infer<typeof segmentRequestSchema>;
export type Ready = z.infer<typeof readySchema>;
export type SegmentsResponse = z.infer<typeof segmentsResponseSchema>;
export type ErrorResponse = z.infer<typeof errorResponseSchema>;
export type Response = z.infer<typeof responseSchema>;
