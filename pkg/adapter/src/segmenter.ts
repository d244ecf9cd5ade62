// Mask proposal generation standing in for a zero-shot model call.
//
// A real automatic mask generator segments the whole image, foreground and
// background regions alike; the caller-side contract is that only proposals
// overlapping the requested foreground survive. The stand-in reproduces that
// shape: it proposes every connected region of both polarities, then applies
// the same overlap filter a model-backed build would.

import { encode } from "./rle.js";

export interface Proposal {
  mask: Uint8Array;
  area: number;
}

export interface SegmenterConfig {
  minMaskArea: number;
  minOverlap: number;
}

export const DEFAULT_MIN_OVERLAP = 0.3;

// Foreground uses 8-connectivity, background 4-connectivity; mixing the two
// keeps the polarities topologically consistent (a diagonal foreground chain
// does not also read as connected background).
const NEIGHBORS_8 = [
  [-1, -1], [-1, 0], [-1, 1],
  [0, -1], [0, 1],
  [1, -1], [1, 0], [1, 1],
];
const NEIGHBORS_4 = [
  [-1, 0], [0, -1], [0, 1], [1, 0],
];

export function connectedRegions(
  grid: Uint8Array,
  width: number,
  height: number,
  value: 0 | 1,
): Proposal[] {
  const neighbors = value === 1 ? NEIGHBORS_8 : NEIGHBORS_4;
  const seen = new Uint8Array(grid.length);
  const regions: Proposal[] = [];
  for (let start = 0; start < grid.length; start += 1) {
    if (seen[start] || (grid[start] ? 1 : 0) !== value) {
      continue;
    }
    const mask = new Uint8Array(grid.length);
    const queue = [start];
    seen[start] = 1;
    let area = 0;
    while (queue.length > 0) {
      const idx = queue.pop()!;
      mask[idx] = 1;
      area += 1;
      const row = Math.floor(idx / width);
      const col = idx % width;
      for (const [dr, dc] of neighbors) {
        const r = row + dr!;
        const c = col + dc!;
        if (r < 0 || r >= height || c < 0 || c >= width) {
          continue;
        }
        const next = r * width + c;
        if (!seen[next] && (grid[next] ? 1 : 0) === value) {
          seen[next] = 1;
          queue.push(next);
        }
      }
    }
    regions.push({ mask, area });
  }
  return regions;
}

// Fraction of the proposal's pixels that land on foreground.
export function foregroundOverlap(proposal: Proposal, fg: Uint8Array): number {
  let hit = 0;
  for (let i = 0; i < proposal.mask.length; i += 1) {
    if (proposal.mask[i] && fg[i]) {
      hit += 1;
    }
  }
  return proposal.area === 0 ? 0 : hit / proposal.area;
}

export function filterProposals(
  proposals: Proposal[],
  fg: Uint8Array,
  cfg: SegmenterConfig,
): { proposal: Proposal; overlap: number }[] {
  const kept: { proposal: Proposal; overlap: number }[] = [];
  for (const proposal of proposals) {
    if (proposal.area < cfg.minMaskArea) {
      continue;
    }
    const overlap = foregroundOverlap(proposal, fg);
    if (overlap >= cfg.minOverlap) {
      kept.push({ proposal, overlap });
    }
  }
  return kept;
}

// Confidence of the stand-in is the overlap fraction itself: certainty that
// the proposal is the requested foreground rather than scenery.
export function proposeSegments(
  fg: Uint8Array,
  width: number,
  height: number,
  cfg: SegmenterConfig,
): { score: number; mask_rle: number[] }[] {
  const proposals = [
    ...connectedRegions(fg, width, height, 1),
    ...connectedRegions(fg, width, height, 0),
  ];
  return filterProposals(proposals, fg, cfg).map(({ proposal, overlap }) => ({
    score: overlap,
    mask_rle: encode(proposal.mask),
  }));
}
