// Run-length codec for binary masks. Runs alternate 0-run / 1-run over the
// flattened row-major grid and always start with a 0-run (possibly length
// zero); this is the wire format for every mask crossing the protocol.

export function encode(mask: Uint8Array): number[] {
  const n = mask.length;
  if (n === 0) {
    return [0];
  }
  const runs: number[] = [];
  let prev = mask[0] ? 1 : 0;
  let count = 1;
  for (let i = 1; i < n; i += 1) {
    const bit = mask[i] ? 1 : 0;
    if (bit === prev) {
      count += 1;
    } else {
      runs.push(count);
      prev = bit;
      count = 1;
    }
  }
  runs.push(count);
  if (mask[0]) {
    runs.unshift(0);
  }
  return runs;
}

// Decode into exactly `size` cells: overlong encodings are clipped, short
// ones padded with zeros. Negative or non-integer run lengths are rejected.
export function decode(runs: number[], size: number): Uint8Array {
  const out = new Uint8Array(size);
  let pos = 0;
  let value = 0;
  for (const run of runs) {
    if (!Number.isInteger(run) || run < 0) {
      throw new Error(`bad run length ${run}`);
    }
    if (pos >= size) {
      break;
    }
    if (value) {
      out.fill(1, pos, Math.min(pos + run, size));
    }
    pos += run;
    value = 1 - value;
  }
  return out;
}

export function totalLength(runs: number[]): number {
  let sum = 0;
  for (const run of runs) {
    sum += run;
  }
  return sum;
}
