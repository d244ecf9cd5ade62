#!/usr/bin/env node
import { accessSync, constants } from "node:fs";
import process from "node:process";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { type AdapterConfig, DEFAULT_CONFIG, serve } from "./server.js";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .option("checkpoint", {
      type: "string",
      describe: "model checkpoint path; must be readable at startup",
    })
    .option("device", {
      type: "string",
      default: DEFAULT_CONFIG.device,
      describe: "device selector (accepted for interface parity)",
    })
    .option("min-mask-area", {
      type: "number",
      default: DEFAULT_CONFIG.minMaskArea,
      describe: "drop proposals smaller than this many pixels",
    })
    .option("score-source", {
      type: "string",
      choices: ["confidence"] as const,
      default: DEFAULT_CONFIG.scoreSource,
      describe: "where segment scores come from",
    })
    .option("name", {
      type: "string",
      default: DEFAULT_CONFIG.name,
      describe: "adapter name reported in the ready reply",
    })
    .strict()
    .parse();

  if (!Number.isInteger(argv.minMaskArea) || argv.minMaskArea < 0) {
    process.stderr.write("error: --min-mask-area must be a nonnegative integer\n");
    return 2;
  }
  // the checkpoint must be readable before any ready reply goes out
  if (argv.checkpoint !== undefined) {
    try {
      accessSync(argv.checkpoint, constants.R_OK);
    } catch {
      process.stderr.write(`error: checkpoint not readable: ${argv.checkpoint}\n`);
      return 2;
    }
  }

  const cfg: AdapterConfig = {
    name: argv.name,
    checkpoint: argv.checkpoint ?? null,
    device: argv.device,
    minMaskArea: argv.minMaskArea,
    scoreSource: argv.scoreSource as "confidence",
  };
  await serve(process.stdin, process.stdout, cfg);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`fatal: ${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  },
);
