#!/usr/bin/env node
import { parseArgs } from "node:util";

import { loadEmbedder } from "./embedder.js";
import { runExport } from "./export.js";

const USAGE = `Usage: embed-exporter export --model <id> --in requests.jsonl --out cache.tsv [--batch-size 16]

Reads {key, text} JSON lines, embeds every text with the given
sentence-embedding model, and writes the engine's embedding-cache file.
Set HF_ENDPOINT to download models through a mirror.`;

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "--help" || command === "-h" || command === undefined) {
    console.log(USAGE);
    return command === undefined ? 1 : 0;
  }
  if (command !== "export") {
    console.error(`unknown command: ${command}\n${USAGE}`);
    return 1;
  }

  let values;
  try {
    ({ values } = parseArgs({
      args: rest,
      options: {
        model: { type: "string" },
        in: { type: "string" },
        out: { type: "string" },
        "batch-size": { type: "string", default: "16" },
      },
    }));
  } catch (err) {
    console.error(`${(err as Error).message}\n${USAGE}`);
    return 1;
  }
  const { model, in: input, out } = values;
  if (!model || !input || !out) {
    console.error(`--model, --in, and --out are required\n${USAGE}`);
    return 1;
  }

  const embed = await loadEmbedder(model);
  const result = await runExport(
    { input, output: out, provider: model, batchSize: Number(values["batch-size"]) },
    embed,
  );
  console.log(`wrote ${result.written} embeddings (dim ${result.dim}) to ${out}`);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err?.message ?? err}`);
    process.exit(1);
  },
);
