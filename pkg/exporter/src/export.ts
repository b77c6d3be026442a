import { mkdir, readFile, writeFile } from "node:fs/promises";
import { dirname } from "node:path";

import { formatCache } from "./cache.js";
import type { EmbedFn } from "./embedder.js";
import { parseRequests } from "./jsonl.js";

export interface ExportOptions {
  input: string;
  output: string;
  provider: string;
  batchSize?: number;
}

export interface ExportResult {
  written: number;
  dim: number;
}

/**
 * Read an export-request file, embed every text, and write the cache file.
 * The embed function is injected so the format path is testable offline.
 */
export async function runExport(options: ExportOptions, embed: EmbedFn): Promise<ExportResult> {
  const requests = parseRequests(await readFile(options.input, "utf8"));
  const batchSize = options.batchSize ?? 16;

  const entries = new Map<string, number[]>();
  for (let start = 0; start < requests.length; start += batchSize) {
    const batch = requests.slice(start, start + batchSize);
    const vectors = await embed(batch.map((r) => r.text));
    if (vectors.length !== batch.length) {
      throw new Error(`embedder returned ${vectors.length} vectors for ${batch.length} texts`);
    }
    batch.forEach((request, i) => entries.set(request.key, vectors[i]));
  }

  const dim = entries.size > 0 ? entries.values().next().value!.length : 0;
  await mkdir(dirname(options.output), { recursive: true });
  await writeFile(options.output, formatCache(entries, options.provider), "utf8");
  return { written: entries.size, dim };
}
