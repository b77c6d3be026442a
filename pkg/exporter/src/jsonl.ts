import { createHash } from "node:crypto";

export interface ExportRequest {
  key: string;
  text: string;
}

export function sha256Hex(text: string): string {
  return createHash("sha256").update(text, "utf8").digest("hex");
}

/**
 * Parse a requests.jsonl payload: one {key, text} object per line, where
 * key must be the sha256 of the exact text and keys must be unique.
 */
export function parseRequests(content: string): ExportRequest[] {
  const requests: ExportRequest[] = [];
  const seen = new Set<string>();
  const lines = content.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new Error(`line ${i + 1}: not valid JSON (${(err as Error).message})`);
    }
    const { key, text } = row as Partial<ExportRequest>;
    if (typeof key !== "string" || typeof text !== "string") {
      throw new Error(`line ${i + 1}: expected {key, text} strings`);
    }
    if (sha256Hex(text) !== key) {
      throw new Error(`line ${i + 1}: key ${key} is not the sha256 of its text`);
    }
    if (seen.has(key)) {
      throw new Error(`line ${i + 1}: duplicate key ${key}`);
    }
    seen.add(key);
    requests.push({ key, text });
  }
  return requests;
}
