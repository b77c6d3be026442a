/**
 * Embedding-cache file writer. The downstream engine reads:
 *   line 1:  dim=<d> provider=<name>
 *   lines:   <sha256-key><TAB><d space-separated decimals, 9 significant digits>
 * Rows are sorted by key so repeated exports diff cleanly.
 */

export function formatValue(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`non-finite embedding value: ${x}`);
  }
  // toPrecision(9) then re-parse: 9 significant digits without the
  // trailing zeros toPrecision alone would keep.
  return Number(x.toPrecision(9)).toString();
}

export function formatCache(entries: Map<string, number[]>, provider: string): string {
  let dim: number | null = null;
  for (const [key, vector] of entries) {
    if (dim === null) dim = vector.length;
    if (vector.length !== dim) {
      throw new Error(`mixed dims: key ${key} has ${vector.length}, expected ${dim}`);
    }
  }
  const lines = [`dim=${dim ?? 0} provider=${provider}`];
  for (const key of [...entries.keys()].sort()) {
    const values = entries.get(key)!.map(formatValue).join(" ");
    lines.push(`${key}\t${values}`);
  }
  return lines.join("\n") + "\n";
}
