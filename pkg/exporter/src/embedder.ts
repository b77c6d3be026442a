import { env, pipeline } from "@xenova/transformers";

export type EmbedFn = (texts: string[]) => Promise<number[][]>;

function configureHub(): void {
  // HF_ENDPOINT mirrors the Python hub client convention: point model
  // downloads at an alternative host (e.g. an internal proxy).
  const endpoint = process.env.HF_ENDPOINT;
  if (endpoint) {
    env.remoteHost = endpoint.endsWith("/") ? endpoint : endpoint + "/";
    env.remotePathTemplate = "{model}/resolve/{revision}/";
  }
  if (process.env.TRANSFORMERS_CACHE) {
    env.cacheDir = process.env.TRANSFORMERS_CACHE;
  }
}

/**
 * Load a sentence-embedding model: mean pooling over token states with
 * L2 normalization, matching sentence-transformers semantics.
 */
export async function loadEmbedder(modelId: string): Promise<EmbedFn> {
  configureHub();
  const extractor = await pipeline("feature-extraction", modelId);
  return async (texts: string[]) => {
    const output = await extractor(texts, { pooling: "mean", normalize: true });
    return output.tolist() as number[][];
  };
}
